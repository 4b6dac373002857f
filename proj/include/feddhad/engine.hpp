#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "feddhad/dataset.hpp"
#include "feddhad/model.hpp"

namespace feddhad {

// FLOP convention: 1 multiply-add = 2 FLOPs, bias add = 1, hidden rectifier
// = 1 per unit; a backward pass costs twice its forward pass. Only kept
// units are counted under a mask.
struct FlopMeter {
    uint64_t forward_flops = 0;
    uint64_t backward_flops = 0;
    double cumulative_mflops = 0.0;

    void record(uint64_t fwd, uint64_t bwd) {
        forward_flops += fwd;
        backward_flops += bwd;
        cumulative_mflops += static_cast<double>(fwd + bwd) * 1e-6;
    }
    void merge(const FlopMeter& other) { record(other.forward_flops, other.backward_flops); }
};

struct SampleBatch {
    const Dataset* data = nullptr;
    std::span<const int> indices;

    int size() const { return static_cast<int>(indices.size()); }
};

struct ForwardResult {
    std::vector<double> logits; // batch-major, size B * C
    double loss = 0.0;          // mean cross-entropy over the batch
    FlopMeter meter;
};

struct BackwardResult {
    GradVector grad;
    double loss = 0.0;
    FlopMeter meter;
};

// mask == nullptr means no dropout (identity mask).
ForwardResult forward(const ModelSpec& spec, const ParamVector& params,
                      const SampleBatch& batch, const UnitMask* mask = nullptr);

BackwardResult backward(const ModelSpec& spec, const ParamVector& params,
                        const SampleBatch& batch, const UnitMask* mask = nullptr);

ParamVector sgd_step(const ParamVector& params, const GradVector& grad, double lr);

// lr0 * decay^round
double decayed_lr(double lr0, double decay, int round);

ParamVector init_params(const ModelSpec& spec, uint64_t seed);

// Top-1 accuracy and mean cross-entropy over a whole dataset.
struct Evaluation {
    double accuracy = 0.0;
    double loss = 0.0;
};
Evaluation evaluate(const ModelSpec& spec, const ParamVector& params, const Dataset& test_set);

// Forward FLOPs of one sample with every unit kept.
uint64_t forward_flops_per_sample(const ModelSpec& spec);

} // namespace feddhad
