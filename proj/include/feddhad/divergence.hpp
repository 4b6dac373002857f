#pragma once

#include <cstdint>
#include <vector>

#include "feddhad/dataset.hpp"
#include "feddhad/model.hpp"

namespace feddhad {

// Degrees below this are clamped so Eq.-11-style ratios stay finite.
inline constexpr double kDegreeFloor = 1e-6;

// Learned linear map from JS divergence to non-IID degree, one pair per
// device. Initialized to the identity map (scale 1, offset 0).
struct ControlParams {
    std::vector<double> scale;  // multiplies the JS divergence
    std::vector<double> offset; // added afterwards

    static ControlParams identity(int device_count) {
        return {std::vector<double>(static_cast<std::size_t>(device_count), 1.0),
                std::vector<double>(static_cast<std::size_t>(device_count), 0.0)};
    }
};

struct NonIIDReport {
    std::vector<double> js;     // per device, in [0, ln 2]
    std::vector<double> degree; // per device, >= kDegreeFloor
};

double kl(const LabelDistribution& p, const LabelDistribution& q);

// Always finite: both arguments are dominated by their mixture.
double js(const LabelDistribution& p_k, const LabelDistribution& p_m);

NonIIDReport noniid_degree(const std::vector<double>& js_values, const ControlParams& cp);

// Gradient-norm label-distribution estimate: class i gets softmax weight
// exp(beta / |grad_i|^2).
LabelDistribution estimate_distribution(const std::vector<GradVector>& per_class_grads,
                                        double estimation_beta);

struct PearsonResult {
    double r = 0.0;
    double p_value = 1.0;
};
PearsonResult pearson(const std::vector<double>& x, const std::vector<double>& y);

// Ground-truth non-IID measure: the gap between each device's local loss at
// the pooled optimum and at its own optimum. Test/diagnostic oracle only.
struct GammaOracle {
    std::vector<double> gamma;
    std::vector<double> residual_grad_norm; // per optimized model, pooled first
    bool converged = true;
};

struct GammaDevice {
    const Dataset* data = nullptr;
    std::vector<int> indices;
};

struct TrainingBudget {
    int max_iterations = 2000;
    double lr = 0.5;
    double grad_tol = 1e-6;
};

GammaOracle gamma_oracle(const std::vector<GammaDevice>& devices, const ModelSpec& model_spec,
                         const TrainingBudget& budget, uint64_t seed);

} // namespace feddhad
