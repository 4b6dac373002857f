#include "feddhad/engine.hpp"

#include <cmath>

#include "feddhad/rng.hpp"

#include "engine_detail.hpp"

namespace feddhad {

namespace {

void check_inputs(const ModelSpec& spec, const ParamVector& params,
                  const SampleBatch& batch, const UnitMask* mask) {
    spec.validate();
    params.check_shape(spec);
    if (!batch.data || batch.indices.empty())
        throw structural_error("batch must reference a dataset and be non-empty");
    if (batch.data->dim != spec.input_dim())
        throw structural_error("batch feature dimension does not match model input");
    if (batch.data->class_count != spec.output_dim())
        throw structural_error("dataset class count does not match model output");
    if (mask) mask->check_shape(spec);
}

} // namespace

ForwardResult forward(const ModelSpec& spec, const ParamVector& params,
                      const SampleBatch& batch, const UnitMask* mask) {
    check_inputs(spec, params, batch, mask);
    const auto blocks = layer_blocks(spec);
    const double* maskv = mask ? mask->values.data() : nullptr;
    const int batch_size = batch.size();
    const int classes = spec.output_dim();

    ForwardResult out;
    out.logits.resize(static_cast<std::size_t>(batch_size) * static_cast<std::size_t>(classes));
    double total = 0.0;
    for (int s = 0; s < batch_size; ++s) {
        const int idx = batch.indices[static_cast<std::size_t>(s)];
        total += detail::sample_loss<double>(
            spec, blocks, params.values.data(), batch.data->sample(idx),
            batch.data->labels[static_cast<std::size_t>(idx)], maskv, nullptr,
            out.logits.data() + static_cast<std::size_t>(s) * static_cast<std::size_t>(classes));
    }
    out.loss = total / batch_size;
    const uint64_t fwd = static_cast<uint64_t>(batch_size) * detail::masked_forward_flops(spec, mask);
    out.meter.record(fwd, 0);
    return out;
}

BackwardResult backward(const ModelSpec& spec, const ParamVector& params,
                        const SampleBatch& batch, const UnitMask* mask) {
    check_inputs(spec, params, batch, mask);
    const auto blocks = layer_blocks(spec);
    const double* maskv = mask ? mask->values.data() : nullptr;
    const int batch_size = batch.size();

    BackwardResult out;
    out.grad = GradVector::zeros(spec);
    double total = 0.0;
    for (int s = 0; s < batch_size; ++s) {
        const int idx = batch.indices[static_cast<std::size_t>(s)];
        total += detail::sample_loss<double>(spec, blocks, params.values.data(),
                                             batch.data->sample(idx),
                                             batch.data->labels[static_cast<std::size_t>(idx)],
                                             maskv, out.grad.values.data(), nullptr);
    }
    const double inv = 1.0 / batch_size;
    out.loss = total * inv;
    for (double& g : out.grad.values) g *= inv;
    const uint64_t fwd = static_cast<uint64_t>(batch_size) * detail::masked_forward_flops(spec, mask);
    out.meter.record(fwd, 2 * fwd);
    return out;
}

ParamVector sgd_step(const ParamVector& params, const GradVector& grad, double lr) {
    if (lr <= 0.0) throw structural_error("learning rate must be positive");
    if (grad.values.size() != params.values.size())
        throw structural_error("gradient shape does not match parameters");
    ParamVector next = params;
    for (std::size_t i = 0; i < next.values.size(); ++i) {
        const double g = grad.values[i];
        if (!std::isfinite(g)) throw numerical_error("non-finite gradient in SGD step");
        next.values[i] -= lr * g;
    }
    return next;
}

double decayed_lr(double lr0, double decay, int round) {
    return lr0 * std::pow(decay, round);
}

ParamVector init_params(const ModelSpec& spec, uint64_t seed) {
    spec.validate();
    RngStream rng(seed);
    ParamVector params = ParamVector::zeros(spec);
    for (const auto& b : layer_blocks(spec)) {
        const double stddev = std::sqrt(2.0 / b.fan_in);
        for (int u = 0; u < b.fan_out; ++u) {
            double* w = params.values.data() + b.unit_offset(u);
            for (int i = 0; i < b.fan_in; ++i) w[i] = rng.normal(0.0, stddev);
            w[b.fan_in] = 0.0;
        }
    }
    return params;
}

Evaluation evaluate(const ModelSpec& spec, const ParamVector& params, const Dataset& test_set) {
    if (test_set.size() == 0) throw structural_error("test set must be non-empty");
    std::vector<int> all(static_cast<std::size_t>(test_set.size()));
    for (int i = 0; i < test_set.size(); ++i) all[static_cast<std::size_t>(i)] = i;
    const auto result = forward(spec, params, SampleBatch{&test_set, all});
    const int classes = spec.output_dim();
    int correct = 0;
    for (int s = 0; s < test_set.size(); ++s) {
        const double* row = result.logits.data() + static_cast<std::size_t>(s) * static_cast<std::size_t>(classes);
        int best = 0;
        for (int c = 1; c < classes; ++c)
            if (row[c] > row[best]) best = c;
        if (best == test_set.labels[static_cast<std::size_t>(s)]) ++correct;
    }
    return {static_cast<double>(correct) / test_set.size(), result.loss};
}

uint64_t forward_flops_per_sample(const ModelSpec& spec) {
    return detail::masked_forward_flops(spec, nullptr);
}

} // namespace feddhad
