#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "feddhad/engine.hpp"
#include "feddhad/errors.hpp"
#include "feddhad/model.hpp"

#include "dual.hpp"

namespace feddhad::detail {

// One sample's loss, and optionally its (un-averaged) parameter gradient,
// accumulated into `grad`. Templated so the same backward pass produces
// exact Hessian columns when run on Dual parameters.
template <typename T>
T sample_loss(const ModelSpec& spec, const std::vector<LayerBlock>& blocks,
              const T* params, std::span<const double> x, int label,
              const double* mask, T* grad, double* logits_out) {
    const int dense_layers = static_cast<int>(blocks.size());
    std::vector<std::vector<T>> pre(static_cast<std::size_t>(dense_layers));
    std::vector<std::vector<T>> act(static_cast<std::size_t>(dense_layers));

    std::vector<T> input(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) input[i] = T(x[i]);

    const std::vector<T>* prev = &input;
    for (int l = 0; l < dense_layers; ++l) {
        const LayerBlock& b = blocks[static_cast<std::size_t>(l)];
        auto& z = pre[static_cast<std::size_t>(l)];
        z.assign(static_cast<std::size_t>(b.fan_out), T(0.0));
        for (int u = 0; u < b.fan_out; ++u) {
            const T* w = params + b.unit_offset(u);
            T s = w[b.fan_in]; // bias
            for (int i = 0; i < b.fan_in; ++i) s += w[i] * (*prev)[static_cast<std::size_t>(i)];
            z[static_cast<std::size_t>(u)] = s;
        }
        auto& a = act[static_cast<std::size_t>(l)];
        if (l + 1 < dense_layers) {
            a.assign(z.size(), T(0.0));
            const int moff = mask ? spec.hidden_offset(l + 1) : 0;
            for (int u = 0; u < b.fan_out; ++u) {
                T r = z[static_cast<std::size_t>(u)] > T(0.0) ? z[static_cast<std::size_t>(u)] : T(0.0);
                if (mask) {
                    const double mv = mask[moff + u];
                    r = mv == 0.0 ? T(0.0) : r * T(mv);
                }
                a[static_cast<std::size_t>(u)] = r;
            }
        } else {
            a = z;
        }
        prev = &a;
    }

    const auto& logits = act[static_cast<std::size_t>(dense_layers) - 1];
    const int classes = static_cast<int>(logits.size());
    T zmax = logits[0];
    for (const T& v : logits)
        if (v > zmax) zmax = v;
    if (!std::isfinite(value_of(zmax)))
        throw numerical_error("non-finite activation in forward pass");
    T expsum(0.0);
    for (const T& v : logits) expsum += exp(v - zmax);
    const T lse = log(expsum) + zmax;
    const T loss = lse - logits[static_cast<std::size_t>(label)];

    if (logits_out)
        for (int c = 0; c < classes; ++c) logits_out[c] = value_of(logits[static_cast<std::size_t>(c)]);
    if (!grad) return loss;

    // softmax - onehot at the head, then plain backprop.
    std::vector<T> delta(static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c)
        delta[static_cast<std::size_t>(c)] = exp(logits[static_cast<std::size_t>(c)] - zmax) / expsum;
    delta[static_cast<std::size_t>(label)] -= T(1.0);

    for (int l = dense_layers - 1; l >= 0; --l) {
        const LayerBlock& b = blocks[static_cast<std::size_t>(l)];
        const std::vector<T>& below = l == 0 ? input : act[static_cast<std::size_t>(l) - 1];
        for (int u = 0; u < b.fan_out; ++u) {
            T* g = grad + b.unit_offset(u);
            const T d = delta[static_cast<std::size_t>(u)];
            for (int i = 0; i < b.fan_in; ++i) g[i] += d * below[static_cast<std::size_t>(i)];
            g[b.fan_in] += d;
        }
        if (l == 0) break;
        std::vector<T> down(static_cast<std::size_t>(b.fan_in), T(0.0));
        for (int u = 0; u < b.fan_out; ++u) {
            const T* w = params + b.unit_offset(u);
            const T d = delta[static_cast<std::size_t>(u)];
            for (int i = 0; i < b.fan_in; ++i) down[static_cast<std::size_t>(i)] += d * w[i];
        }
        const auto& z = pre[static_cast<std::size_t>(l) - 1];
        const int moff = mask ? spec.hidden_offset(l) : 0;
        for (int i = 0; i < b.fan_in; ++i) {
            double gate = value_of(z[static_cast<std::size_t>(i)]) > 0.0 ? 1.0 : 0.0;
            if (mask) gate *= mask[moff + i];
            down[static_cast<std::size_t>(i)] *= T(gate);
        }
        delta = std::move(down);
    }
    return loss;
}

// Kept-unit FLOP count of one sample's forward pass.
inline uint64_t masked_forward_flops(const ModelSpec& spec, const UnitMask* mask) {
    const auto blocks = layer_blocks(spec);
    const int dense_layers = static_cast<int>(blocks.size());
    auto kept_in_layer = [&](int layer) -> uint64_t { // layer_sizes index
        if (layer == 0 || layer + 1 == static_cast<int>(spec.layer_sizes.size()) || !mask)
            return static_cast<uint64_t>(spec.layer_sizes[static_cast<std::size_t>(layer)]);
        uint64_t kept = 0;
        const int off = spec.hidden_offset(layer);
        for (int u = 0; u < spec.layer_sizes[static_cast<std::size_t>(layer)]; ++u)
            if (mask->values[static_cast<std::size_t>(off + u)] != 0.0) ++kept;
        return kept;
    };
    uint64_t flops = 0;
    for (int l = 0; l < dense_layers; ++l) {
        const uint64_t in = kept_in_layer(l);
        const uint64_t out = kept_in_layer(l + 1);
        flops += 2 * in * out + out;          // multiply-adds + bias adds
        if (l + 1 < dense_layers) flops += out; // rectifier
    }
    return flops;
}

} // namespace feddhad::detail
