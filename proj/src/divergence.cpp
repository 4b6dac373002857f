#include "feddhad/divergence.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>

#include "feddhad/engine.hpp"
#include "feddhad/errors.hpp"
#include "feddhad/rng.hpp"

namespace feddhad {

double kl(const LabelDistribution& p, const LabelDistribution& q) {
    if (p.probs.size() != q.probs.size())
        throw structural_error("KL arguments must have the same length");
    double sum = 0.0;
    for (std::size_t i = 0; i < p.probs.size(); ++i) {
        const double pi = p.probs[i];
        if (pi == 0.0) continue; // 0 * log(0/q) = 0
        if (q.probs[i] == 0.0)
            throw std::domain_error("KL undefined: q has zero mass where p does not");
        sum += pi * std::log(pi / q.probs[i]);
    }
    return sum;
}

double js(const LabelDistribution& p_k, const LabelDistribution& p_m) {
    if (p_k.probs.size() != p_m.probs.size())
        throw structural_error("JS arguments must have the same length");
    LabelDistribution mix;
    mix.probs.resize(p_k.probs.size());
    for (std::size_t i = 0; i < mix.probs.size(); ++i)
        mix.probs[i] = 0.5 * (p_k.probs[i] + p_m.probs[i]);
    return 0.5 * kl(p_k, mix) + 0.5 * kl(p_m, mix);
}

NonIIDReport noniid_degree(const std::vector<double>& js_values, const ControlParams& cp) {
    if (js_values.size() != cp.scale.size() || js_values.size() != cp.offset.size())
        throw structural_error("control parameter length does not match device count");
    NonIIDReport report;
    report.js = js_values;
    report.degree.resize(js_values.size());
    for (std::size_t k = 0; k < js_values.size(); ++k)
        report.degree[k] = std::max(cp.scale[k] * js_values[k] + cp.offset[k], kDegreeFloor);
    return report;
}

LabelDistribution estimate_distribution(const std::vector<GradVector>& per_class_grads,
                                        double estimation_beta) {
    if (per_class_grads.size() < 2)
        throw structural_error("distribution estimation needs at least two class gradients");
    std::vector<double> exponents;
    exponents.reserve(per_class_grads.size());
    for (const auto& g : per_class_grads) {
        double norm2 = 0.0;
        for (double v : g.values) norm2 += v * v;
        if (norm2 <= 0.0)
            throw numerical_error(
                "zero class-gradient norm; increase the balanced split size");
        exponents.push_back(estimation_beta / norm2);
    }
    const double shift = *std::max_element(exponents.begin(), exponents.end());
    double total = 0.0;
    LabelDistribution dist;
    dist.probs.resize(exponents.size());
    for (std::size_t i = 0; i < exponents.size(); ++i) {
        dist.probs[i] = std::exp(exponents[i] - shift);
        total += dist.probs[i];
    }
    for (auto& p : dist.probs) p /= total;
    return dist;
}

PearsonResult pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw structural_error("pearson inputs must have equal length");
    const auto n = x.size();
    if (n < 3) throw std::domain_error("pearson needs at least 3 points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::domain_error("pearson undefined for zero-variance input");
    PearsonResult res;
    res.r = sxy / std::sqrt(sxx * syy);
    res.r = std::clamp(res.r, -1.0, 1.0);
    const double dof = static_cast<double>(n - 2);
    if (std::abs(res.r) >= 1.0) {
        res.p_value = 0.0;
        return res;
    }
    const double t = res.r * std::sqrt(dof / (1.0 - res.r * res.r));
    boost::math::students_t dist(dof);
    res.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    return res;
}

namespace {

// Full-batch gradient descent to (near-)stationarity; returns the final
// loss and residual gradient norm.
struct FitResult {
    ParamVector params;
    double loss = 0.0;
    double residual = 0.0;
};

FitResult fit(const ModelSpec& spec, const Dataset& data, const std::vector<int>& indices,
              const TrainingBudget& budget, uint64_t seed) {
    ParamVector params = init_params(spec, seed);
    const SampleBatch batch{&data, indices};
    double residual = 0.0;
    double lr = budget.lr;
    for (int it = 0; it < budget.max_iterations; ++it) {
        const auto back = backward(spec, params, batch);
        double norm2 = 0.0;
        for (double g : back.grad.values) norm2 += g * g;
        residual = std::sqrt(norm2);
        if (residual < budget.grad_tol) break;
        params = sgd_step(params, back.grad, lr);
    }
    const auto fwd = forward(spec, params, batch);
    return {std::move(params), fwd.loss, residual};
}

} // namespace

GammaOracle gamma_oracle(const std::vector<GammaDevice>& devices, const ModelSpec& model_spec,
                         const TrainingBudget& budget, uint64_t seed) {
    if (devices.empty()) throw structural_error("gamma oracle needs at least one device");
    const Dataset* data = devices.front().data;
    std::vector<int> pooled;
    for (const auto& dev : devices) {
        if (dev.data != data)
            throw structural_error("gamma oracle devices must share one dataset");
        pooled.insert(pooled.end(), dev.indices.begin(), dev.indices.end());
    }

    GammaOracle out;
    const auto global_fit = fit(model_spec, *data, pooled, budget, substream(seed, "gamma-global"));
    out.residual_grad_norm.push_back(global_fit.residual);
    if (global_fit.residual >= budget.grad_tol) out.converged = false;

    for (std::size_t k = 0; k < devices.size(); ++k) {
        const auto local_fit =
            fit(model_spec, *data, devices[k].indices, budget, substream(seed, "gamma-local", k));
        const auto global_on_local =
            forward(model_spec, global_fit.params, SampleBatch{data, devices[k].indices});
        out.gamma.push_back(global_on_local.loss - local_fit.loss);
        out.residual_grad_norm.push_back(local_fit.residual);
        if (local_fit.residual >= budget.grad_tol) out.converged = false;
    }
    return out;
}

} // namespace feddhad
