#include "feddhad/dropout.hpp"

#include <algorithm>
#include <cmath>

#include "feddhad/errors.hpp"

namespace feddhad {

ImportanceVector importance_scores(const ModelSpec& spec, const ParamVector& params,
                                   const SampleBatch& activation_batch, int round_tag) {
    spec.validate();
    params.check_shape(spec);
    (void)activation_batch; // dense-unit scoring is weight-based; the batch
                            // is part of the contract for rank-style scorers
    ImportanceVector importance;
    importance.round_tag = round_tag;
    importance.scores.reserve(static_cast<std::size_t>(spec.hidden_unit_count()));
    const auto blocks = layer_blocks(spec);
    for (int layer = 1; layer + 1 < static_cast<int>(spec.layer_sizes.size()); ++layer) {
        const LayerBlock& b = blocks[static_cast<std::size_t>(layer) - 1];
        for (int u = 0; u < b.fan_out; ++u) {
            const double* w = params.values.data() + b.unit_offset(u);
            double s = 0.0;
            for (int i = 0; i < b.fan_in; ++i) s += std::abs(w[i]);
            importance.scores.push_back(s);
        }
    }
    return importance;
}

std::vector<double> normalized_scores(const ModelSpec& spec, const ImportanceVector& importance) {
    if (static_cast<int>(importance.scores.size()) != spec.hidden_unit_count())
        throw structural_error("importance length does not match hidden unit count");
    std::vector<double> out(importance.scores.size());
    for (int layer = 1; layer + 1 < static_cast<int>(spec.layer_sizes.size()); ++layer) {
        const int off = spec.hidden_offset(layer);
        const int count = spec.layer_sizes[static_cast<std::size_t>(layer)];
        double mean = 0.0;
        for (int u = 0; u < count; ++u) mean += importance.scores[static_cast<std::size_t>(off + u)];
        mean /= count;
        double var = 0.0;
        for (int u = 0; u < count; ++u) {
            const double d = importance.scores[static_cast<std::size_t>(off + u)] - mean;
            var += d * d;
        }
        const double sd = std::sqrt(var / count);
        for (int u = 0; u < count; ++u)
            out[static_cast<std::size_t>(off + u)] =
                sd > 0.0 ? (importance.scores[static_cast<std::size_t>(off + u)] - mean) / sd : 0.0;
    }
    return out;
}

double variation(const ImportanceVector& current, const ImportanceVector& previous) {
    if (current.scores.size() != previous.scores.size())
        throw structural_error("importance vectors must have the same unit count");
    double sum2 = 0.0;
    for (std::size_t i = 0; i < current.scores.size(); ++i) {
        const double d = current.scores[i] - previous.scores[i];
        sum2 += d * d;
    }
    return std::sqrt(sum2);
}

TriggerDecision should_update(const TriggerState& state, double delta) {
    TriggerDecision decision;
    decision.state = state;
    auto& s = decision.state;

    const bool decreased = s.has_previous && delta < s.previous_delta;
    s.previous_delta = delta;
    s.has_previous = true;

    if (s.phase == TriggerPhase::warmup) {
        s.run_length = decreased ? 0 : s.run_length + 1;
        if (s.run_length >= s.patience) {
            decision.fire = true;
            s.phase = TriggerPhase::armed;
        }
        return decision;
    }
    if (decreased) {
        decision.fire = true;
        s.phase = TriggerPhase::tracking;
    }
    return decision;
}

double base_rate(const HessianBlock& hessian, double lipschitz) {
    const auto& eig = hessian.eigenvalues;
    if (eig.empty()) throw std::domain_error("base rate needs a non-empty spectrum");
    if (lipschitz < 0.0) throw std::domain_error("lipschitz estimate must be non-negative");
    const auto h = static_cast<double>(eig.size());
    for (std::size_t m = 0; m + 1 < eig.size(); ++m)
        if (eig[m + 1] - eig[m] > 4.0 * lipschitz)
            return static_cast<double>(m + 1) / h;
    return 1.0; // flat spectrum: keep everything
}

double aggregate_base_rates(const std::vector<double>& per_device_rates,
                            const std::vector<double>& sample_counts) {
    if (per_device_rates.size() != sample_counts.size() || per_device_rates.empty())
        throw structural_error("aggregate_base_rates needs matching non-empty inputs");
    double total = 0.0, acc = 0.0;
    for (std::size_t k = 0; k < per_device_rates.size(); ++k) {
        total += sample_counts[k];
        acc += sample_counts[k] * per_device_rates[k];
    }
    return acc / total;
}

DropoutPlan plan_rates(double d_avg, const DeviceTimeModel& time_model,
                       const ModelSpec& spec, const ImportanceVector& importance,
                       double d_cap, bool literal_time_semantics) {
    if (d_avg <= 0.0 || d_avg > 1.0)
        throw std::domain_error("aggregated base rate must lie in (0, 1]");
    if (time_model.et_base.empty()) throw structural_error("time model has no devices");

    DropoutPlan plan;
    plan.base_rate = d_avg;
    const double et_max = time_model.et_max_base * d_avg;
    const auto norm = normalized_scores(spec, importance);
    const auto n_units = static_cast<double>(norm.size());

    // softmax over all maskable units of the negated normalized scores
    std::vector<double> soft(norm.size());
    double shift = norm.empty() ? 0.0 : -*std::min_element(norm.begin(), norm.end());
    double total = 0.0;
    for (std::size_t i = 0; i < norm.size(); ++i) {
        soft[i] = std::exp(-norm[i] - shift);
        total += soft[i];
    }
    for (auto& s : soft) s /= total;

    for (double et : time_model.et_base) {
        const double ratio = std::min(et_max / et, 1.0);
        const double device_rate = literal_time_semantics ? ratio : 1.0 - ratio;
        plan.per_device_rate.push_back(device_rate);
        plan.keep_fraction.push_back(1.0 - device_rate);
        std::vector<double> unit_rates(norm.size());
        for (std::size_t i = 0; i < norm.size(); ++i)
            unit_rates[i] = std::clamp(soft[i] * n_units * device_rate, 0.0, d_cap);
        plan.per_unit_rate.push_back(std::move(unit_rates));
    }
    return plan;
}

UnitMask sample_mask(const DropoutPlan& plan, int device_id, RngStream& rng) {
    const auto& rates = plan.per_unit_rate.at(static_cast<std::size_t>(device_id));
    UnitMask mask;
    mask.values.resize(rates.size());
    for (std::size_t i = 0; i < rates.size(); ++i) {
        const double d = rates[i];
        // one draw per unit, kept iff u >= d: raising any rate under common
        // draws only shrinks the kept set, so FLOP counts stay monotone
        if (rng.uniform01() < d) {
            mask.values[i] = 0.0;
            mask.dropped.push_back(static_cast<int>(i));
        } else {
            mask.values[i] = 1.0 / (1.0 - d);
        }
    }
    return mask;
}

double lipschitz_estimate(const BlockHessianFn& hessian_at, int block_dim, uint64_t seed,
                          int probes, double probe_radius) {
    if (block_dim < 1) throw structural_error("lipschitz estimate needs a positive dimension");
    RngStream rng(substream(seed, "lipschitz"));
    double best = 0.0;
    for (int p = 0; p < probes; ++p) {
        std::vector<double> d1(static_cast<std::size_t>(block_dim));
        std::vector<double> d2(static_cast<std::size_t>(block_dim));
        double dist2 = 0.0;
        int attempts = 0;
        do {
            if (++attempts > 5)
                throw numerical_error("degenerate lipschitz probe after 5 redraws");
            dist2 = 0.0;
            for (int i = 0; i < block_dim; ++i) {
                d1[static_cast<std::size_t>(i)] = probe_radius * rng.normal();
                d2[static_cast<std::size_t>(i)] = probe_radius * rng.normal();
                const double diff = d1[static_cast<std::size_t>(i)] - d2[static_cast<std::size_t>(i)];
                dist2 += diff * diff;
            }
        } while (dist2 <= 1e-24);
        const auto h1 = hessian_at(d1);
        const auto h2 = hessian_at(d2);
        double fro2 = 0.0;
        for (std::size_t i = 0; i < h1.size(); ++i) {
            const double diff = h1[i] - h2[i];
            fro2 += diff * diff;
        }
        best = std::max(best, std::sqrt(fro2 / dist2));
    }
    return best;
}

double lipschitz_estimate(const ModelSpec& spec, const ParamVector& params_before,
                          const ParamVector& params_after, const SampleBatch& dataset,
                          int block_id, uint64_t seed, int probes, double probe_radius) {
    params_before.check_shape(spec); // the gradient term it anchors is
    params_after.check_shape(spec);  // constant and cancels in differences
    const int resolved = resolve_block_id(spec, block_id);
    const LayerBlock block = layer_blocks(spec)[static_cast<std::size_t>(resolved)];
    const int dim = static_cast<int>(block.size());
    auto hessian_at = [&](const std::vector<double>& delta) {
        ParamVector probe = params_after;
        for (int i = 0; i < dim; ++i)
            probe.values[block.offset + static_cast<std::size_t>(i)] += delta[static_cast<std::size_t>(i)];
        return hessian_matrix(spec, probe, dataset, resolved);
    };
    return lipschitz_estimate(hessian_at, dim, seed, probes, probe_radius);
}

KeptFractions expected_kept_fractions(const ModelSpec& spec,
                                      const std::vector<double>& per_unit_rate) {
    if (static_cast<int>(per_unit_rate.size()) != spec.hidden_unit_count())
        throw structural_error("rate vector length does not match hidden unit count");
    auto keep_sum = [&](int layer) { // expected kept units of a layer_sizes index
        const int count = spec.layer_sizes[static_cast<std::size_t>(layer)];
        if (layer == 0 || layer + 1 == static_cast<int>(spec.layer_sizes.size()))
            return static_cast<double>(count);
        double s = 0.0;
        const int off = spec.hidden_offset(layer);
        for (int u = 0; u < count; ++u) s += 1.0 - per_unit_rate[static_cast<std::size_t>(off + u)];
        return s;
    };
    const int dense_layers = spec.dense_layer_count();
    double flops = 0.0, full_flops = 0.0, params = 0.0, full_params = 0.0;
    for (int l = 0; l < dense_layers; ++l) {
        const double in = keep_sum(l);
        const double out = keep_sum(l + 1);
        const auto full_in = static_cast<double>(spec.layer_sizes[static_cast<std::size_t>(l)]);
        const auto full_out = static_cast<double>(spec.layer_sizes[static_cast<std::size_t>(l) + 1]);
        const double act = l + 1 < dense_layers ? 1.0 : 0.0;
        flops += 2.0 * in * out + out + act * out;
        full_flops += 2.0 * full_in * full_out + full_out + act * full_out;
        params += (in + 1.0) * out;
        full_params += (full_in + 1.0) * full_out;
    }
    return {flops / full_flops, params / full_params};
}

} // namespace feddhad
