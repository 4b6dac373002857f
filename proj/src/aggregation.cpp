#include "feddhad/aggregation.hpp"

#include <cmath>

#include "feddhad/engine.hpp"
#include "feddhad/errors.hpp"

namespace feddhad {

namespace {
constexpr double kKeeperMassFloor = 1e-12;
constexpr double kHypergradEps = 1e-4;
} // namespace

double LearningSchedule::model_lr(int round) const {
    return lr_model * std::pow(decay_model, round);
}
double LearningSchedule::scale_lr(int round) const {
    return lr_degree_scale * std::pow(decay_degree_scale, round);
}
double LearningSchedule::offset_lr(int round) const {
    return lr_degree_offset * std::pow(decay_degree_offset, round);
}

void LearningSchedule::validate() const {
    for (double lr : {lr_model, lr_degree_scale, lr_degree_offset})
        if (lr < 0.0) throw config_error("learning rates must be non-negative");
    if (lr_model <= 0.0) throw config_error("model learning rate must be positive");
    for (double d : {decay_model, decay_degree_scale, decay_degree_offset})
        if (d <= 0.0 || d > 1.0) throw config_error("decays must lie in (0, 1]");
}

AggregationWeights fedavg_weights(const std::vector<UpdateBundle>& bundles) {
    if (bundles.empty()) throw structural_error("aggregation needs at least one bundle");
    AggregationWeights w;
    double total = 0.0;
    for (const auto& b : bundles) total += b.sample_count;
    for (const auto& b : bundles) w.q.push_back(b.sample_count / total);
    return w;
}

AggregationWeights feddh_weights(const std::vector<UpdateBundle>& bundles,
                                 const NonIIDReport& report) {
    if (bundles.empty()) throw structural_error("aggregation needs at least one bundle");
    AggregationWeights w;
    double total = 0.0;
    for (const auto& b : bundles) {
        const double degree = report.degree.at(static_cast<std::size_t>(b.device_id));
        w.q.push_back(b.sample_count / degree);
        total += w.q.back();
    }
    for (auto& q : w.q) q /= total;
    return w;
}

std::vector<uint8_t> dropped_param_mask(const ModelSpec& spec,
                                        const std::vector<int>& dropped_units) {
    std::vector<uint8_t> dropped(param_count(spec), 0);
    if (dropped_units.empty()) return dropped;
    const auto blocks = layer_blocks(spec);
    for (int unit : dropped_units) {
        // locate the hidden layer owning this unit
        int layer = 1, local = unit;
        while (local >= spec.layer_sizes[static_cast<std::size_t>(layer)]) {
            local -= spec.layer_sizes[static_cast<std::size_t>(layer)];
            ++layer;
        }
        const LayerBlock& own = blocks[static_cast<std::size_t>(layer) - 1];
        const std::size_t in_start = own.unit_offset(local);
        for (std::size_t i = 0; i <= static_cast<std::size_t>(own.fan_in); ++i)
            dropped[in_start + i] = 1;
        const LayerBlock& next = blocks[static_cast<std::size_t>(layer)];
        for (int v = 0; v < next.fan_out; ++v)
            dropped[next.unit_offset(v) + static_cast<std::size_t>(local)] = 1;
    }
    return dropped;
}

ParamVector masked_aggregate(const ModelSpec& spec, const ParamVector& global_prev,
                             const std::vector<UpdateBundle>& bundles,
                             const AggregationWeights& weights) {
    global_prev.check_shape(spec);
    if (bundles.size() != weights.q.size())
        throw structural_error("weight count does not match bundle count");
    const std::size_t n = global_prev.values.size();
    std::vector<double> numerator(n, 0.0), mass(n, 0.0);
    for (std::size_t k = 0; k < bundles.size(); ++k) {
        const auto& b = bundles[k];
        b.params.check_shape(spec);
        const double q = weights.q[k];
        const auto dropped = dropped_param_mask(spec, b.dropped_units);
        for (std::size_t i = 0; i < n; ++i) {
            if (dropped[i]) continue;
            numerator[i] += q * b.params.values[i];
            mass[i] += q;
        }
    }
    ParamVector out = global_prev;
    for (std::size_t i = 0; i < n; ++i)
        if (mass[i] >= kKeeperMassFloor) out.values[i] = numerator[i] / mass[i];
    return out;
}

namespace {

std::vector<int> all_indices(const Dataset& data) {
    std::vector<int> idx(static_cast<std::size_t>(data.size()));
    for (int i = 0; i < data.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
    return idx;
}

// Degrees and weights for the selected devices under perturbed controls.
AggregationWeights weights_for(const std::vector<UpdateBundle>& bundles,
                               const std::vector<double>& js, const ControlParams& cp) {
    const auto report = noniid_degree(js, cp);
    return feddh_weights(bundles, report);
}

} // namespace

ControlParams update_control_params(const ModelSpec& spec, const ControlParams& cp,
                                    const ParamVector& global_prev,
                                    const std::vector<UpdateBundle>& bundles,
                                    const NonIIDReport& report, const Dataset& validation,
                                    const LearningSchedule& schedule, int round,
                                    HypergradMode mode) {
    if (validation.size() == 0)
        throw config_error("control-parameter update needs a non-empty validation set");
    if (bundles.empty()) throw structural_error("control-parameter update needs bundles");

    const double lr_scale = schedule.scale_lr(round);
    const double lr_offset = schedule.offset_lr(round);
    ControlParams next = cp;
    if (lr_scale == 0.0 && lr_offset == 0.0) return next;

    const auto validation_idx = all_indices(validation);
    const SampleBatch vbatch{&validation, validation_idx};
    const std::size_t n_sel = bundles.size();

    std::vector<double> grad_scale(n_sel, 0.0), grad_offset(n_sel, 0.0);

    if (mode == HypergradMode::finite_diff) {
        auto loss_under = [&](const ControlParams& perturbed) {
            const auto w = weights_for(bundles, report.js, perturbed);
            const auto agg = masked_aggregate(spec, global_prev, bundles, w);
            return forward(spec, agg, vbatch).loss;
        };
        for (std::size_t k = 0; k < n_sel; ++k) {
            const auto dev = static_cast<std::size_t>(bundles[k].device_id);
            for (int which = 0; which < 2; ++which) {
                ControlParams plus = cp, minus = cp;
                (which == 0 ? plus.scale[dev] : plus.offset[dev]) += kHypergradEps;
                (which == 0 ? minus.scale[dev] : minus.offset[dev]) -= kHypergradEps;
                const double g = (loss_under(plus) - loss_under(minus)) / (2.0 * kHypergradEps);
                (which == 0 ? grad_scale : grad_offset)[k] = g;
            }
        }
    } else {
        const auto weights = feddh_weights(bundles, report);
        const auto aggregated = masked_aggregate(spec, global_prev, bundles, weights);
        const auto vgrad = backward(spec, aggregated, vbatch).grad;

        // A_j = sum_i g_i * (w_ji - w_i) / S_i over coordinates j kept
        const std::size_t n_coord = aggregated.values.size();
        std::vector<double> keeper_mass(n_coord, 0.0);
        std::vector<std::vector<uint8_t>> dropped(n_sel);
        for (std::size_t k = 0; k < n_sel; ++k) {
            dropped[k] = dropped_param_mask(spec, bundles[k].dropped_units);
            for (std::size_t i = 0; i < n_coord; ++i)
                if (!dropped[k][i]) keeper_mass[i] += weights.q[k];
        }
        std::vector<double> sensitivity(n_sel, 0.0); // A_j
        for (std::size_t j = 0; j < n_sel; ++j)
            for (std::size_t i = 0; i < n_coord; ++i) {
                if (dropped[j][i] || keeper_mass[i] < kKeeperMassFloor) continue;
                sensitivity[j] += vgrad.values[i] *
                                  (bundles[j].params.values[i] - aggregated.values[i]) /
                                  keeper_mass[i];
            }

        double degree_sum = 0.0; // S = sum n_j / D_j
        std::vector<double> degrees(n_sel);
        for (std::size_t k = 0; k < n_sel; ++k) {
            degrees[k] = report.degree.at(static_cast<std::size_t>(bundles[k].device_id));
            degree_sum += bundles[k].sample_count / degrees[k];
        }
        double weighted_sensitivity = 0.0;
        for (std::size_t j = 0; j < n_sel; ++j) weighted_sensitivity += weights.q[j] * sensitivity[j];

        for (std::size_t k = 0; k < n_sel; ++k) {
            const auto dev = static_cast<std::size_t>(bundles[k].device_id);
            const double d_loss_d_degree = bundles[k].sample_count / (degrees[k] * degrees[k]) *
                                           (weighted_sensitivity - sensitivity[k]) / degree_sum;
            // clamped degrees are flat in the controls
            const bool clamped = cp.scale[dev] * report.js[dev] + cp.offset[dev] <= kDegreeFloor;
            grad_scale[k] = clamped ? 0.0 : d_loss_d_degree * report.js[dev];
            grad_offset[k] = clamped ? 0.0 : d_loss_d_degree;
        }
    }

    for (std::size_t k = 0; k < n_sel; ++k) {
        const auto dev = static_cast<std::size_t>(bundles[k].device_id);
        next.scale[dev] -= lr_scale * grad_scale[k];
        next.offset[dev] -= lr_offset * grad_offset[k];
    }
    return next;
}

double theorem2_gap(const std::vector<double>& n, const std::vector<double>& gamma) {
    if (n.size() != gamma.size() || n.empty())
        throw structural_error("theorem2_gap needs matching non-empty inputs");
    for (std::size_t i = 0; i < n.size(); ++i)
        if (n[i] <= 0.0 || gamma[i] <= 0.0)
            throw std::domain_error("theorem2_gap requires positive sizes and gammas");
    double sum_n = 0.0, sum_ratio = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) {
        sum_n += n[i];
        sum_ratio += n[i] / gamma[i];
    }
    double optimal = 0.0, proportional = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) {
        optimal += (n[i] / gamma[i]) / sum_ratio * gamma[i];
        proportional += n[i] / sum_n * gamma[i];
    }
    return optimal - proportional;
}

} // namespace feddhad
