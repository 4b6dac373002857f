#pragma once

#include <vector>

#include "feddhad/dataset.hpp"
#include "feddhad/divergence.hpp"
#include "feddhad/model.hpp"

namespace feddhad {

// Positive, normalized per-selected-device aggregation coefficients.
struct AggregationWeights {
    std::vector<double> q;
};

struct LearningSchedule {
    double lr_model = 0.1;
    double decay_model = 0.99;
    double lr_degree_scale = 0.01;  // step size for the JS-scale control parameter
    double decay_degree_scale = 0.99;
    double lr_degree_offset = 0.01; // step size for the additive control parameter
    double decay_degree_offset = 0.99;

    double model_lr(int round) const;
    double scale_lr(int round) const;
    double offset_lr(int round) const;
    void validate() const;
};

// One device's round upload: its updated parameters, the units it dropped
// this round, and its sample count.
struct UpdateBundle {
    int device_id = 0;
    ParamVector params;
    std::vector<int> dropped_units; // hidden-unit indices, empty = full model
    int sample_count = 0;
};

AggregationWeights fedavg_weights(const std::vector<UpdateBundle>& bundles);

// q_k proportional to n_k / degree_k over the selected devices. The report
// is indexed by device id.
AggregationWeights feddh_weights(const std::vector<UpdateBundle>& bundles,
                                 const NonIIDReport& report);

// Per-coordinate weighted mean, renormalized over the devices that kept the
// coordinate; coordinates dropped everywhere keep the previous global value.
ParamVector masked_aggregate(const ModelSpec& spec, const ParamVector& global_prev,
                             const std::vector<UpdateBundle>& bundles,
                             const AggregationWeights& weights);

// 1 where the coordinate belongs to a dropped unit (its incoming weights and
// bias, and its outgoing weights into the next layer).
std::vector<uint8_t> dropped_param_mask(const ModelSpec& spec,
                                        const std::vector<int>& dropped_units);

enum class HypergradMode { analytic, finite_diff };

// One server-side descent step on the control parameters of the selected
// devices, driven by the validation loss of the re-aggregated model.
ControlParams update_control_params(const ModelSpec& spec, const ControlParams& cp,
                                    const ParamVector& global_prev,
                                    const std::vector<UpdateBundle>& bundles,
                                    const NonIIDReport& report, const Dataset& validation,
                                    const LearningSchedule& schedule, int round,
                                    HypergradMode mode);

// Gamma under optimal (n_k/gamma_k) weighting minus gamma under proportional
// (n_k) weighting; non-positive for all valid inputs.
double theorem2_gap(const std::vector<double>& n, const std::vector<double>& gamma);

} // namespace feddhad
