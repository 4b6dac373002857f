#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "feddhad/engine.hpp"
#include "feddhad/hessian.hpp"
#include "feddhad/model.hpp"
#include "feddhad/rng.hpp"

namespace feddhad {

// Per-unit drop rates are capped so the inverted-dropout factor 1/(1-d)
// stays bounded.
inline constexpr double kDropRateCap = 0.95;

// Raw per-hidden-unit importance scores (sum of absolute incoming weights).
struct ImportanceVector {
    std::vector<double> scores;
    int round_tag = 0;
};

// Full-model round time per device under the cost model, and its maximum.
struct DeviceTimeModel {
    std::vector<double> et_base; // ET for the full model, seconds, per device
    double et_max_base = 0.0;    // max over devices
};

struct DropoutPlan {
    double base_rate = 1.0;                          // aggregated eigen-gap rate d_avg
    std::vector<double> per_device_rate;             // mean drop rate per device
    std::vector<double> keep_fraction;               // 1 - per_device_rate
    std::vector<std::vector<double>> per_unit_rate;  // device x hidden unit

    bool is_identity() const {
        for (double d : per_device_rate)
            if (d != 0.0) return false;
        return true;
    }
};

enum class TriggerPhase { warmup, armed, tracking };

// Critical-learning-period gate: importance variation is observed every
// `interval` rounds; rate updates start only after `patience` consecutive
// non-decreasing observations, then re-fire whenever variation drops.
struct TriggerState {
    int interval = 5;   // rounds between observations
    int patience = 3;   // consecutive non-decreasing observations to leave warmup
    TriggerPhase phase = TriggerPhase::warmup;
    int run_length = 0; // current non-decreasing run
    bool has_previous = false;
    double previous_delta = 0.0;
    ImportanceVector last_importance;
};

ImportanceVector importance_scores(const ModelSpec& spec, const ParamVector& params,
                                   const SampleBatch& activation_batch, int round_tag = 0);

// Per-layer zero-mean unit-variance normalization of the scores.
std::vector<double> normalized_scores(const ModelSpec& spec, const ImportanceVector& importance);

double variation(const ImportanceVector& current, const ImportanceVector& previous);

struct TriggerDecision {
    bool fire = false;
    TriggerState state;
};
TriggerDecision should_update(const TriggerState& state, double delta);

// First ascending eigen-gap larger than 4x the Lipschitz estimate gives
// m/h; no qualifying gap falls back to 1 (keep everything).
double base_rate(const HessianBlock& hessian, double lipschitz);

double aggregate_base_rates(const std::vector<double>& per_device_rates,
                            const std::vector<double>& sample_counts);

// Builds per-device and per-unit rates from the aggregated base rate, the
// device time model, and the importance scores. In the default (coherent)
// reading the ET-ratio quantities are keep fractions; literal_time_semantics
// follows the source text verbatim and uses them as drop probabilities.
DropoutPlan plan_rates(double d_avg, const DeviceTimeModel& time_model,
                       const ModelSpec& spec, const ImportanceVector& importance,
                       double d_cap = kDropRateCap, bool literal_time_semantics = false);

UnitMask sample_mask(const DropoutPlan& plan, int device_id, RngStream& rng);

// Empirical Lipschitz constant of the Hessian-gradient gap map over probe
// pairs around a center point. The gradient term is constant in the probe,
// so this reduces to Hessian differences.
using BlockHessianFn = std::function<std::vector<double>(const std::vector<double>& delta)>;

double lipschitz_estimate(const BlockHessianFn& hessian_at, int block_dim, uint64_t seed,
                          int probes = 8, double probe_radius = 1e-2);

double lipschitz_estimate(const ModelSpec& spec, const ParamVector& params_before,
                          const ParamVector& params_after, const SampleBatch& dataset,
                          int block_id, uint64_t seed, int probes = 8,
                          double probe_radius = 1e-2);

// Expected fraction of forward FLOPs and of parameters retained by a device
// under its per-unit keep probabilities.
struct KeptFractions {
    double flops = 1.0;
    double params = 1.0;
};
KeptFractions expected_kept_fractions(const ModelSpec& spec,
                                      const std::vector<double>& per_unit_rate);

} // namespace feddhad
