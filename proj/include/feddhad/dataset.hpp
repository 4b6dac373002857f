#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "feddhad/errors.hpp"

namespace feddhad {

// Dense classification dataset; features stored row-major.
struct Dataset {
    int dim = 0;
    int class_count = 0;
    std::vector<double> features; // size n * dim
    std::vector<int32_t> labels;  // size n, values in [0, class_count)

    int size() const { return static_cast<int>(labels.size()); }

    std::span<const double> sample(int i) const {
        return {features.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim),
                static_cast<std::size_t>(dim)};
    }

    void validate() const {
        if (features.size() != labels.size() * static_cast<std::size_t>(dim))
            throw structural_error("feature block size does not match label count");
        for (int32_t y : labels)
            if (y < 0 || y >= class_count) throw structural_error("label out of range");
    }
};

// Per-device sample index lists from a Dirichlet allocation.
struct PartitionPlan {
    std::vector<std::vector<int>> device_indices;
    double concentration = 0.5;

    int device_count() const { return static_cast<int>(device_indices.size()); }
};

// Length-C probability vector.
struct LabelDistribution {
    std::vector<double> probs;
};

Dataset generate_synthetic(int class_count, int dim, int per_class_count,
                           double cluster_spread, uint64_t seed);

PartitionPlan dirichlet_partition(const Dataset& data, int device_count,
                                  double concentration, uint64_t seed);

// Deterministic equal-proportion split: class c's samples are dealt
// round-robin across devices. With per-class counts divisible by the device
// count every device gets an identical label distribution.
PartitionPlan stratified_partition(const Dataset& data, int device_count);

LabelDistribution label_distribution(const Dataset& data, std::span<const int> indices);

// n_k-weighted mean of per-device distributions (the global P over devices).
LabelDistribution global_distribution(const Dataset& data, const PartitionPlan& plan);

struct ServerSplits {
    Dataset balanced;   // exactly balanced_per_class samples of every class
    Dataset validation; // held-out fraction for server-side loss evaluation
    Dataset remainder;
};

ServerSplits server_splits(const Dataset& data, int balanced_per_class,
                           double validation_fraction, uint64_t seed);

// File format: one JSON header line {dim, class_count, sample_count,
// dtype:"f32-le"} + '\n', then features as little-endian f32, then labels as
// little-endian u32.
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

} // namespace feddhad
