#include "feddhad/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "feddhad/rng.hpp"

namespace feddhad {

namespace {

// Class means are drawn uniformly on the unit sphere, redrawn while closer
// than a minimum chord to any earlier mean so tiny-spread fixtures stay
// separable regardless of the seed.
std::vector<std::vector<double>> draw_class_means(int class_count, int dim, RngStream& rng) {
    constexpr double kMinChord = 0.5;
    constexpr int kMaxAttempts = 200;
    std::vector<std::vector<double>> means;
    for (int c = 0; c < class_count; ++c) {
        std::vector<double> mean(static_cast<std::size_t>(dim));
        for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
            double norm = 0.0;
            for (auto& v : mean) {
                v = rng.normal();
                norm += v * v;
            }
            norm = std::sqrt(norm);
            if (norm == 0.0) continue;
            for (auto& v : mean) v /= norm;
            bool separated = true;
            for (const auto& other : means) {
                double dist2 = 0.0;
                for (int i = 0; i < dim; ++i)
                    dist2 += (mean[static_cast<std::size_t>(i)] - other[static_cast<std::size_t>(i)]) *
                             (mean[static_cast<std::size_t>(i)] - other[static_cast<std::size_t>(i)]);
                if (dist2 < kMinChord * kMinChord) {
                    separated = false;
                    break;
                }
            }
            if (separated) break;
        }
        means.push_back(std::move(mean));
    }
    return means;
}

} // namespace

Dataset generate_synthetic(int class_count, int dim, int per_class_count,
                           double cluster_spread, uint64_t seed) {
    if (class_count < 1 || dim < 1 || per_class_count < 1)
        throw config_error("synthetic dataset counts must be at least 1");
    if (cluster_spread < 0.0) throw config_error("cluster spread must be non-negative");

    RngStream rng(substream(seed, "synthetic"));
    const auto means = draw_class_means(class_count, dim, rng);

    Dataset data;
    data.dim = dim;
    data.class_count = class_count;
    const int n = class_count * per_class_count;
    data.features.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(dim));
    data.labels.reserve(static_cast<std::size_t>(n));
    for (int c = 0; c < class_count; ++c)
        for (int s = 0; s < per_class_count; ++s) {
            for (int i = 0; i < dim; ++i)
                data.features.push_back(means[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)] +
                                        cluster_spread * rng.normal());
            data.labels.push_back(c);
        }
    return data;
}

PartitionPlan dirichlet_partition(const Dataset& data, int device_count,
                                  double concentration, uint64_t seed) {
    if (device_count < 1) throw config_error("device count must be at least 1");
    if (concentration <= 0.0) throw config_error("dirichlet concentration must be positive");
    if (data.size() < device_count)
        throw config_error("fewer samples than devices; cannot give every device data");

    RngStream rng(substream(seed, "partition"));
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(data.class_count));
    for (int i = 0; i < data.size(); ++i)
        by_class[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])].push_back(i);

    PartitionPlan plan;
    plan.concentration = concentration;
    plan.device_indices.assign(static_cast<std::size_t>(device_count), {});
    for (auto& members : by_class) {
        if (members.empty()) continue;
        rng.shuffle(members);
        const auto proportions = rng.dirichlet(static_cast<std::size_t>(device_count), concentration);

        // Largest-remainder rounding conserves the class total exactly.
        const int total = static_cast<int>(members.size());
        std::vector<int> counts(static_cast<std::size_t>(device_count));
        std::vector<std::pair<double, int>> remainders;
        int assigned = 0;
        for (int d = 0; d < device_count; ++d) {
            const double exact = proportions[static_cast<std::size_t>(d)] * total;
            counts[static_cast<std::size_t>(d)] = static_cast<int>(std::floor(exact));
            assigned += counts[static_cast<std::size_t>(d)];
            remainders.emplace_back(exact - std::floor(exact), d);
        }
        std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        for (int r = 0; r < total - assigned; ++r)
            ++counts[static_cast<std::size_t>(remainders[static_cast<std::size_t>(r)].second)];

        int cursor = 0;
        for (int d = 0; d < device_count; ++d)
            for (int c = 0; c < counts[static_cast<std::size_t>(d)]; ++c)
                plan.device_indices[static_cast<std::size_t>(d)].push_back(members[static_cast<std::size_t>(cursor++)]);
    }

    // Empty devices steal one sample from the currently largest device.
    for (auto& device : plan.device_indices) {
        while (device.empty()) {
            auto largest = std::max_element(
                plan.device_indices.begin(), plan.device_indices.end(),
                [](const auto& a, const auto& b) { return a.size() < b.size(); });
            device.push_back(largest->back());
            largest->pop_back();
        }
    }
    for (auto& device : plan.device_indices) std::sort(device.begin(), device.end());
    return plan;
}

PartitionPlan stratified_partition(const Dataset& data, int device_count) {
    if (device_count < 1) throw config_error("device count must be at least 1");
    if (data.size() < device_count)
        throw config_error("fewer samples than devices; cannot give every device data");
    PartitionPlan plan;
    plan.device_indices.assign(static_cast<std::size_t>(device_count), {});
    std::vector<int> dealt(static_cast<std::size_t>(data.class_count), 0);
    for (int i = 0; i < data.size(); ++i) {
        const auto cls = static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)]);
        plan.device_indices[static_cast<std::size_t>(dealt[cls] % device_count)].push_back(i);
        ++dealt[cls];
    }
    return plan;
}

LabelDistribution label_distribution(const Dataset& data, std::span<const int> indices) {
    if (indices.empty()) throw std::domain_error("label distribution of an empty index list");
    LabelDistribution dist;
    dist.probs.assign(static_cast<std::size_t>(data.class_count), 0.0);
    for (int i : indices) dist.probs[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])] += 1.0;
    for (auto& p : dist.probs) p /= static_cast<double>(indices.size());
    return dist;
}

LabelDistribution global_distribution(const Dataset& data, const PartitionPlan& plan) {
    LabelDistribution dist;
    dist.probs.assign(static_cast<std::size_t>(data.class_count), 0.0);
    std::size_t total = 0;
    for (const auto& device : plan.device_indices) {
        for (int i : device)
            dist.probs[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])] += 1.0;
        total += device.size();
    }
    for (auto& p : dist.probs) p /= static_cast<double>(total);
    return dist;
}

namespace {

Dataset subset(const Dataset& data, const std::vector<int>& indices) {
    Dataset out;
    out.dim = data.dim;
    out.class_count = data.class_count;
    out.features.reserve(indices.size() * static_cast<std::size_t>(data.dim));
    out.labels.reserve(indices.size());
    for (int i : indices) {
        const auto row = data.sample(i);
        out.features.insert(out.features.end(), row.begin(), row.end());
        out.labels.push_back(data.labels[static_cast<std::size_t>(i)]);
    }
    return out;
}

} // namespace

ServerSplits server_splits(const Dataset& data, int balanced_per_class,
                           double validation_fraction, uint64_t seed) {
    if (balanced_per_class < 0 || validation_fraction < 0.0 || validation_fraction > 1.0)
        throw config_error("invalid server split parameters");

    RngStream rng(substream(seed, "server-splits"));
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(data.class_count));
    for (int i = 0; i < data.size(); ++i)
        by_class[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])].push_back(i);

    std::vector<int> balanced_idx, rest;
    for (auto& members : by_class) {
        if (static_cast<int>(members.size()) < balanced_per_class)
            throw config_error("not enough samples of a class for the balanced split");
        rng.shuffle(members);
        balanced_idx.insert(balanced_idx.end(), members.begin(), members.begin() + balanced_per_class);
        rest.insert(rest.end(), members.begin() + balanced_per_class, members.end());
    }
    rng.shuffle(rest);
    const auto validation_count =
        static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(rest.size())));
    std::vector<int> validation_idx(rest.begin(), rest.begin() + static_cast<long>(validation_count));
    std::vector<int> remainder_idx(rest.begin() + static_cast<long>(validation_count), rest.end());

    return {subset(data, balanced_idx), subset(data, validation_idx), subset(data, remainder_idx)};
}

void save_dataset(const Dataset& data, const std::string& path) {
    nlohmann::ordered_json header{{"dim", data.dim},
                                  {"class_count", data.class_count},
                                  {"sample_count", data.size()},
                                  {"dtype", "f32-le"}};
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw config_error("cannot open " + tmp + " for writing");
        out << header.dump() << '\n';
        for (double v : data.features) {
            const float f = static_cast<float>(v);
            out.write(reinterpret_cast<const char*>(&f), sizeof(f));
        }
        for (int32_t y : data.labels) {
            const uint32_t u = static_cast<uint32_t>(y);
            out.write(reinterpret_cast<const char*>(&u), sizeof(u));
        }
        if (!out) throw config_error("failed writing " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open dataset file " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw config_error("missing dataset header in " + path);
    const auto header = nlohmann::json::parse(header_line, nullptr, false);
    if (header.is_discarded() || header.value("dtype", "") != "f32-le")
        throw config_error("bad dataset header in " + path);

    Dataset data;
    data.dim = header.at("dim").get<int>();
    data.class_count = header.at("class_count").get<int>();
    const auto n = header.at("sample_count").get<std::size_t>();
    data.features.resize(n * static_cast<std::size_t>(data.dim));
    data.labels.resize(n);
    for (auto& v : data.features) {
        float f = 0.0f;
        in.read(reinterpret_cast<char*>(&f), sizeof(f));
        v = static_cast<double>(f);
    }
    for (auto& y : data.labels) {
        uint32_t u = 0;
        in.read(reinterpret_cast<char*>(&u), sizeof(u));
        y = static_cast<int32_t>(u);
    }
    if (!in) throw config_error("truncated dataset file " + path);
    data.validate();
    return data;
}

} // namespace feddhad
