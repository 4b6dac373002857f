#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "feddhad/errors.hpp"

namespace feddhad {

// Fully-connected rectifier network with a softmax cross-entropy head.
// layer_sizes = {input dim, hidden dims..., class count}.
struct ModelSpec {
    std::vector<int> layer_sizes;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    int dense_layer_count() const { return static_cast<int>(layer_sizes.size()) - 1; }
    int hidden_layer_count() const { return dense_layer_count() - 1; }

    // Units eligible for dropout masks: all hidden units, concatenated in
    // layer order. The input features and the output head are never masked.
    int hidden_unit_count() const {
        int n = 0;
        for (int l = 1; l + 1 < static_cast<int>(layer_sizes.size()); ++l) n += layer_sizes[static_cast<std::size_t>(l)];
        return n;
    }

    // Offset of hidden layer `l` (1-based dense layer index) in the
    // concatenated hidden-unit indexing.
    int hidden_offset(int layer) const {
        int off = 0;
        for (int l = 1; l < layer; ++l) off += layer_sizes[static_cast<std::size_t>(l)];
        return off;
    }

    void validate() const {
        if (layer_sizes.size() < 2)
            throw structural_error("model spec needs at least an input and an output layer");
        for (int s : layer_sizes)
            if (s < 1) throw structural_error("layer sizes must be positive");
    }
};

// Location of one dense layer's parameters inside the flat vector.
// Unit u of the layer owns the contiguous slice
// [offset + u*(fan_in+1), offset + (u+1)*(fan_in+1)): fan_in weights, then bias.
struct LayerBlock {
    std::size_t offset;
    int fan_in;
    int fan_out;

    std::size_t size() const {
        return static_cast<std::size_t>(fan_in + 1) * static_cast<std::size_t>(fan_out);
    }
    std::size_t unit_offset(int unit) const {
        return offset + static_cast<std::size_t>(unit) * static_cast<std::size_t>(fan_in + 1);
    }
    std::size_t bias_offset(int unit) const { return unit_offset(unit) + static_cast<std::size_t>(fan_in); }
};

inline std::vector<LayerBlock> layer_blocks(const ModelSpec& spec) {
    std::vector<LayerBlock> blocks;
    std::size_t offset = 0;
    for (int l = 0; l + 1 < static_cast<int>(spec.layer_sizes.size()); ++l) {
        LayerBlock b{offset, spec.layer_sizes[static_cast<std::size_t>(l)],
                     spec.layer_sizes[static_cast<std::size_t>(l) + 1]};
        offset += b.size();
        blocks.push_back(b);
    }
    return blocks;
}

inline std::size_t param_count(const ModelSpec& spec) {
    std::size_t n = 0;
    for (const auto& b : layer_blocks(spec)) n += b.size();
    return n;
}

// Flat model parameter state; the index map is recomputed from the spec.
struct ParamVector {
    std::vector<double> values;

    static ParamVector zeros(const ModelSpec& spec) {
        return ParamVector{std::vector<double>(param_count(spec), 0.0)};
    }

    void check_shape(const ModelSpec& spec) const {
        if (values.size() != param_count(spec))
            throw structural_error("parameter vector length does not match model spec");
    }
};

// Same layout as ParamVector.
struct GradVector {
    std::vector<double> values;

    static GradVector zeros(const ModelSpec& spec) {
        return GradVector{std::vector<double>(param_count(spec), 0.0)};
    }
};

// Inverted-dropout mask over the concatenated hidden units: each entry is
// 0 (dropped) or 1/(1-d) for that unit's drop rate d.
struct UnitMask {
    std::vector<double> values;
    std::vector<int> dropped; // indices with value 0

    static UnitMask identity(const ModelSpec& spec) {
        return UnitMask{std::vector<double>(static_cast<std::size_t>(spec.hidden_unit_count()), 1.0), {}};
    }

    bool is_identity() const {
        if (!dropped.empty()) return false;
        for (double v : values)
            if (v != 1.0) return false;
        return true;
    }

    void check_shape(const ModelSpec& spec) const {
        if (static_cast<int>(values.size()) != spec.hidden_unit_count())
            throw structural_error("unit mask length does not match hidden unit count");
    }
};

} // namespace feddhad
