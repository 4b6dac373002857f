#include "feddhad/hessian.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "feddhad/errors.hpp"

#include "engine_detail.hpp"

namespace feddhad {

int resolve_block_id(const ModelSpec& spec, int block_id) {
    const int dense_layers = spec.dense_layer_count();
    if (block_id == -1) return dense_layers - 1;
    if (block_id < 0 || block_id >= dense_layers)
        throw structural_error("hessian block id out of range");
    return block_id;
}

std::vector<double> hessian_matrix(const ModelSpec& spec, const ParamVector& params,
                                   const SampleBatch& dataset, int block_id, int dim_cap) {
    spec.validate();
    params.check_shape(spec);
    if (!dataset.data || dataset.indices.empty())
        throw structural_error("hessian dataset must be non-empty");
    const auto blocks = layer_blocks(spec);
    const LayerBlock& block = blocks[static_cast<std::size_t>(resolve_block_id(spec, block_id))];
    const int dim = static_cast<int>(block.size());
    if (dim > dim_cap)
        throw capacity_error("hessian block dimension " + std::to_string(dim) +
                             " exceeds cap " + std::to_string(dim_cap));

    const std::size_t n_params = params.values.size();
    std::vector<detail::Dual> dual_params(n_params);
    for (std::size_t i = 0; i < n_params; ++i) dual_params[i] = detail::Dual(params.values[i]);

    const double inv_n = 1.0 / dataset.size();
    std::vector<double> matrix(static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim), 0.0);
    std::vector<detail::Dual> grad(n_params);
    for (int col = 0; col < dim; ++col) {
        dual_params[block.offset + static_cast<std::size_t>(col)].d = 1.0;
        std::fill(grad.begin(), grad.end(), detail::Dual());
        for (int s = 0; s < dataset.size(); ++s) {
            const int idx = dataset.indices[static_cast<std::size_t>(s)];
            detail::sample_loss<detail::Dual>(spec, blocks, dual_params.data(),
                                              dataset.data->sample(idx),
                                              dataset.data->labels[static_cast<std::size_t>(idx)],
                                              nullptr, grad.data(), nullptr);
        }
        for (int row = 0; row < dim; ++row)
            matrix[static_cast<std::size_t>(row) * static_cast<std::size_t>(dim) +
                   static_cast<std::size_t>(col)] =
                grad[block.offset + static_cast<std::size_t>(row)].d * inv_n;
        dual_params[block.offset + static_cast<std::size_t>(col)].d = 0.0;
    }
    return matrix;
}

HessianBlock finalize_hessian_block(std::vector<double> matrix, int dim, int block_id,
                                    double rank_tol) {
    if (dim < 1 || matrix.size() != static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim))
        throw structural_error("hessian matrix size does not match dimension");
    HessianBlock out;
    out.block_id = block_id;
    out.dim = dim;
    out.matrix = std::move(matrix);

    Eigen::Map<const Eigen::MatrixXd> mapped(out.matrix.data(), dim, dim);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(mapped);
    if (solver.info() != Eigen::Success)
        throw numerical_error("hessian eigendecomposition failed");
    out.eigenvalues.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + dim);

    double max_abs = 0.0;
    for (double e : out.eigenvalues) max_abs = std::max(max_abs, std::abs(e));
    out.rank_estimate = 0;
    for (double e : out.eigenvalues)
        if (std::abs(e) > rank_tol * max_abs) ++out.rank_estimate;
    return out;
}

HessianBlock hessian_block(const ModelSpec& spec, const ParamVector& params,
                           const SampleBatch& dataset, int block_id, int dim_cap,
                           double rank_tol) {
    const int resolved = resolve_block_id(spec, block_id);
    auto matrix = hessian_matrix(spec, params, dataset, resolved, dim_cap);
    const int dim = static_cast<int>(layer_blocks(spec)[static_cast<std::size_t>(resolved)].size());
    return finalize_hessian_block(std::move(matrix), dim, resolved, rank_tol);
}

} // namespace feddhad
