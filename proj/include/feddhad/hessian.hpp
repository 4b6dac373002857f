#pragma once

#include <vector>

#include "feddhad/engine.hpp"
#include "feddhad/model.hpp"

namespace feddhad {

// Exact Hessian of the mean local loss over one dense layer's parameter
// block, with its full ascending eigenvalue spectrum.
struct HessianBlock {
    int block_id = 0;            // dense layer index
    int dim = 0;
    std::vector<double> matrix;  // row-major, dim x dim
    std::vector<double> eigenvalues; // ascending, all dim of them
    int rank_estimate = 0;       // count of |e| > rank_tol * max|e|

    double at(int r, int c) const {
        return matrix[static_cast<std::size_t>(r) * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)];
    }
};

inline constexpr int kDefaultHessianCap = 512;
inline constexpr double kDefaultRankTol = 1e-6;

// Eigendecomposition + numerical rank of an already-computed block matrix.
HessianBlock finalize_hessian_block(std::vector<double> matrix, int dim, int block_id,
                                    double rank_tol = kDefaultRankTol);

// block_id = -1 designates the final layer. The Hessian is obtained by
// differentiating the analytic gradient with dual numbers, one column per
// tangent direction, averaged over the full batch.
HessianBlock hessian_block(const ModelSpec& spec, const ParamVector& params,
                           const SampleBatch& dataset, int block_id = -1,
                           int dim_cap = kDefaultHessianCap,
                           double rank_tol = kDefaultRankTol);

// Raw block matrix without the eigendecomposition; used by probe loops.
std::vector<double> hessian_matrix(const ModelSpec& spec, const ParamVector& params,
                                   const SampleBatch& dataset, int block_id,
                                   int dim_cap = kDefaultHessianCap);

int resolve_block_id(const ModelSpec& spec, int block_id);

} // namespace feddhad
