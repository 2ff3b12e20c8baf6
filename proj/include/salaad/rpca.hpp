#pragma once

#include <span>
#include <string>
#include <vector>

#include "salaad/matrix.hpp"

namespace salaad {

/// Inexact augmented-Lagrangian RPCA parameters. A zero lambda or mu0
/// means "derive from the input": lambda = 1/sqrt(max(n,m)) and
/// mu0 = 1.25 / sigma_max. The penalty grows by mu_growth per iteration up
/// to mu0 * mu_cap_factor; the cap keeps the final shrinkage thresholds
/// meaningful, so the recovered S stays exactly sparse.
struct RpcaConfig {
    double lambda = 0.0;
    double mu0 = 0.0;
    double mu_growth = 1.5;
    double mu_cap_factor = 1e4;
    int max_iters = 500;
    double primal_tol = 1e-7;
};

struct RpcaResult {
    Matrix l;
    Matrix s;
    int iters = 0;
    double final_residual = 0.0;       // relative Frobenius residual
    double rank_ratio = 0.0;           // effective rank ratio of l at gamma = 0.999
    double density = 0.0;              // density of s
    std::vector<double> l_spectrum;    // descending spectrum of l
    bool converged = false;
};

/// Decomposes m into low-rank + sparse by alternating SVT / soft-threshold
/// steps with dual ascent. Non-convergence within max_iters returns the
/// partial factors with converged = false.
RpcaResult rpca_decompose(const Matrix& m, const RpcaConfig& cfg = {});

struct NamedMatrix {
    std::string name;
    const Matrix* value;
};

struct RpcaBlockStats {
    std::string name;
    int rows = 0;
    int cols = 0;
    double rank_ratio = 0.0;
    double density = 0.0;
    double residual = 0.0;
    int iters = 0;
    bool converged = false;
};

struct RpcaProfile {
    std::vector<RpcaBlockStats> blocks;  // in input order
    double mean_rank_ratio = 0.0;
    double std_rank_ratio = 0.0;
    double mean_density = 0.0;
    double std_density = 0.0;
};

/// Runs rpca_decompose on every block (in parallel) and aggregates
/// mean/std statistics. Per-block failures are recorded, not propagated.
RpcaProfile rpca_profile(std::span<const NamedMatrix> blocks, const RpcaConfig& cfg = {},
                         int workers = 0);

std::string profile_to_csv(const RpcaProfile& p);
std::string profile_to_json(const RpcaProfile& p);

} // namespace salaad
