#pragma once

#include <string>
#include <vector>

#include "salaad/matrix.hpp"

namespace salaad {

/// One weight block's live weight X plus its structured twin (L, S), the
/// dual variable Y, and the block-wise regularization state.
struct BlockState {
    std::string name;
    Matrix x;  // live trainable weight
    Matrix l;  // low-rank surrogate component
    Matrix s;  // sparse surrogate component (exact zeros)
    Matrix y;  // dual variable
    double alpha = 0.0;
    double beta = 0.0;
    double rho = 1.0;
    // Shrunk spectrum of l from the most recent adaptation sweep; empty
    // before the first sweep.
    std::vector<double> last_singular_values;
};

BlockState make_block(std::string name, Matrix x, double rho);

struct ControllerConfig {
    double gamma = 0.999;             // energy coverage
    double target_rank_ratio = 0.15;  // rank-ratio target
    double target_density = 0.05;     // density target
    double delta_alpha = 0.1;
    double delta_beta = 0.005;
};

struct EngineConfig {
    int k_inner = 40;            // gradient steps per cycle
    int j_inner = 1;             // adaptation sweeps per cycle
    double rho_constant = 0.05;  // c in rho = c / (N * sqrt(n*m))
};

/// Penalty scaling law: rho = c / (n_blocks * sqrt(n * m)).
double rho_for_block(int n, int m, int n_blocks, double c);

/// Value and exact X-gradient of the structural penalty
/// (rho/2) * ||X - L - S + Y/rho||_F^2.
struct PenaltyResult {
    double value;
    Matrix grad_x;
};
PenaltyResult structural_penalty(const BlockState& b);

/// Runs the closed-form L -> S -> Y update j_inner times. X is untouched;
/// the shrunk spectrum of L is cached for the controller.
void slr_adaptation_sweep(BlockState& b, int j_inner);

/// Integral feedback on the thresholds:
///   alpha += rho * (rank_ratio - target) * delta_alpha
///   beta  += rho * (density    - target) * delta_beta
/// both clamped at zero. Requires a sweep to have run first.
void controller_update(BlockState& b, const ControllerConfig& cfg);

/// The structured twin L + S.
Matrix surrogate(const BlockState& b);

/// ||X - L - S||_F.
double reconstruction_error(const BlockState& b);

} // namespace salaad
