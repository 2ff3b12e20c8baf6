#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "salaad/toy_model.hpp"

namespace salaad {

struct BlockDrops {
    std::string block_name;
    int retained_singular = 0;      // singular values present before truncation
    long long retained_sparse = 0;  // nonzeros present before truncation
    int drop_singular = 0;
    long long drop_sparse = 0;
};

/// Budgeted truncation plan: global ratios from the kappa split (with
/// surplus reassignment when a side is exhausted) turned into per-block
/// removal counts.
struct HpaPlan {
    long long budget_c = 0;
    double kappa = 0.5;
    long long c_l = 0;  // removable params in all low-rank components
    long long c_s = 0;  // removable params in all sparse components
    double phi_l = 0.0;
    double phi_s = 0.0;
    std::vector<BlockDrops> per_block;
    long long planned_removed = 0;
};

struct CompressedBlock {
    std::string name;
    Matrix left;   // n x r', singular values folded in; empty when r' = 0
    Matrix right;  // r' x m
    Matrix sparse;
    long long nnz = 0;
};

struct CompressedModel {
    ToyModel model;  // regulated blocks carry the truncated surrogate
    std::vector<CompressedBlock> factors;
    long long slr_param_count = 0;  // sum of r'(n+m) + nnz over regulated blocks
};

/// (c_l, c_s): removable parameter counts over the regulated blocks, with a
/// singular value costing rows+cols (factored storage) and a sparse entry 1.
std::pair<long long, long long> removable_counts(const ToyModel& model);

/// Regulated blocks in SLR storage plus unregulated blocks dense.
long long surrogate_param_count(const ToyModel& model);
long long total_param_count(const CompressedModel& cm);

HpaPlan make_plan(const ToyModel& model, long long budget_c, double kappa);

/// Drops each block's smallest singular values / sparse entries per the
/// plan and emits factored storage.
CompressedModel apply_plan(const ToyModel& model, const HpaPlan& plan);

struct KappaSweepRow {
    long long budget = 0;
    double kappa = 0.0;
    double loss = 0.0;
    std::optional<double> perplexity;
    long long slr_params = 0;
    long long total_params = 0;
    bool best_for_budget = false;
    bool ok = true;
    std::string error;
};

/// Grid evaluation over budgets x kappas; per-cell failures are recorded
/// without aborting the grid. Rows come back sorted by (budget, kappa).
std::vector<KappaSweepRow> kappa_sweep(const ToyModel& model, std::span<const long long> budgets,
                                       std::span<const double> kappas,
                                       std::span<const Batch> eval_batches, int workers = 0);

std::string kappa_sweep_to_csv(std::span<const KappaSweepRow> rows);

} // namespace salaad
