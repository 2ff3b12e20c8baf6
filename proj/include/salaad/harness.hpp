#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "salaad/config.hpp"
#include "salaad/hpa.hpp"
#include "salaad/rpca.hpp"
#include "salaad/toy_model.hpp"

namespace salaad {

struct BlockMetrics {
    std::string name;
    double delta = 0.0;  // ||X - L - S||_F
    std::optional<double> rank_ratio;
    double density = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
};

struct MetricsRecord {
    int cycle = 0;
    double train_loss = 0.0;      // mean task loss over the cycle's gradient steps
    double avg_recon_error = 0.0; // mean of per_block delta
    std::vector<BlockMetrics> per_block;  // regulated blocks only
    std::optional<double> eval_loss_x;
    std::optional<double> eval_loss_surrogate;
};

struct RunResult {
    ToyModel model;
    AdamState adam;
    std::vector<MetricsRecord> metrics;
    bool diverged = false;
    std::string divergence_message;
};

/// One full training job: K guided gradient steps on task + structural
/// penalty, then an adaptation sweep and a controller update per regulated
/// block, per cycle. Writes metrics.ndjson / summary.csv / checkpoints
/// under cfg.output_dir when set.
RunResult run_training(const RunConfig& cfg);

/// The fixed evaluation set a RunConfig implies (deterministic).
std::vector<Batch> make_eval_batches(const RunConfig& cfg);

struct EmbeddingAblation {
    RunResult with_embedding;
    RunResult without_embedding;
};
EmbeddingAblation embedding_ablation(const RunConfig& cfg);

struct CurvePoint {
    long long budget = 0;
    long long slr_params = 0;
    long long total_params = 0;
    double loss = 0.0;
    std::optional<double> perplexity;
    bool ok = true;
    std::string error;
};

struct DeploymentCurve {
    std::vector<CurvePoint> main;
    std::vector<CurvePoint> baseline;  // matched on total param count; empty if no baseline
};

/// HPA-compresses the model at each budget and evaluates. When a baseline
/// model is given (a vanilla model with RPCA-filled surrogates), it is
/// compressed to matching total parameter counts for comparison.
DeploymentCurve deployment_curve(const ToyModel& model, std::span<const long long> budgets,
                                 double kappa, std::span<const Batch> eval_batches,
                                 const ToyModel* baseline = nullptr);

std::string curve_to_csv(const DeploymentCurve& curve);

struct AblationAxes {
    std::vector<double> delta_alpha;
    std::vector<double> delta_beta;
    std::vector<double> rho_constant;
};

struct AblationRow {
    double delta_alpha = 0.0;
    double delta_beta = 0.0;
    double rho_constant = 0.0;
    double eval_x = 0.0;
    double eval_surrogate = 0.0;
    long long param_count = 0;  // surrogate storage of the final model
    bool ok = true;
    std::string error;
};

/// Cartesian-product training runs over the three axes (workers from
/// base.workers). Per-cell failures are recorded, not propagated.
std::vector<AblationRow> ablation_grid(const RunConfig& base, const AblationAxes& axes);

std::string ablation_to_csv(std::span<const AblationRow> rows);

/// rpca_profile over the model's regulated blocks, reading either the
/// dense weights or the surrogate L+S.
RpcaProfile profile_model(const ToyModel& model, const RpcaConfig& cfg, WeightSource source,
                          int workers = 0);

/// Decomposes every regulated block's dense X and installs the recovered
/// (L, S) as the block surrogate (the post-hoc baseline recipe).
void rpca_fill_surrogates(ToyModel& model, const RpcaConfig& cfg, int workers = 0);

} // namespace salaad
