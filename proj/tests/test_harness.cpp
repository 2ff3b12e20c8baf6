#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "salaad/checkpoint.hpp"
#include "salaad/harness.hpp"

using namespace salaad;
using namespace salaad::testing;

namespace {

RunConfig tiny_run() {
    RunConfig cfg;
    cfg.model.kind = ModelKind::char_lm;
    cfg.model.layer_dims = {6, 12, 8};
    cfg.model.vocab_size = 12;
    cfg.model.context_len = 3;
    cfg.model.seed = 2;
    cfg.engine.k_inner = 5;
    cfg.engine.rho_constant = 0.05;
    cfg.total_cycles = 8;
    cfg.batch_size = 8;
    cfg.eval_every = 4;
    cfg.eval_batch_count = 2;
    cfg.eval_batch_size = 16;
    cfg.workers = 1;
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("run_training in the vanishing-rho limit matches plain Adam") {
    RunConfig slr = tiny_run();
    slr.engine.rho_constant = 1e-30;
    slr.total_cycles = 2;
    RunConfig vanilla = slr;
    vanilla.slr_enabled = false;
    RunResult a = run_training(slr);
    RunResult b = run_training(vanilla);
    for (std::size_t i = 0; i < a.model.params.size(); ++i)
        CHECK(max_abs_diff(a.model.params[i].state.x, b.model.params[i].state.x) <= 1e-9);
}

TEST_CASE("targets at 1 freeze the thresholds at zero, so the surrogate equals X") {
    RunConfig cfg = tiny_run();
    cfg.total_cycles = 3;
    cfg.controller.target_rank_ratio = 1.0;
    cfg.controller.target_density = 1.0;
    RunResult res = run_training(cfg);
    for (const auto& rec : res.metrics) CHECK(rec.avg_recon_error <= 1e-10);
    for (const auto& p : res.model.params) {
        if (!p.regulated) continue;
        CHECK(p.state.alpha == 0.0);
        CHECK(p.state.beta == 0.0);
        CHECK(frobenius_norm(p.state.l - p.state.x) <= 1e-10 * frobenius_norm(p.state.x));
        CHECK(frobenius_norm(p.state.s) <= 1e-10);
    }
}

TEST_CASE("metrics records are internally consistent") {
    RunConfig cfg = tiny_run();
    RunResult res = run_training(cfg);
    REQUIRE(res.metrics.size() == static_cast<std::size_t>(cfg.total_cycles));
    for (const auto& rec : res.metrics) {
        double sum = 0.0;
        for (const auto& b : rec.per_block) sum += b.delta;
        CHECK(rec.avg_recon_error ==
              doctest::Approx(sum / rec.per_block.size()).epsilon(1e-12));
    }
    // eval fields appear exactly at the eval interval and the final cycle
    for (const auto& rec : res.metrics) {
        const bool should = rec.cycle % cfg.eval_every == 0 || rec.cycle == cfg.total_cycles;
        CHECK(rec.eval_loss_x.has_value() == should);
        CHECK(rec.eval_loss_surrogate.has_value() == should);
    }
}

TEST_CASE("identical configs produce bit-identical metrics logs") {
    const std::string dir_a = (std::filesystem::temp_directory_path() / "salaad_det_a").string();
    const std::string dir_b = (std::filesystem::temp_directory_path() / "salaad_det_b").string();
    RunConfig cfg = tiny_run();
    cfg.total_cycles = 4;
    cfg.output_dir = dir_a;
    run_training(cfg);
    cfg.output_dir = dir_b;
    run_training(cfg);
    CHECK(slurp(dir_a + "/metrics.ndjson") == slurp(dir_b + "/metrics.ndjson"));
    CHECK(!slurp(dir_a + "/metrics.ndjson").empty());
    CHECK(slurp(dir_a + "/summary.csv") == slurp(dir_b + "/summary.csv"));
    // Checkpoints at the eval interval and the final model are on disk.
    CHECK(std::filesystem::exists(dir_a + "/checkpoint_4.slrc"));
    CHECK(std::filesystem::exists(dir_a + "/final.slrc"));
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
}

TEST_CASE("embedding ablation shares non-embedding initial weights across arms") {
    RunConfig cfg = tiny_run();
    cfg.total_cycles = 2;
    EmbeddingAblation ab = embedding_ablation(cfg);
    ToyModel fresh_with = build_model(ab.with_embedding.model.cfg, cfg.engine.rho_constant);
    ToyModel fresh_without = build_model(ab.without_embedding.model.cfg, cfg.engine.rho_constant);
    REQUIRE(fresh_with.params.size() == fresh_without.params.size());
    for (std::size_t i = 0; i < fresh_with.params.size(); ++i)
        CHECK(fresh_with.params[i].state.x == fresh_without.params[i].state.x);
    CHECK(ab.with_embedding.model.find("embedding")->regulated);
    CHECK_FALSE(ab.without_embedding.model.find("embedding")->regulated);
}

TEST_CASE("deployment_curve: zero budget reproduces the surrogate metric") {
    RunConfig cfg = tiny_run();
    RunResult res = run_training(cfg);
    const std::vector<Batch> eval = make_eval_batches(cfg);
    const double surrogate_loss = evaluate(res.model, eval, WeightSource::surrogate).loss;
    std::vector<long long> budgets{0};
    DeploymentCurve curve = deployment_curve(res.model, budgets, 0.7, eval);
    REQUIRE(curve.main.size() == 1);
    CHECK(curve.main[0].ok);
    CHECK(curve.main[0].loss == doctest::Approx(surrogate_loss).epsilon(1e-9));
}

TEST_CASE("deployment_curve param counts strictly decrease with bigger budgets") {
    RunConfig cfg = tiny_run();
    cfg.total_cycles = 6;
    RunResult res = run_training(cfg);
    auto [c_l, c_s] = removable_counts(res.model);
    const std::vector<Batch> eval = make_eval_batches(cfg);
    std::vector<long long> budgets{(c_l + c_s) / 10, (c_l + c_s) / 2};
    DeploymentCurve curve = deployment_curve(res.model, budgets, 0.7, eval);
    REQUIRE(curve.main.size() == 2);
    REQUIRE(curve.main[0].ok);
    REQUIRE(curve.main[1].ok);
    CHECK(curve.main[1].total_params < curve.main[0].total_params);
    const std::string csv = curve_to_csv(curve);
    CHECK(csv.find("series,budget") == 0);
}

TEST_CASE("deployment_curve matches baseline points on total params") {
    RunConfig cfg = tiny_run();
    cfg.total_cycles = 5;
    RunResult salaad_run = run_training(cfg);
    RunConfig vcfg = cfg;
    vcfg.slr_enabled = false;
    RunResult vanilla = run_training(vcfg);
    RpcaConfig rcfg;
    rcfg.max_iters = 100;
    rcfg.primal_tol = 1e-6;
    rpca_fill_surrogates(vanilla.model, rcfg, 2);

    auto [c_l, c_s] = removable_counts(salaad_run.model);
    const std::vector<Batch> eval = make_eval_batches(cfg);
    std::vector<long long> budgets{(c_l + c_s) / 4};
    DeploymentCurve curve = deployment_curve(salaad_run.model, budgets, 0.7, eval,
                                             &vanilla.model);
    REQUIRE(curve.baseline.size() == 1);
    CHECK(curve.baseline[0].ok);
    // Matched within one removal unit.
    const long long unit = 6 + 12 * 3;  // generous bound: rows+cols of the largest block
    CHECK(std::abs(curve.baseline[0].total_params - curve.main[0].total_params) <= unit);
}

TEST_CASE("ablation_grid single cell equals a direct run") {
    RunConfig cfg = tiny_run();
    cfg.total_cycles = 3;
    AblationAxes axes;
    axes.delta_alpha = {cfg.controller.delta_alpha};
    axes.delta_beta = {cfg.controller.delta_beta};
    axes.rho_constant = {cfg.engine.rho_constant};
    auto rows = ablation_grid(cfg, axes);
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].ok);

    RunConfig direct_cfg = cfg;
    direct_cfg.output_dir.clear();
    direct_cfg.workers = 1;
    RunResult direct = run_training(direct_cfg);
    const std::vector<Batch> eval = make_eval_batches(direct_cfg);
    CHECK(rows[0].eval_x == evaluate(direct.model, eval, WeightSource::dense_x).loss);
    CHECK(rows[0].param_count == surrogate_param_count(direct.model));
    const std::string csv = ablation_to_csv(rows);
    CHECK(csv.find("delta_alpha,delta_beta") == 0);
}

TEST_CASE("profile_model reads the surrogate surface") {
    RunConfig cfg = tiny_run();
    cfg.total_cycles = 4;
    RunResult res = run_training(cfg);
    RpcaConfig rcfg;
    rcfg.max_iters = 150;
    rcfg.primal_tol = 1e-6;
    RpcaProfile p = profile_model(res.model, rcfg, WeightSource::surrogate, 2);
    CHECK(p.blocks.size() == static_cast<std::size_t>(res.model.regulated_count()));
    for (const auto& b : p.blocks) CHECK(b.rows > 0);
}
