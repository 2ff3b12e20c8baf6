#include "salaad/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "salaad/checkpoint.hpp"
#include "salaad/errors.hpp"
#include "salaad/parallel.hpp"

namespace salaad {

namespace {

using nlohmann::json;

json record_to_json(const MetricsRecord& r) {
    json j;
    j["cycle"] = r.cycle;
    j["train_loss"] = r.train_loss;
    j["avg_recon_error"] = r.avg_recon_error;
    j["per_block"] = json::array();
    for (const auto& b : r.per_block) {
        json bj{{"name", b.name}, {"delta", b.delta}, {"density", b.density},
                {"alpha", b.alpha}, {"beta", b.beta}};
        if (b.rank_ratio)
            bj["rank_ratio"] = *b.rank_ratio;
        else
            bj["rank_ratio"] = nullptr;
        j["per_block"].push_back(std::move(bj));
    }
    j["eval_loss_x"] = r.eval_loss_x ? json(*r.eval_loss_x) : json(nullptr);
    j["eval_loss_surrogate"] =
        r.eval_loss_surrogate ? json(*r.eval_loss_surrogate) : json(nullptr);
    return j;
}

void write_summary_csv(const std::string& path, const std::vector<MetricsRecord>& metrics) {
    std::ofstream out(path, std::ios::trunc);
    out.precision(17);
    out << "cycle,train_loss,avg_recon_error,mean_rank_ratio,mean_density,eval_loss_x,"
           "eval_loss_surrogate\n";
    for (const auto& r : metrics) {
        double sum_rr = 0.0, sum_d = 0.0;
        int n_rr = 0;
        for (const auto& b : r.per_block) {
            if (b.rank_ratio) {
                sum_rr += *b.rank_ratio;
                ++n_rr;
            }
            sum_d += b.density;
        }
        out << r.cycle << ',' << r.train_loss << ',' << r.avg_recon_error << ',';
        if (n_rr > 0) out << sum_rr / n_rr;
        out << ',';
        if (!r.per_block.empty()) out << sum_d / static_cast<double>(r.per_block.size());
        out << ',';
        if (r.eval_loss_x) out << *r.eval_loss_x;
        out << ',';
        if (r.eval_loss_surrogate) out << *r.eval_loss_surrogate;
        out << '\n';
    }
}

} // namespace

std::vector<Batch> make_eval_batches(const RunConfig& cfg) {
    // Separate stream from the training data: offset seed keeps the eval
    // set fixed and disjoint from training randomness.
    DataSource source(cfg.model, cfg.data_seed + 0x9E3779B97F4A7C15ULL, cfg.corpus_path);
    std::vector<Batch> batches;
    batches.reserve(cfg.eval_batch_count);
    for (int i = 0; i < cfg.eval_batch_count; ++i) batches.push_back(source.next(cfg.eval_batch_size));
    return batches;
}

RunResult run_training(const RunConfig& cfg) {
    RunResult result;
    result.model = build_model(cfg.model, cfg.engine.rho_constant);
    result.adam = make_adam_state(result.model, cfg.adam);
    DataSource data(cfg.model, cfg.data_seed, cfg.corpus_path);
    const std::vector<Batch> eval_batches = make_eval_batches(cfg);

    const bool to_disk = !cfg.output_dir.empty();
    std::ofstream ndjson;
    if (to_disk) {
        std::filesystem::create_directories(cfg.output_dir);
        ndjson.open(cfg.output_dir + "/metrics.ndjson", std::ios::trunc);
        std::ofstream cfg_out(cfg.output_dir + "/config.cfg", std::ios::trunc);
        cfg_out << dump_run_config(cfg);
    }

    std::vector<int> regulated_idx;
    for (int i = 0; i < static_cast<int>(result.model.params.size()); ++i)
        if (result.model.params[i].regulated) regulated_idx.push_back(i);

    for (int cycle = 1; cycle <= cfg.total_cycles; ++cycle) {
        double cycle_loss = 0.0;
        try {
            for (int k = 0; k < cfg.engine.k_inner; ++k) {
                const Batch batch = data.next(cfg.batch_size);
                ForwardBackwardResult fb = forward_backward(result.model, batch);
                if (!std::isfinite(fb.loss))
                    throw DivergenceError("run_training: non-finite loss at cycle " +
                                          std::to_string(cycle));
                cycle_loss += fb.loss;
                if (cfg.slr_enabled) {
                    for (int idx : regulated_idx) {
                        const PenaltyResult pen =
                            structural_penalty(result.model.params[idx].state);
                        fb.grads[idx] += pen.grad_x;
                    }
                }
                adam_step(result.adam, result.model, fb.grads);
            }
            if (cfg.slr_enabled) {
                parallel_for(regulated_idx.size(), cfg.workers, [&](std::size_t i) {
                    slr_adaptation_sweep(result.model.params[regulated_idx[i]].state,
                                         cfg.engine.j_inner);
                });
                for (int idx : regulated_idx)
                    controller_update(result.model.params[idx].state, cfg.controller);
            }
        } catch (const DivergenceError& e) {
            result.diverged = true;
            result.divergence_message = e.what();
        } catch (const NumericalError& e) {
            result.diverged = true;
            result.divergence_message = e.what();
        }
        if (result.diverged) break;

        MetricsRecord rec;
        rec.cycle = cycle;
        rec.train_loss = cycle_loss / cfg.engine.k_inner;
        double delta_sum = 0.0;
        for (int idx : regulated_idx) {
            const BlockState& b = result.model.params[idx].state;
            BlockMetrics bm;
            bm.name = b.name;
            bm.delta = reconstruction_error(b);
            if (!b.last_singular_values.empty())
                bm.rank_ratio = effective_rank_ratio(b.last_singular_values, cfg.controller.gamma);
            bm.density = density(b.s, 0.0);
            bm.alpha = b.alpha;
            bm.beta = b.beta;
            delta_sum += bm.delta;
            rec.per_block.push_back(std::move(bm));
        }
        rec.avg_recon_error =
            regulated_idx.empty() ? 0.0 : delta_sum / static_cast<double>(regulated_idx.size());

        if (cycle % cfg.eval_every == 0 || cycle == cfg.total_cycles) {
            rec.eval_loss_x = evaluate(result.model, eval_batches, WeightSource::dense_x).loss;
            if (cfg.slr_enabled)
                rec.eval_loss_surrogate =
                    evaluate(result.model, eval_batches, WeightSource::surrogate).loss;
            if (to_disk)
                save_checkpoint(result.model,
                                cfg.output_dir + "/checkpoint_" + std::to_string(cycle) + ".slrc");
        }

        if (to_disk && (cycle % cfg.log_every == 0 || cycle == cfg.total_cycles))
            ndjson << record_to_json(rec).dump() << '\n';
        result.metrics.push_back(std::move(rec));
    }

    if (to_disk) {
        ndjson.flush();
        write_summary_csv(cfg.output_dir + "/summary.csv", result.metrics);
        if (!result.diverged) save_checkpoint(result.model, cfg.output_dir + "/final.slrc");
    }
    return result;
}

EmbeddingAblation embedding_ablation(const RunConfig& cfg) {
    if (cfg.model.kind != ModelKind::char_lm)
        throw ConfigError("embedding_ablation: requires a char_lm model");
    EmbeddingAblation out;
    RunConfig with = cfg;
    with.model.include_embedding_block = true;
    if (!cfg.output_dir.empty()) with.output_dir = cfg.output_dir + "/with_embedding";
    RunConfig without = cfg;
    without.model.include_embedding_block = false;
    if (!cfg.output_dir.empty()) without.output_dir = cfg.output_dir + "/without_embedding";
    out.with_embedding = run_training(with);
    out.without_embedding = run_training(without);
    return out;
}

DeploymentCurve deployment_curve(const ToyModel& model, std::span<const long long> budgets,
                                 double kappa, std::span<const Batch> eval_batches,
                                 const ToyModel* baseline) {
    if (budgets.empty()) throw std::invalid_argument("deployment_curve: no budgets");
    std::vector<long long> sorted(budgets.begin(), budgets.end());
    std::sort(sorted.begin(), sorted.end());

    DeploymentCurve curve;
    for (long long budget : sorted) {
        CurvePoint pt;
        pt.budget = budget;
        try {
            const CompressedModel cm = apply_plan(model, make_plan(model, budget, kappa));
            const EvalResult ev = evaluate(cm.model, eval_batches, WeightSource::compressed);
            pt.slr_params = cm.slr_param_count;
            pt.total_params = total_param_count(cm);
            pt.loss = ev.loss;
            pt.perplexity = ev.perplexity;
        } catch (const std::exception& e) {
            pt.ok = false;
            pt.error = e.what();
        }
        curve.main.push_back(std::move(pt));
    }

    if (baseline) {
        const long long base_surrogate = surrogate_param_count(*baseline);
        const auto [base_cl, base_cs] = removable_counts(*baseline);
        for (const CurvePoint& target : curve.main) {
            if (!target.ok) continue;
            CurvePoint pt;
            long long want = base_surrogate - target.total_params;
            want = std::clamp<long long>(want, 0, base_cl + base_cs);
            pt.budget = want;
            try {
                const CompressedModel cm = apply_plan(*baseline, make_plan(*baseline, want, kappa));
                const EvalResult ev = evaluate(cm.model, eval_batches, WeightSource::compressed);
                pt.slr_params = cm.slr_param_count;
                pt.total_params = total_param_count(cm);
                pt.loss = ev.loss;
                pt.perplexity = ev.perplexity;
            } catch (const std::exception& e) {
                pt.ok = false;
                pt.error = e.what();
            }
            curve.baseline.push_back(std::move(pt));
        }
    }
    return curve;
}

std::string curve_to_csv(const DeploymentCurve& curve) {
    std::ostringstream os;
    os.precision(17);
    os << "series,budget,slr_params,total_params,loss,perplexity,ok,error\n";
    auto emit = [&os](const char* series, const CurvePoint& p) {
        os << series << ',' << p.budget << ',' << p.slr_params << ',' << p.total_params << ','
           << p.loss << ',';
        if (p.perplexity) os << *p.perplexity;
        os << ',' << (p.ok ? 1 : 0) << ',' << p.error << '\n';
    };
    for (const auto& p : curve.main) emit("main", p);
    for (const auto& p : curve.baseline) emit("baseline", p);
    return os.str();
}

std::vector<AblationRow> ablation_grid(const RunConfig& base, const AblationAxes& axes) {
    if (axes.delta_alpha.empty() || axes.delta_beta.empty() || axes.rho_constant.empty())
        throw std::invalid_argument("ablation_grid: all axes must be nonempty");
    struct Cell {
        double da, db, rc;
    };
    std::vector<Cell> cells;
    for (double da : axes.delta_alpha)
        for (double db : axes.delta_beta)
            for (double rc : axes.rho_constant) cells.push_back({da, db, rc});

    std::vector<AblationRow> rows(cells.size());
    parallel_for(cells.size(), base.workers, [&](std::size_t i) {
        AblationRow& row = rows[i];
        row.delta_alpha = cells[i].da;
        row.delta_beta = cells[i].db;
        row.rho_constant = cells[i].rc;
        try {
            RunConfig cfg = base;
            cfg.controller.delta_alpha = cells[i].da;
            cfg.controller.delta_beta = cells[i].db;
            cfg.engine.rho_constant = cells[i].rc;
            cfg.output_dir.clear();  // grid cells stay off disk
            cfg.workers = 1;
            RunResult res = run_training(cfg);
            if (res.diverged) throw DivergenceError(res.divergence_message);
            const std::vector<Batch> eval_batches = make_eval_batches(cfg);
            row.eval_x = evaluate(res.model, eval_batches, WeightSource::dense_x).loss;
            row.eval_surrogate = evaluate(res.model, eval_batches, WeightSource::surrogate).loss;
            row.param_count = surrogate_param_count(res.model);
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
    });
    return rows;
}

std::string ablation_to_csv(std::span<const AblationRow> rows) {
    std::ostringstream os;
    os.precision(17);
    os << "delta_alpha,delta_beta,rho_constant,eval_x,eval_surrogate,param_count,ok,error\n";
    for (const auto& r : rows)
        os << r.delta_alpha << ',' << r.delta_beta << ',' << r.rho_constant << ',' << r.eval_x
           << ',' << r.eval_surrogate << ',' << r.param_count << ',' << (r.ok ? 1 : 0) << ','
           << r.error << '\n';
    return os.str();
}

RpcaProfile profile_model(const ToyModel& model, const RpcaConfig& cfg, WeightSource source,
                          int workers) {
    std::vector<Matrix> storage;
    std::vector<NamedMatrix> views;
    for (const auto& p : model.params) {
        if (!p.regulated) continue;
        if (source == WeightSource::dense_x) {
            if (!p.has_x) throw StateError("profile: block '" + p.state.name + "' has no dense weight");
        } else if (!p.has_surrogate) {
            throw StateError("profile: block '" + p.state.name + "' has no surrogate tensors");
        }
    }
    storage.reserve(model.params.size());
    for (const auto& p : model.params) {
        if (!p.regulated) continue;
        if (source == WeightSource::dense_x) {
            views.push_back({p.state.name, &p.state.x});
        } else {
            storage.push_back(p.state.l + p.state.s);
            views.push_back({p.state.name, &storage.back()});
        }
    }
    return rpca_profile(views, cfg, workers);
}

void rpca_fill_surrogates(ToyModel& model, const RpcaConfig& cfg, int workers) {
    std::vector<int> regulated_idx;
    for (int i = 0; i < static_cast<int>(model.params.size()); ++i)
        if (model.params[i].regulated) regulated_idx.push_back(i);
    parallel_for(regulated_idx.size(), workers, [&](std::size_t i) {
        ModelParam& p = model.params[regulated_idx[i]];
        if (!p.has_x) throw StateError("rpca: block '" + p.state.name + "' has no dense weight");
        RpcaResult r = rpca_decompose(p.state.x, cfg);
        p.state.l = std::move(r.l);
        p.state.s = std::move(r.s);
        p.state.y = Matrix(p.state.x.rows(), p.state.x.cols());
        p.state.last_singular_values = std::move(r.l_spectrum);
        p.has_surrogate = true;
    });
}

} // namespace salaad
