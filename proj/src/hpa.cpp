#include "salaad/hpa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "salaad/errors.hpp"
#include "salaad/parallel.hpp"
#include "salaad/svd.hpp"

namespace salaad {

namespace {

// Numerical-rank cutoff for spectra that come from a reconstructed L
// rather than an exact SVT output.
double rank_tolerance(int rows, int cols, double sigma_max) {
    return static_cast<double>(std::max(rows, cols)) *
           std::numeric_limits<double>::epsilon() * sigma_max;
}

// Descending spectrum of l: the cached sweep spectrum when present,
// otherwise a fresh decomposition.
std::vector<double> block_spectrum(const BlockState& b) {
    if (!b.last_singular_values.empty()) return b.last_singular_values;
    return svd(b.l).singular_values;
}

int count_retained(const std::vector<double>& spectrum, int rows, int cols) {
    if (spectrum.empty()) return 0;
    const double tol = rank_tolerance(rows, cols, spectrum.front());
    int r = 0;
    for (double s : spectrum)
        if (s > tol) ++r;
    return r;
}

struct SideEvent {
    double fraction;   // k / units_in_block
    double magnitude;  // k-th smallest unit in its block
    int block;         // index into the regulated-block list
    long long k;       // 1-based count within the block
    long long cost;
};

// Takes events in (fraction, magnitude, block, k) order until the side
// budget is met; this keeps removal fractions uniform across blocks up to
// rounding and makes the removed set grow monotonically with the budget.
std::vector<long long> sweep_side(std::vector<SideEvent>& events, double side_budget,
                                  int n_blocks) {
    std::vector<long long> taken(n_blocks, 0);
    if (side_budget <= 0.0) return taken;
    std::sort(events.begin(), events.end(), [](const SideEvent& a, const SideEvent& b) {
        if (a.fraction != b.fraction) return a.fraction < b.fraction;
        if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
        if (a.block != b.block) return a.block < b.block;
        return a.k < b.k;
    });
    long long removed = 0;
    for (const SideEvent& e : events) {
        taken[e.block] = e.k;
        removed += e.cost;
        if (static_cast<double>(removed) >= side_budget) break;
    }
    return taken;
}

struct RegulatedView {
    const ModelParam* param;
    std::vector<double> spectrum;  // descending
    int retained = 0;
    std::vector<std::pair<double, long long>> sparse_magnitudes;  // (|value|, flat index) ascending
};

std::vector<RegulatedView> regulated_views(const ToyModel& model) {
    std::vector<RegulatedView> views;
    for (const auto& p : model.params) {
        if (!p.regulated) continue;
        if (!p.has_surrogate)
            throw StateError("hpa: block '" + p.state.name + "' has no surrogate tensors");
        RegulatedView v;
        v.param = &p;
        v.spectrum = block_spectrum(p.state);
        v.retained = count_retained(v.spectrum, p.state.l.rows(), p.state.l.cols());
        const auto& s = p.state.s.data();
        for (long long i = 0; i < static_cast<long long>(s.size()); ++i)
            if (s[i] != 0.0) v.sparse_magnitudes.emplace_back(std::abs(s[i]), i);
        std::sort(v.sparse_magnitudes.begin(), v.sparse_magnitudes.end());
        views.push_back(std::move(v));
    }
    return views;
}

} // namespace

std::pair<long long, long long> removable_counts(const ToyModel& model) {
    long long c_l = 0, c_s = 0;
    for (const auto& v : regulated_views(model)) {
        c_l += static_cast<long long>(v.retained) *
               (v.param->state.x.rows() + v.param->state.x.cols());
        c_s += static_cast<long long>(v.sparse_magnitudes.size());
    }
    return {c_l, c_s};
}

long long surrogate_param_count(const ToyModel& model) {
    auto [c_l, c_s] = removable_counts(model);
    long long dense = 0;
    for (const auto& p : model.params)
        if (!p.regulated)
            dense += static_cast<long long>(p.state.x.rows()) * p.state.x.cols();
    return c_l + c_s + dense;
}

long long total_param_count(const CompressedModel& cm) {
    long long dense = 0;
    for (const auto& p : cm.model.params)
        if (!p.regulated)
            dense += static_cast<long long>(p.state.x.rows()) * p.state.x.cols();
    return cm.slr_param_count + dense;
}

HpaPlan make_plan(const ToyModel& model, long long budget_c, double kappa) {
    if (budget_c < 0) throw std::invalid_argument("hpa: budget must be nonnegative");
    if (kappa < 0.0 || kappa > 1.0) throw std::invalid_argument("hpa: kappa must be in [0, 1]");

    const auto views = regulated_views(model);
    HpaPlan plan;
    plan.budget_c = budget_c;
    plan.kappa = kappa;
    for (const auto& v : views) {
        plan.c_l += static_cast<long long>(v.retained) *
                    (v.param->state.x.rows() + v.param->state.x.cols());
        plan.c_s += static_cast<long long>(v.sparse_magnitudes.size());
    }
    if (budget_c > plan.c_l + plan.c_s)
        throw BudgetError("hpa: budget " + std::to_string(budget_c) +
                          " exceeds removable parameters C_L+C_S = " +
                          std::to_string(plan.c_l + plan.c_s));

    // Split by kappa; a side that would overflow is capped and its surplus
    // moves to the other side (always feasible by the check above).
    double budget_l = kappa * static_cast<double>(budget_c);
    double budget_s = (1.0 - kappa) * static_cast<double>(budget_c);
    if (budget_l > static_cast<double>(plan.c_l)) {
        budget_s += budget_l - static_cast<double>(plan.c_l);
        budget_l = static_cast<double>(plan.c_l);
    } else if (budget_s > static_cast<double>(plan.c_s)) {
        budget_l += budget_s - static_cast<double>(plan.c_s);
        budget_s = static_cast<double>(plan.c_s);
    }
    plan.phi_l = plan.c_l > 0 ? budget_l / static_cast<double>(plan.c_l) : 0.0;
    plan.phi_s = plan.c_s > 0 ? budget_s / static_cast<double>(plan.c_s) : 0.0;

    std::vector<SideEvent> low_events, sparse_events;
    for (int bi = 0; bi < static_cast<int>(views.size()); ++bi) {
        const auto& v = views[bi];
        const long long cost = v.param->state.x.rows() + v.param->state.x.cols();
        for (int k = 1; k <= v.retained; ++k)
            low_events.push_back({static_cast<double>(k) / v.retained,
                                  v.spectrum[v.retained - k], bi, k, cost});
        const long long nnz = static_cast<long long>(v.sparse_magnitudes.size());
        for (long long k = 1; k <= nnz; ++k)
            sparse_events.push_back({static_cast<double>(k) / static_cast<double>(nnz),
                                     v.sparse_magnitudes[k - 1].first, bi, k, 1});
    }
    const auto low_taken = sweep_side(low_events, budget_l, static_cast<int>(views.size()));
    const auto sparse_taken = sweep_side(sparse_events, budget_s, static_cast<int>(views.size()));

    for (int bi = 0; bi < static_cast<int>(views.size()); ++bi) {
        const auto& v = views[bi];
        BlockDrops d;
        d.block_name = v.param->state.name;
        d.retained_singular = v.retained;
        d.retained_sparse = static_cast<long long>(v.sparse_magnitudes.size());
        d.drop_singular = static_cast<int>(low_taken[bi]);
        d.drop_sparse = sparse_taken[bi];
        plan.planned_removed +=
            d.drop_singular * (v.param->state.x.rows() + v.param->state.x.cols()) + d.drop_sparse;
        plan.per_block.push_back(std::move(d));
    }
    return plan;
}

CompressedModel apply_plan(const ToyModel& model, const HpaPlan& plan) {
    const auto views = regulated_views(model);
    if (views.size() != plan.per_block.size())
        throw StateError("hpa: plan block count does not match model");

    CompressedModel cm;
    cm.model = model;
    cm.model.compressed = true;
    cm.factors.resize(views.size());

    for (std::size_t bi = 0; bi < views.size(); ++bi) {
        const auto& v = views[bi];
        const auto& d = plan.per_block[bi];
        if (d.block_name != v.param->state.name ||
            d.retained_singular != v.retained ||
            d.retained_sparse != static_cast<long long>(v.sparse_magnitudes.size()))
            throw StateError("hpa: plan does not match current surrogate state for block '" +
                             v.param->state.name + "'");

        ModelParam* target = cm.model.find(v.param->state.name);
        const int rows = v.param->state.x.rows();
        const int cols = v.param->state.x.cols();
        const int keep = v.retained - d.drop_singular;

        CompressedBlock cb;
        cb.name = v.param->state.name;
        if (keep > 0) {
            const SvdResult dec = svd(v.param->state.l);
            cb.left = Matrix(rows, keep);
            cb.right = Matrix(keep, cols);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < keep; ++j)
                    cb.left(i, j) = dec.u(i, j) * dec.singular_values[j];
            for (int j = 0; j < keep; ++j)
                for (int i = 0; i < cols; ++i) cb.right(j, i) = dec.vt(j, i);
            target->state.l = matmul(cb.left, cb.right);
            target->state.last_singular_values.assign(std::min(rows, cols), 0.0);
            for (int j = 0; j < keep; ++j)
                target->state.last_singular_values[j] = dec.singular_values[j];
        } else {
            target->state.l = Matrix(rows, cols);
            target->state.last_singular_values.assign(std::min(rows, cols), 0.0);
        }

        Matrix pruned = v.param->state.s;
        for (long long k = 0; k < d.drop_sparse; ++k)
            pruned.data()[static_cast<std::size_t>(v.sparse_magnitudes[k].second)] = 0.0;
        cb.nnz = d.retained_sparse - d.drop_sparse;
        cb.sparse = pruned;
        target->state.s = std::move(pruned);
        target->state.y = Matrix(rows, cols);

        cm.slr_param_count += static_cast<long long>(keep) * (rows + cols) + cb.nnz;
        cm.factors[bi] = std::move(cb);
    }
    return cm;
}

std::vector<KappaSweepRow> kappa_sweep(const ToyModel& model, std::span<const long long> budgets,
                                       std::span<const double> kappas,
                                       std::span<const Batch> eval_batches, int workers) {
    if (budgets.empty() || kappas.empty())
        throw std::invalid_argument("kappa_sweep: budgets and kappas must be nonempty");
    std::vector<long long> sorted_budgets(budgets.begin(), budgets.end());
    std::sort(sorted_budgets.begin(), sorted_budgets.end());
    std::vector<double> sorted_kappas(kappas.begin(), kappas.end());
    std::sort(sorted_kappas.begin(), sorted_kappas.end());

    std::vector<KappaSweepRow> rows(sorted_budgets.size() * sorted_kappas.size());
    parallel_for(rows.size(), workers, [&](std::size_t cell) {
        const std::size_t bi = cell / sorted_kappas.size();
        const std::size_t ki = cell % sorted_kappas.size();
        KappaSweepRow& row = rows[cell];
        row.budget = sorted_budgets[bi];
        row.kappa = sorted_kappas[ki];
        try {
            const HpaPlan plan = make_plan(model, row.budget, row.kappa);
            const CompressedModel cm = apply_plan(model, plan);
            const EvalResult ev = evaluate(cm.model, eval_batches, WeightSource::compressed);
            row.loss = ev.loss;
            row.perplexity = ev.perplexity;
            row.slr_params = cm.slr_param_count;
            row.total_params = total_param_count(cm);
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
    });

    for (std::size_t bi = 0; bi < sorted_budgets.size(); ++bi) {
        std::size_t best = rows.size();
        for (std::size_t ki = 0; ki < sorted_kappas.size(); ++ki) {
            const std::size_t cell = bi * sorted_kappas.size() + ki;
            if (!rows[cell].ok) continue;
            if (best == rows.size() || rows[cell].loss < rows[best].loss) best = cell;
        }
        if (best != rows.size()) rows[best].best_for_budget = true;
    }
    return rows;
}

std::string kappa_sweep_to_csv(std::span<const KappaSweepRow> rows) {
    std::ostringstream os;
    os.precision(17);
    os << "budget,kappa,loss,perplexity,slr_params,total_params,best,ok,error\n";
    for (const auto& r : rows) {
        os << r.budget << ',' << r.kappa << ',' << r.loss << ',';
        if (r.perplexity) os << *r.perplexity;
        os << ',' << r.slr_params << ',' << r.total_params << ',' << (r.best_for_budget ? 1 : 0)
           << ',' << (r.ok ? 1 : 0) << ',' << r.error << '\n';
    }
    return os.str();
}

} // namespace salaad
