#include "salaad/rpca.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "salaad/errors.hpp"
#include "salaad/parallel.hpp"
#include "salaad/prox.hpp"

namespace salaad {

namespace {

void validate(const RpcaConfig& cfg) {
    if (cfg.lambda < 0.0) throw std::invalid_argument("rpca: lambda must be positive (or 0 = auto)");
    if (cfg.mu0 < 0.0) throw std::invalid_argument("rpca: mu0 must be positive (or 0 = auto)");
    if (cfg.mu_growth < 1.0) throw std::invalid_argument("rpca: mu_growth must be >= 1");
    if (cfg.mu_cap_factor < 1.0) throw std::invalid_argument("rpca: mu_cap_factor must be >= 1");
    if (cfg.max_iters <= 0) throw std::invalid_argument("rpca: max_iters must be positive");
    if (cfg.primal_tol <= 0.0) throw std::invalid_argument("rpca: primal_tol must be positive");
}

} // namespace

RpcaResult rpca_decompose(const Matrix& m, const RpcaConfig& cfg) {
    validate(cfg);
    ensure_finite(m, "rpca input");

    RpcaResult out;
    out.l = Matrix(m.rows(), m.cols());
    out.s = Matrix(m.rows(), m.cols());

    const double norm_m = frobenius_norm(m);
    if (norm_m == 0.0) {
        out.iters = 1;
        out.converged = true;
        out.l_spectrum.assign(std::min(m.rows(), m.cols()), 0.0);
        return out;
    }

    const double lambda =
        cfg.lambda > 0.0 ? cfg.lambda : 1.0 / std::sqrt(static_cast<double>(std::max(m.rows(), m.cols())));

    const SvdResult dec0 = svd(m);
    const double sigma_max = dec0.singular_values.empty() ? 0.0 : dec0.singular_values[0];
    double mu = cfg.mu0 > 0.0 ? cfg.mu0 : 1.25 / sigma_max;
    const double mu_max = mu * cfg.mu_cap_factor;

    // Dual start of the inexact ALM scheme: Y0 = M / max(||M||_2, ||M||_inf / lambda).
    double max_abs = 0.0;
    for (double v : m.data()) max_abs = std::max(max_abs, std::abs(v));
    const double scale = std::max(sigma_max, max_abs / lambda);
    Matrix y = m * (1.0 / scale);

    std::vector<double> spectrum(dec0.singular_values.size(), 0.0);
    for (int it = 1; it <= cfg.max_iters; ++it) {
        const double inv_mu = 1.0 / mu;

        Matrix z = m;
        z -= out.s;
        for (std::size_t i = 0; i < z.data().size(); ++i) z.data()[i] += y.data()[i] * inv_mu;
        SvtResult low = svt_full(z, inv_mu);
        out.l = std::move(low.value);
        spectrum = std::move(low.shrunk_singular_values);

        Matrix w = m;
        w -= out.l;
        for (std::size_t i = 0; i < w.data().size(); ++i) w.data()[i] += y.data()[i] * inv_mu;
        out.s = soft_threshold(w, lambda * inv_mu);

        double resid_sq = 0.0;
        for (std::size_t i = 0; i < y.data().size(); ++i) {
            const double r = m.data()[i] - out.l.data()[i] - out.s.data()[i];
            y.data()[i] += mu * r;
            resid_sq += r * r;
        }
        out.iters = it;
        out.final_residual = std::sqrt(resid_sq) / norm_m;
        if (out.final_residual <= cfg.primal_tol) {
            out.converged = true;
            break;
        }
        mu = std::min(mu * cfg.mu_growth, mu_max);
    }

    out.rank_ratio = effective_rank_ratio(spectrum, 0.999);
    out.density = density(out.s, 0.0);
    out.l_spectrum = std::move(spectrum);
    return out;
}

RpcaProfile rpca_profile(std::span<const NamedMatrix> blocks, const RpcaConfig& cfg, int workers) {
    RpcaProfile profile;
    profile.blocks.resize(blocks.size());
    parallel_for(blocks.size(), workers, [&](std::size_t i) {
        RpcaBlockStats& st = profile.blocks[i];
        st.name = blocks[i].name;
        st.rows = blocks[i].value->rows();
        st.cols = blocks[i].value->cols();
        try {
            RpcaResult r = rpca_decompose(*blocks[i].value, cfg);
            st.rank_ratio = r.rank_ratio;
            st.density = r.density;
            st.residual = r.final_residual;
            st.iters = r.iters;
            st.converged = r.converged;
        } catch (const std::exception&) {
            st.converged = false;
            st.iters = -1;
        }
    });

    double sum_r = 0.0, sum_d = 0.0;
    for (const auto& b : profile.blocks) {
        sum_r += b.rank_ratio;
        sum_d += b.density;
    }
    const double n = static_cast<double>(profile.blocks.size());
    if (n > 0.0) {
        profile.mean_rank_ratio = sum_r / n;
        profile.mean_density = sum_d / n;
        double var_r = 0.0, var_d = 0.0;
        for (const auto& b : profile.blocks) {
            var_r += (b.rank_ratio - profile.mean_rank_ratio) * (b.rank_ratio - profile.mean_rank_ratio);
            var_d += (b.density - profile.mean_density) * (b.density - profile.mean_density);
        }
        profile.std_rank_ratio = std::sqrt(var_r / n);
        profile.std_density = std::sqrt(var_d / n);
    }
    return profile;
}

std::string profile_to_csv(const RpcaProfile& p) {
    std::ostringstream os;
    os.precision(17);
    os << "block_name,rows,cols,rank_ratio,density,residual,iters\n";
    for (const auto& b : p.blocks)
        os << b.name << ',' << b.rows << ',' << b.cols << ',' << b.rank_ratio << ','
           << b.density << ',' << b.residual << ',' << b.iters << '\n';
    return os.str();
}

std::string profile_to_json(const RpcaProfile& p) {
    nlohmann::json j;
    j["blocks"] = nlohmann::json::array();
    for (const auto& b : p.blocks) {
        j["blocks"].push_back({{"block_name", b.name},
                               {"rows", b.rows},
                               {"cols", b.cols},
                               {"rank_ratio", b.rank_ratio},
                               {"density", b.density},
                               {"residual", b.residual},
                               {"iters", b.iters},
                               {"converged", b.converged}});
    }
    j["mean_rank_ratio"] = p.mean_rank_ratio;
    j["std_rank_ratio"] = p.std_rank_ratio;
    j["mean_density"] = p.mean_density;
    j["std_density"] = p.std_density;
    return j.dump(2);
}

} // namespace salaad
