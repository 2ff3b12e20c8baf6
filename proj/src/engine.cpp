#include "salaad/engine.hpp"

#include <cmath>
#include <stdexcept>

#include "salaad/errors.hpp"
#include "salaad/prox.hpp"

namespace salaad {

BlockState make_block(std::string name, Matrix x, double rho) {
    if (rho <= 0.0) throw std::invalid_argument("make_block: rho must be positive");
    BlockState b;
    b.name = std::move(name);
    b.l = Matrix(x.rows(), x.cols());
    b.s = Matrix(x.rows(), x.cols());
    b.y = Matrix(x.rows(), x.cols());
    b.x = std::move(x);
    b.rho = rho;
    return b;
}

double rho_for_block(int n, int m, int n_blocks, double c) {
    if (n <= 0 || m <= 0 || n_blocks <= 0 || c <= 0.0)
        throw std::invalid_argument("rho_for_block: all arguments must be positive");
    return c / (static_cast<double>(n_blocks) *
                std::sqrt(static_cast<double>(n) * static_cast<double>(m)));
}

PenaltyResult structural_penalty(const BlockState& b) {
    if (!b.x.same_shape(b.l) || !b.x.same_shape(b.s) || !b.x.same_shape(b.y))
        throw std::invalid_argument("structural_penalty: block tensors have inconsistent shapes");
    PenaltyResult out;
    out.grad_x = Matrix(b.x.rows(), b.x.cols());
    double acc = 0.0;
    const double inv_rho = 1.0 / b.rho;
    for (std::size_t i = 0; i < b.x.data().size(); ++i) {
        const double resid = b.x.data()[i] - b.l.data()[i] - b.s.data()[i];
        const double shifted = resid + b.y.data()[i] * inv_rho;
        acc += shifted * shifted;
        out.grad_x.data()[i] = b.rho * resid + b.y.data()[i];
    }
    out.value = 0.5 * b.rho * acc;
    return out;
}

void slr_adaptation_sweep(BlockState& b, int j_inner) {
    if (j_inner < 1) throw std::invalid_argument("slr_adaptation_sweep: j_inner must be >= 1");
    const double inv_rho = 1.0 / b.rho;
    for (int j = 0; j < j_inner; ++j) {
        Matrix z = b.x;
        z -= b.s;
        for (std::size_t i = 0; i < z.data().size(); ++i)
            z.data()[i] += b.y.data()[i] * inv_rho;
        SvtResult low;
        try {
            low = svt_full(z, b.alpha * inv_rho);
        } catch (const NumericalError& e) {
            throw NumericalError("block '" + b.name + "': " + e.what());
        }
        b.l = std::move(low.value);
        b.last_singular_values = std::move(low.shrunk_singular_values);

        Matrix w = b.x;
        w -= b.l;
        for (std::size_t i = 0; i < w.data().size(); ++i)
            w.data()[i] += b.y.data()[i] * inv_rho;
        b.s = soft_threshold(w, b.beta * inv_rho);

        for (std::size_t i = 0; i < b.y.data().size(); ++i)
            b.y.data()[i] += b.rho * (b.x.data()[i] - b.l.data()[i] - b.s.data()[i]);
    }
}

void controller_update(BlockState& b, const ControllerConfig& cfg) {
    if (b.last_singular_values.empty())
        throw StateError("controller_update: block '" + b.name +
                         "' has no cached spectrum; run an adaptation sweep first");
    const double rank_ratio = effective_rank_ratio(b.last_singular_values, cfg.gamma);
    const double dens = density(b.s, 0.0);
    b.alpha += b.rho * (rank_ratio - cfg.target_rank_ratio) * cfg.delta_alpha;
    b.beta += b.rho * (dens - cfg.target_density) * cfg.delta_beta;
    if (b.alpha < 0.0) b.alpha = 0.0;
    if (b.beta < 0.0) b.beta = 0.0;
}

Matrix surrogate(const BlockState& b) {
    if (!b.l.same_shape(b.s))
        throw std::invalid_argument("surrogate: component shapes differ");
    return b.l + b.s;
}

double reconstruction_error(const BlockState& b) {
    Matrix r = b.x;
    r -= b.l;
    r -= b.s;
    return frobenius_norm(r);
}

} // namespace salaad
