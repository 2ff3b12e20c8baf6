#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "salaad/engine.hpp"
#include "salaad/errors.hpp"
#include "salaad/prox.hpp"
#include "salaad/svd.hpp"

using namespace salaad;
using namespace salaad::testing;

namespace {

BlockState random_block(int n, int m, double rho, std::mt19937_64& rng) {
    BlockState b = make_block("t", random_matrix(n, m, rng), rho);
    b.l = random_matrix(n, m, rng);
    b.s = soft_threshold(random_matrix(n, m, rng), 1.0);
    b.y = random_matrix(n, m, rng, 0.1);
    return b;
}

// Straight-line transcription of the three adaptation formulas, written
// separately from the engine.
BlockState naive_sweep(BlockState b) {
    Matrix z = b.x - b.s + b.y * (1.0 / b.rho);
    SvdResult dec = svd(z);
    std::vector<double> shrunk = dec.singular_values;
    for (double& s : shrunk) s = std::max(0.0, s - b.alpha / b.rho);
    Matrix us(b.x.rows(), static_cast<int>(shrunk.size()));
    for (int i = 0; i < us.rows(); ++i)
        for (int j = 0; j < us.cols(); ++j) us(i, j) = dec.u(i, j) * shrunk[j];
    b.l = matmul(us, dec.vt);
    b.last_singular_values = shrunk;
    b.s = soft_threshold(b.x - b.l + b.y * (1.0 / b.rho), b.beta / b.rho);
    b.y = b.y + (b.x - b.l - b.s) * b.rho;
    return b;
}

} // namespace

TEST_CASE("rho_for_block scaling law") {
    CHECK(rho_for_block(1, 1, 1, 1.0) == doctest::Approx(1.0));
    CHECK(rho_for_block(4, 9, 2, 12.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(rho_for_block(0, 3, 1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(rho_for_block(3, 3, 1, -1.0), std::invalid_argument);
}

TEST_CASE("structural_penalty scalar case") {
    BlockState b = make_block("s", Matrix(1, 1, {2.0}), 1.0);
    b.l = Matrix(1, 1, {1.0});
    b.s = Matrix(1, 1, {0.5});
    b.y = Matrix(1, 1, {0.1});
    PenaltyResult r = structural_penalty(b);
    CHECK(r.value == doctest::Approx(0.5 * 0.6 * 0.6));
    CHECK(r.grad_x(0, 0) == doctest::Approx(0.6));
}

TEST_CASE("structural_penalty vanishes on a satisfied constraint") {
    std::mt19937_64 rng(2);
    BlockState b = make_block("c", random_matrix(4, 4, rng), 0.5);
    b.l = b.x;
    PenaltyResult r = structural_penalty(b);
    CHECK(r.value == doctest::Approx(0.0));
    CHECK(frobenius_norm(r.grad_x) == doctest::Approx(0.0));
}

TEST_CASE("structural_penalty gradient matches finite differences") {
    std::mt19937_64 rng(8);
    BlockState b = random_block(8, 8, 0.7, rng);
    PenaltyResult analytic = structural_penalty(b);
    Matrix fd = finite_difference_grad(
        [&](const Matrix& x) {
            BlockState probe = b;
            probe.x = x;
            return structural_penalty(probe).value;
        },
        b.x, 1e-5);
    CHECK(max_relative_error(analytic.grad_x, fd) <= 1e-6);
}

TEST_CASE("sweep with zero thresholds is the identity decomposition") {
    std::mt19937_64 rng(3);
    BlockState b = make_block("z", random_matrix(6, 5, rng), 1.0);
    slr_adaptation_sweep(b, 1);
    CHECK(frobenius_norm(b.l - b.x) <= 1e-12 * frobenius_norm(b.x));
    CHECK(frobenius_norm(b.s) <= 1e-12);
    CHECK(frobenius_norm(b.y) <= 1e-12);
}

TEST_CASE("sweep on a rank-1 block with huge beta shrinks the spectrum only") {
    std::mt19937_64 rng(6);
    Matrix a = random_matrix(7, 1, rng);
    Matrix bt = random_matrix(1, 7, rng);
    BlockState b = make_block("r1", matmul(a, bt), 1.0);
    const double sigma1 = svd(b.x).singular_values[0];
    b.alpha = 0.5 * sigma1;  // alpha / rho between 0 and sigma1
    b.beta = 1e6;
    slr_adaptation_sweep(b, 1);
    SvdResult dec = svd(b.l);
    CHECK(dec.singular_values[0] == doctest::Approx(sigma1 - 0.5 * sigma1).epsilon(1e-9));
    CHECK(frobenius_norm(b.s) == 0.0);
    CHECK(frobenius_norm(b.y - (b.x - b.l) * b.rho) <= 1e-12);
}

TEST_CASE("sweep equals an independent transcription of the formulas") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 5; ++trial) {
        BlockState b = random_block(12, 12, 0.8, rng);
        b.alpha = 0.3;
        b.beta = 0.2;
        BlockState want = naive_sweep(b);
        BlockState got = b;
        slr_adaptation_sweep(got, 1);
        CHECK(max_abs_diff(got.l, want.l) <= 1e-12);
        CHECK(max_abs_diff(got.s, want.s) <= 1e-12);
        CHECK(max_abs_diff(got.y, want.y) <= 1e-12);
    }
}

TEST_CASE("sweep leaves a fixed point unchanged") {
    std::mt19937_64 rng(19);
    BlockState b = make_block("fp", random_matrix(8, 8, rng), 1.0);
    slr_adaptation_sweep(b, 1);  // alpha = beta = 0: exact fixed point L = X
    BlockState again = b;
    slr_adaptation_sweep(again, 1);
    CHECK(max_abs_diff(again.l, b.l) <= 1e-12);
    CHECK(max_abs_diff(again.s, b.s) <= 1e-12);
    CHECK(max_abs_diff(again.y, b.y) <= 1e-12);
}

TEST_CASE("dual update identity holds exactly after a sweep") {
    std::mt19937_64 rng(25);
    BlockState b = random_block(10, 6, 0.9, rng);
    b.alpha = 0.4;
    b.beta = 0.1;
    Matrix y_old = b.y;
    slr_adaptation_sweep(b, 1);
    Matrix expected = y_old + (b.x - b.l - b.s) * b.rho;
    CHECK(max_abs_diff(b.y, expected) == 0.0);
}

TEST_CASE("sweep caches the shrunk spectrum and X is untouched") {
    std::mt19937_64 rng(33);
    BlockState b = make_block("cache", random_matrix(9, 7, rng), 1.0);
    Matrix x_before = b.x;
    b.alpha = 0.5;
    slr_adaptation_sweep(b, 2);
    CHECK(b.x == x_before);
    REQUIRE(b.last_singular_values.size() == 7);
    SvdResult dec = svd(b.l);
    for (int i = 0; i < 7; ++i)
        CHECK(dec.singular_values[i] == doctest::Approx(b.last_singular_values[i]).epsilon(1e-9));
}

TEST_CASE("exact-zero sparsity: entries are zero or above the threshold") {
    std::mt19937_64 rng(40);
    BlockState b = make_block("sp", random_matrix(15, 15, rng), 2.0);
    b.beta = 1.0;
    slr_adaptation_sweep(b, 1);
    const double cut = b.beta / b.rho;
    for (double v : b.s.data())
        CHECK((v == 0.0 || std::abs(v) > cut - 1e-15));
}

TEST_CASE("controller is a fixed point at the targets") {
    std::mt19937_64 rng(44);
    BlockState b = make_block("ctl", random_matrix(4, 4, rng), 1.0);
    ControllerConfig cfg;
    cfg.target_rank_ratio = 0.5;
    cfg.target_density = 0.0;
    // Construct a cached state matching the targets exactly.
    b.last_singular_values = {1.0, 1.0, 0.0, 0.0};
    b.s = Matrix(4, 4);
    b.alpha = 0.3;
    b.beta = 0.2;
    // rank ratio at gamma close to 1 is 2/4 = 0.5; density is 0.
    cfg.gamma = 0.999;
    controller_update(b, cfg);
    CHECK(b.alpha == doctest::Approx(0.3));
    CHECK(b.beta == doctest::Approx(0.2));
}

TEST_CASE("controller formula arithmetic") {
    BlockState b = make_block("ar", Matrix(4, 4), 1e-7);
    b.last_singular_values = {1.0, 0.0, 0.0, 0.0};  // rank ratio 0.25
    ControllerConfig cfg;
    cfg.target_rank_ratio = 0.15;
    cfg.delta_alpha = 0.1;
    cfg.target_density = 0.05;
    controller_update(b, cfg);
    CHECK(b.alpha == doctest::Approx(1e-7 * 0.1 * 0.1).epsilon(1e-9));
    // Density 0 < target: beta would go negative, clamps at 0.
    CHECK(b.beta == 0.0);
}

TEST_CASE("controller clamps beta at zero") {
    BlockState b = make_block("cl", Matrix(3, 3), 1.0);
    b.last_singular_values = {0.0, 0.0, 0.0};
    ControllerConfig cfg;
    cfg.target_density = 0.05;
    b.beta = 0.0;
    controller_update(b, cfg);
    CHECK(b.beta == 0.0);
}

TEST_CASE("controller requires a cached spectrum") {
    BlockState b = make_block("raw", Matrix(3, 3), 1.0);
    CHECK_THROWS_AS(controller_update(b, ControllerConfig{}), StateError);
}

TEST_CASE("controller moves alpha and beta in the sign-correct direction") {
    std::mt19937_64 rng(50);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    ControllerConfig cfg;
    for (int trial = 0; trial < 100; ++trial) {
        BlockState b = make_block("sgn", random_matrix(6, 6, rng), 0.5 + unit(rng));
        b.alpha = unit(rng);
        b.beta = unit(rng);
        b.s = soft_threshold(random_matrix(6, 6, rng), 1.5 * unit(rng));
        std::vector<double> sv(6);
        for (double& s : sv) s = unit(rng);
        std::sort(sv.rbegin(), sv.rend());
        b.last_singular_values = sv;
        const double rank_ratio = effective_rank_ratio(sv, cfg.gamma);
        const double dens = density(b.s, 0.0);
        const double alpha_before = b.alpha;
        const double beta_before = b.beta;
        controller_update(b, cfg);
        if (rank_ratio > cfg.target_rank_ratio)
            CHECK(b.alpha > alpha_before);
        else if (rank_ratio < cfg.target_rank_ratio)
            CHECK(b.alpha <= alpha_before);
        if (dens > cfg.target_density)
            CHECK(b.beta > beta_before);
        else if (dens < cfg.target_density)
            CHECK(b.beta <= beta_before);
        CHECK(b.alpha >= 0.0);
        CHECK(b.beta >= 0.0);
    }
}

TEST_CASE("surrogate and reconstruction_error definitions") {
    std::mt19937_64 rng(60);
    BlockState b = random_block(5, 5, 1.0, rng);
    CHECK(surrogate(b) == b.l + b.s);
    CHECK(reconstruction_error(b) == doctest::Approx(frobenius_norm(b.x - b.l - b.s)));
    b.l = Matrix(5, 5);
    b.s = Matrix(5, 5);
    CHECK(reconstruction_error(b) == doctest::Approx(frobenius_norm(b.x)));
    b.l = b.x;
    CHECK(reconstruction_error(b) == 0.0);
}

TEST_CASE("repeated sweeps on a frozen block drive the residual to zero") {
    std::mt19937_64 rng(70);
    // Thresholds in the regime the controller grows during training:
    // moderate on the spectrum, small on the entries.
    for (int trial = 0; trial < 5; ++trial) {
        BlockState b = make_block("conv", random_matrix(20, 20, rng), 1.0);
        b.alpha = 0.3;
        b.beta = 0.003;
        int sweeps = 0;
        while (sweeps < 200 && reconstruction_error(b) > 1e-6) {
            slr_adaptation_sweep(b, 1);
            ++sweeps;
        }
        CHECK(reconstruction_error(b) <= 1e-6);
    }
}
