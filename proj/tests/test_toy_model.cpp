#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "salaad/errors.hpp"
#include "salaad/toy_model.hpp"

using namespace salaad;
using namespace salaad::testing;

namespace {

ToyModelConfig tiny_lm() {
    ToyModelConfig cfg;
    cfg.kind = ModelKind::char_lm;
    cfg.layer_dims = {4, 6, 5};
    cfg.vocab_size = 7;
    cfg.context_len = 3;
    cfg.include_embedding_block = true;
    cfg.seed = 5;
    return cfg;
}

ToyModelConfig tiny_reg() {
    ToyModelConfig cfg;
    cfg.kind = ModelKind::mlp_regression;
    cfg.layer_dims = {4, 8, 2};
    cfg.seed = 0;
    return cfg;
}

} // namespace

TEST_CASE("build_model registers the documented blocks") {
    ToyModel reg = build_model(tiny_reg(), 1.0);
    REQUIRE(reg.params.size() == 2);
    CHECK(reg.params[0].state.name == "layer0");
    CHECK(reg.params[0].state.x.rows() == 8);
    CHECK(reg.params[0].state.x.cols() == 4);
    CHECK(reg.params[1].state.x.rows() == 2);
    CHECK(reg.params[1].state.x.cols() == 8);
    CHECK(reg.params[0].regulated);
    CHECK(reg.params[1].regulated);

    ToyModelConfig lm_cfg;
    lm_cfg.kind = ModelKind::char_lm;
    lm_cfg.vocab_size = 64;
    lm_cfg.layer_dims = {32, 64, 32};
    lm_cfg.context_len = 4;
    lm_cfg.include_embedding_block = true;
    ToyModel lm = build_model(lm_cfg, 1.0);
    const ModelParam* emb = lm.find("embedding");
    REQUIRE(emb != nullptr);
    CHECK(emb->state.x.rows() == 64);
    CHECK(emb->state.x.cols() == 32);
    CHECK(emb->regulated);
    CHECK(lm.find("hidden0")->state.x.cols() == 4 * 32);
    CHECK_FALSE(lm.find("head")->regulated);  // LM head stays out by default
}

TEST_CASE("build_model is deterministic and honors the scaling law") {
    ToyModel a = build_model(tiny_lm(), 0.5);
    ToyModel b = build_model(tiny_lm(), 0.5);
    REQUIRE(a.params.size() == b.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i)
        CHECK(a.params[i].state.x == b.params[i].state.x);
    const int n_reg = a.regulated_count();
    for (const auto& p : a.params)
        CHECK(p.state.rho ==
              doctest::Approx(rho_for_block(p.state.x.rows(), p.state.x.cols(), n_reg, 0.5)));
}

TEST_CASE("build_model validates dims") {
    ToyModelConfig bad = tiny_reg();
    bad.layer_dims = {4};
    CHECK_THROWS_AS(build_model(bad, 1.0), ConfigError);
    bad = tiny_lm();
    bad.vocab_size = 400;
    CHECK_THROWS_AS(build_model(bad, 1.0), ConfigError);
}

TEST_CASE("regression with zero weights and zero targets has zero loss and grads") {
    ToyModel model = build_model(tiny_reg(), 1.0);
    for (auto& p : model.params)
        for (double& v : p.state.x.data()) v = 0.0;
    Batch batch;
    batch.batch_size = 3;
    batch.features = Matrix(3, 4, std::vector<double>(12, 1.0));
    batch.targets = Matrix(3, 2);
    ForwardBackwardResult fb = forward_backward(model, batch);
    CHECK(fb.loss == 0.0);
    for (const auto& g : fb.grads) CHECK(frobenius_norm(g) == 0.0);
}

TEST_CASE("uniform logits give ln(vocab) loss and vocab perplexity") {
    ToyModelConfig cfg = tiny_lm();
    ToyModel model = build_model(cfg, 1.0);
    // Zero head forces uniform logits regardless of the tokens.
    for (double& v : model.find("head")->state.x.data()) v = 0.0;
    Batch batch;
    batch.batch_size = 4;
    batch.tokens.assign(static_cast<std::size_t>(4) * cfg.context_len, 1);
    batch.next_tokens.assign(4, 2);
    ForwardBackwardResult fb = forward_backward(model, batch);
    CHECK(fb.loss == doctest::Approx(std::log(7.0)).epsilon(1e-12));
    EvalResult ev = evaluate(model, std::vector<Batch>{batch}, WeightSource::dense_x);
    REQUIRE(ev.perplexity.has_value());
    CHECK(*ev.perplexity == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("char_lm gradients match finite differences, embedding included") {
    ToyModel model = build_model(tiny_lm(), 1.0);
    DataSource data(model.cfg, 3);
    Batch batch = data.next(5);
    ForwardBackwardResult fb = forward_backward(model, batch);
    for (std::size_t pi = 0; pi < model.params.size(); ++pi) {
        Matrix fd = finite_difference_grad(
            [&](const Matrix& w) {
                ToyModel probe = model;
                probe.params[pi].state.x = w;
                return forward_backward(probe, batch).loss;
            },
            model.params[pi].state.x, 1e-5);
        CHECK(max_relative_error(fb.grads[pi], fd) <= 1e-5);
    }
}

TEST_CASE("regression gradients match finite differences") {
    ToyModel model = build_model(tiny_reg(), 1.0);
    DataSource data(model.cfg, 11);
    Batch batch = data.next(6);
    ForwardBackwardResult fb = forward_backward(model, batch);
    for (std::size_t pi = 0; pi < model.params.size(); ++pi) {
        Matrix fd = finite_difference_grad(
            [&](const Matrix& w) {
                ToyModel probe = model;
                probe.params[pi].state.x = w;
                return forward_backward(probe, batch).loss;
            },
            model.params[pi].state.x, 1e-5);
        CHECK(max_relative_error(fb.grads[pi], fd) <= 1e-5);
    }
}

TEST_CASE("forward_backward rejects malformed batches") {
    ToyModel model = build_model(tiny_lm(), 1.0);
    Batch batch;
    batch.batch_size = 2;
    batch.tokens.assign(2 * model.cfg.context_len, 99);  // out of vocab
    batch.next_tokens.assign(2, 0);
    CHECK_THROWS_AS(forward_backward(model, batch), DataError);
    batch.tokens.assign(3, 0);  // wrong length
    CHECK_THROWS_AS(forward_backward(model, batch), DataError);
}

TEST_CASE("surrogate evaluation equals dense when L = X and S = 0") {
    ToyModel model = build_model(tiny_lm(), 1.0);
    for (auto& p : model.params)
        if (p.regulated) p.state.l = p.state.x;
    DataSource data(model.cfg, 7);
    std::vector<Batch> batches{data.next(8), data.next(8)};
    EvalResult dense = evaluate(model, batches, WeightSource::dense_x);
    EvalResult sur = evaluate(model, batches, WeightSource::surrogate);
    CHECK(dense.loss == sur.loss);
}

TEST_CASE("evaluate compressed requires a compressed model") {
    ToyModel model = build_model(tiny_lm(), 1.0);
    DataSource data(model.cfg, 7);
    std::vector<Batch> batches{data.next(4)};
    CHECK_THROWS_AS(evaluate(model, batches, WeightSource::compressed), StateError);
}

TEST_CASE("evaluate surrogate fails without surrogate tensors") {
    ToyModel model = build_model(tiny_lm(), 1.0);
    model.params[1].has_surrogate = false;
    DataSource data(model.cfg, 7);
    std::vector<Batch> batches{data.next(4)};
    CHECK_THROWS_AS(evaluate(model, batches, WeightSource::surrogate), StateError);
}

TEST_CASE("adam: zero grads leave weights unchanged and bump the step") {
    ToyModel model = build_model(tiny_reg(), 1.0);
    AdamState st = make_adam_state(model);
    std::vector<Matrix> grads;
    for (const auto& p : model.params) grads.emplace_back(p.state.x.rows(), p.state.x.cols());
    Matrix before = model.params[0].state.x;
    adam_step(st, model, grads);
    CHECK(st.step == 1);
    CHECK(model.params[0].state.x == before);
}

TEST_CASE("adam: one hand-computed bias-corrected step") {
    ToyModelConfig cfg = tiny_reg();
    cfg.layer_dims = {1, 1};
    ToyModel model = build_model(cfg, 1.0);
    model.params[0].state.x = Matrix(1, 1, {0.5});
    AdamParams params;
    params.lr = 0.1;
    AdamState st = make_adam_state(model, params);
    std::vector<Matrix> grads{Matrix(1, 1, {1.0})};
    adam_step(st, model, grads);
    CHECK(model.params[0].state.x(0, 0) ==
          doctest::Approx(0.5 - 0.1 * (1.0 / (1.0 + 1e-8))).epsilon(1e-12));
}

TEST_CASE("adam: lr never applied when grads are NaN") {
    ToyModel model = build_model(tiny_reg(), 1.0);
    AdamState st = make_adam_state(model);
    std::vector<Matrix> grads;
    for (const auto& p : model.params) grads.emplace_back(p.state.x.rows(), p.state.x.cols());
    grads[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(adam_step(st, model, grads), DivergenceError);
}

TEST_CASE("adam: two identical runs produce identical trajectories") {
    auto run = [] {
        ToyModel model = build_model(tiny_lm(), 1.0);
        AdamState st = make_adam_state(model);
        DataSource data(model.cfg, 42);
        for (int i = 0; i < 5; ++i) {
            ForwardBackwardResult fb = forward_backward(model, data.next(4));
            adam_step(st, model, fb.grads);
        }
        return model;
    };
    ToyModel a = run();
    ToyModel b = run();
    for (std::size_t i = 0; i < a.params.size(); ++i)
        CHECK(a.params[i].state.x == b.params[i].state.x);
}

TEST_CASE("data_source determinism and teacher consistency") {
    ToyModelConfig cfg = tiny_reg();
    DataSource a(cfg, 7);
    DataSource b(cfg, 7);
    Batch ba = a.next(6);
    Batch bb = b.next(6);
    CHECK(ba.features == bb.features);
    CHECK(ba.targets == bb.targets);

    DataSource lm_a(tiny_lm(), 7);
    DataSource lm_b(tiny_lm(), 7);
    Batch la = lm_a.next(5);
    Batch lb = lm_b.next(5);
    CHECK(la.tokens == lb.tokens);
    CHECK(la.next_tokens == lb.next_tokens);
}

TEST_CASE("short corpus files are rejected") {
    ToyModelConfig cfg = tiny_lm();  // context_len 3
    const std::string path = std::filesystem::temp_directory_path() / "salaad_tiny_corpus.txt";
    {
        std::ofstream out(path, std::ios::trunc);
        out << "ab";
    }
    CHECK_THROWS_AS(DataSource(cfg, 1, path), DataError);
    {
        std::ofstream out(path, std::ios::trunc);
        out << "hello world, this is plenty of text";
    }
    DataSource ok(cfg, 1, path);
    Batch batch = ok.next(3);
    for (int id : batch.tokens) CHECK(id < cfg.vocab_size);
    std::remove(path.c_str());
}

TEST_CASE("token_of_byte maps unknown bytes to 0") {
    CHECK(token_of_byte(' ', 48) == 1);
    CHECK(token_of_byte('a', 48) == 2);
    CHECK(token_of_byte(0x01, 48) == 0);
    // vocab 2: only the table's first char is addressable
    CHECK(token_of_byte(' ', 2) == 1);
    CHECK(token_of_byte('a', 2) == 0);
}

TEST_CASE("teacher data is noiseless: targets equal the teacher function") {
    ToyModelConfig cfg = tiny_reg();
    DataSource data(cfg, 123);
    Batch batch = data.next(16);
    Matrix replay = data.teacher_targets(batch.features);
    CHECK(replay == batch.targets);
}
