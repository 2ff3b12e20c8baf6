#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "salaad/engine.hpp"
#include "salaad/matrix.hpp"

namespace salaad {

enum class ModelKind { mlp_regression, char_lm };

struct ToyModelConfig {
    ModelKind kind = ModelKind::char_lm;
    std::vector<int> layer_dims;  // regression: [in, ..., out]; char_lm: [emb, hidden..., last_hidden]
    int vocab_size = 48;          // char_lm only, <= 256
    int context_len = 8;          // char_lm only
    bool include_embedding_block = false;
    bool include_head_block = false;
    std::uint64_t seed = 1;
};

/// One trainable matrix. Every matrix lives in a BlockState; only
/// `regulated` ones take part in SLR induction.
struct ModelParam {
    BlockState state;
    bool regulated = false;
    bool has_x = true;          // false for factored checkpoints that dropped X
    bool has_surrogate = true;  // false for dense-only checkpoints
};

struct ToyModel {
    ToyModelConfig cfg;
    std::vector<ModelParam> params;
    bool compressed = false;  // built from truncated factors

    int regulated_count() const;
    ModelParam* find(const std::string& name);
    const ModelParam* find(const std::string& name) const;
};

/// Deterministically initialized model; every trainable matrix becomes a
/// named BlockState with rho from the scaling law. For char_lm the block
/// list is the hidden layers, plus embedding/head when flagged.
ToyModel build_model(const ToyModelConfig& cfg, double rho_constant);

struct Batch {
    // regression
    Matrix features;  // B x in_dim
    Matrix targets;   // B x out_dim
    // char_lm
    std::vector<int> tokens;       // B * context_len, row-major
    std::vector<int> next_tokens;  // B
    int batch_size = 0;
};

struct ForwardBackwardResult {
    double loss = 0.0;
    std::vector<Matrix> grads;  // aligned with model.params; task loss only
};

/// Task loss (MSE / mean token cross-entropy) and its exact gradients for
/// every trainable matrix. The structural penalty gradient is added by the
/// training loop, not here.
ForwardBackwardResult forward_backward(const ToyModel& model, const Batch& batch);

enum class WeightSource { dense_x, surrogate, compressed };

struct EvalResult {
    double loss = 0.0;
    std::optional<double> perplexity;  // char_lm only
};

EvalResult evaluate(const ToyModel& model, std::span<const Batch> batches, WeightSource source);

struct AdamParams {
    double lr = 2e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct AdamState {
    AdamParams params;
    long long step = 0;
    std::vector<Matrix> m1;  // first moments, aligned with model.params
    std::vector<Matrix> m2;  // second moments
};

AdamState make_adam_state(const ToyModel& model, const AdamParams& params = {});

/// Bias-corrected Adam update on X of every trainable matrix.
void adam_step(AdamState& state, ToyModel& model, const std::vector<Matrix>& grads);

/// Deterministic batch stream: a seeded teacher for regression, a built-in
/// synthetic corpus (or a text file) for char_lm.
class DataSource {
public:
    DataSource(const ToyModelConfig& cfg, std::uint64_t seed, const std::string& corpus_path = "");

    Batch next(int batch_size);
    const std::vector<int>& corpus() const { return corpus_; }

    /// The noiseless teacher outputs for given features (regression only);
    /// batch targets are exactly this function of their features.
    Matrix teacher_targets(const Matrix& features) const;

private:
    ToyModelConfig cfg_;
    std::mt19937_64 rng_;
    Matrix teacher_hidden_;  // teacher first layer (regression)
    Matrix teacher_out_;     // teacher second layer
    std::vector<int> corpus_;
};

/// Byte-to-token mapping used for text files: the first vocab_size-1
/// characters of a fixed table get ids 1..vocab_size-1; anything else is
/// the unknown token 0.
int token_of_byte(unsigned char byte, int vocab_size);

} // namespace salaad
