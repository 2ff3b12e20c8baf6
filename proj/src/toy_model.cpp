#include "salaad/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "salaad/errors.hpp"

namespace salaad {

namespace {

constexpr const char* kByteTable =
    " abcdefghijklmnopqrstuvwxyz.,!?'\"-;:\nABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

void validate_config(const ToyModelConfig& cfg) {
    if (cfg.layer_dims.size() < 2)
        throw ConfigError("model: layer_dims needs at least two entries");
    for (int d : cfg.layer_dims)
        if (d <= 0) throw ConfigError("model: layer_dims entries must be positive");
    if (cfg.kind == ModelKind::char_lm) {
        if (cfg.vocab_size < 2 || cfg.vocab_size > 256)
            throw ConfigError("model: vocab_size must be in [2, 256]");
        if (cfg.context_len < 1)
            throw ConfigError("model: context_len must be positive");
    }
}

Matrix random_matrix(int rows, int cols, double stddev, std::mt19937_64& rng) {
    Matrix m(rows, cols);
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : m.data()) v = dist(rng);
    return m;
}

// Shapes of all trainable matrices in model order, with regulation flags.
struct LayerSpec {
    std::string name;
    int rows;
    int cols;
    bool regulated;
    double init_std;
};

std::vector<LayerSpec> layer_specs(const ToyModelConfig& cfg) {
    std::vector<LayerSpec> specs;
    const auto& dims = cfg.layer_dims;
    if (cfg.kind == ModelKind::mlp_regression) {
        for (std::size_t i = 0; i + 1 < dims.size(); ++i)
            specs.push_back({"layer" + std::to_string(i), dims[i + 1], dims[i], true,
                             1.0 / std::sqrt(static_cast<double>(dims[i]))});
        return specs;
    }
    const int emb_dim = dims[0];
    specs.push_back({"embedding", cfg.vocab_size, emb_dim, cfg.include_embedding_block, 1.0});
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const int fan_in = i == 0 ? cfg.context_len * emb_dim : dims[i];
        specs.push_back({"hidden" + std::to_string(i), dims[i + 1], fan_in, true,
                         1.0 / std::sqrt(static_cast<double>(fan_in))});
    }
    specs.push_back({"head", cfg.vocab_size, dims.back(), cfg.include_head_block,
                     1.0 / std::sqrt(static_cast<double>(dims.back()))});
    return specs;
}

} // namespace

int ToyModel::regulated_count() const {
    int n = 0;
    for (const auto& p : params)
        if (p.regulated) ++n;
    return n;
}

ModelParam* ToyModel::find(const std::string& name) {
    for (auto& p : params)
        if (p.state.name == name) return &p;
    return nullptr;
}

const ModelParam* ToyModel::find(const std::string& name) const {
    for (const auto& p : params)
        if (p.state.name == name) return &p;
    return nullptr;
}

ToyModel build_model(const ToyModelConfig& cfg, double rho_constant) {
    validate_config(cfg);
    if (rho_constant <= 0.0) throw ConfigError("model: rho_constant must be positive");

    const auto specs = layer_specs(cfg);
    int n_regulated = 0;
    for (const auto& s : specs)
        if (s.regulated) ++n_regulated;
    const int rho_blocks = std::max(1, n_regulated);

    ToyModel model;
    model.cfg = cfg;
    std::mt19937_64 rng(cfg.seed);
    for (const auto& s : specs) {
        Matrix w = random_matrix(s.rows, s.cols, s.init_std, rng);
        const double rho = rho_for_block(s.rows, s.cols, rho_blocks, rho_constant);
        ModelParam p;
        p.state = make_block(s.name, std::move(w), rho);
        p.regulated = s.regulated;
        model.params.push_back(std::move(p));
    }
    return model;
}

namespace {

// Effective weight per parameter under the requested source.
std::vector<const Matrix*> select_weights(const ToyModel& model, WeightSource source,
                                          std::vector<Matrix>& storage) {
    std::vector<const Matrix*> weights;
    weights.reserve(model.params.size());
    storage.clear();
    storage.reserve(model.params.size());
    if (source == WeightSource::compressed && !model.compressed)
        throw StateError("evaluate: model carries no compressed tensors");
    for (const auto& p : model.params) {
        if (source == WeightSource::dense_x || !p.regulated) {
            if (!p.has_x)
                throw StateError("evaluate: block '" + p.state.name + "' has no dense weight");
            weights.push_back(&p.state.x);
        } else {
            if (!p.has_surrogate)
                throw StateError("evaluate: block '" + p.state.name + "' has no surrogate tensors");
            storage.push_back(p.state.l + p.state.s);
            weights.push_back(&storage.back());
        }
    }
    return weights;
}

struct LmForward {
    std::vector<Matrix> acts;  // acts[0] = concat embeddings, then hidden outputs
    Matrix logits;
    double loss = 0.0;
};

void check_lm_batch(const ToyModel& model, const Batch& batch) {
    const int t = model.cfg.context_len;
    if (batch.batch_size <= 0) throw DataError("batch: empty batch");
    if (batch.tokens.size() != static_cast<std::size_t>(batch.batch_size) * t)
        throw DataError("batch: token buffer does not match batch_size * context_len");
    if (batch.next_tokens.size() != static_cast<std::size_t>(batch.batch_size))
        throw DataError("batch: target buffer does not match batch_size");
    for (int id : batch.tokens)
        if (id < 0 || id >= model.cfg.vocab_size) throw DataError("batch: token id out of range");
    for (int id : batch.next_tokens)
        if (id < 0 || id >= model.cfg.vocab_size) throw DataError("batch: target id out of range");
}

LmForward lm_forward(const ToyModel& model, const Batch& batch,
                     const std::vector<const Matrix*>& weights) {
    check_lm_batch(model, batch);
    const int b_sz = batch.batch_size;
    const int t = model.cfg.context_len;
    const int emb_dim = model.cfg.layer_dims[0];
    const int n_hidden = static_cast<int>(model.cfg.layer_dims.size()) - 1;
    const Matrix& emb = *weights[0];

    LmForward f;
    Matrix h0(b_sz, t * emb_dim);
    for (int b = 0; b < b_sz; ++b)
        for (int ti = 0; ti < t; ++ti) {
            const int tok = batch.tokens[static_cast<std::size_t>(b) * t + ti];
            for (int j = 0; j < emb_dim; ++j) h0(b, ti * emb_dim + j) = emb(tok, j);
        }
    f.acts.push_back(std::move(h0));
    for (int i = 0; i < n_hidden; ++i) {
        Matrix z = matmul_nt(f.acts.back(), *weights[1 + i]);
        for (double& v : z.data()) v = std::tanh(v);
        f.acts.push_back(std::move(z));
    }
    f.logits = matmul_nt(f.acts.back(), *weights[1 + n_hidden]);

    double loss = 0.0;
    for (int b = 0; b < b_sz; ++b) {
        double max_logit = f.logits(b, 0);
        for (int v = 1; v < model.cfg.vocab_size; ++v)
            max_logit = std::max(max_logit, f.logits(b, v));
        double sum_exp = 0.0;
        for (int v = 0; v < model.cfg.vocab_size; ++v)
            sum_exp += std::exp(f.logits(b, v) - max_logit);
        loss += std::log(sum_exp) + max_logit - f.logits(b, batch.next_tokens[b]);
    }
    f.loss = loss / b_sz;
    return f;
}

struct RegForward {
    std::vector<Matrix> acts;
    double loss = 0.0;
};

void check_reg_batch(const ToyModel& model, const Batch& batch) {
    if (batch.batch_size <= 0) throw DataError("batch: empty batch");
    if (batch.features.rows() != batch.batch_size ||
        batch.features.cols() != model.cfg.layer_dims.front())
        throw DataError("batch: feature shape does not match model input dim");
    if (batch.targets.rows() != batch.batch_size ||
        batch.targets.cols() != model.cfg.layer_dims.back())
        throw DataError("batch: target shape does not match model output dim");
}

RegForward reg_forward(const ToyModel& model, const Batch& batch,
                       const std::vector<const Matrix*>& weights) {
    check_reg_batch(model, batch);
    const int n_layers = static_cast<int>(model.cfg.layer_dims.size()) - 1;
    RegForward f;
    f.acts.push_back(batch.features);
    for (int i = 0; i < n_layers; ++i) {
        Matrix z = matmul_nt(f.acts.back(), *weights[i]);
        if (i + 1 < n_layers)
            for (double& v : z.data()) v = std::tanh(v);
        f.acts.push_back(std::move(z));
    }
    const Matrix& pred = f.acts.back();
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.data().size(); ++i) {
        const double d = pred.data()[i] - batch.targets.data()[i];
        acc += d * d;
    }
    f.loss = acc / static_cast<double>(pred.data().size());
    return f;
}

} // namespace

ForwardBackwardResult forward_backward(const ToyModel& model, const Batch& batch) {
    std::vector<Matrix> storage;
    const auto weights = select_weights(model, WeightSource::dense_x, storage);
    ForwardBackwardResult out;
    out.grads.reserve(model.params.size());

    if (model.cfg.kind == ModelKind::mlp_regression) {
        RegForward f = reg_forward(model, batch, weights);
        out.loss = f.loss;
        const int n_layers = static_cast<int>(model.cfg.layer_dims.size()) - 1;
        // d loss / d pred
        Matrix delta = f.acts.back();
        delta -= batch.targets;
        delta *= 2.0 / static_cast<double>(delta.data().size());
        std::vector<Matrix> grads(n_layers);
        for (int i = n_layers - 1; i >= 0; --i) {
            grads[i] = matmul_tn(delta, f.acts[i]);
            if (i > 0) {
                Matrix prev_delta = matmul(delta, *weights[i]);
                // backprop through tanh on the layer below
                const Matrix& a = f.acts[i];
                for (std::size_t k = 0; k < prev_delta.data().size(); ++k)
                    prev_delta.data()[k] *= 1.0 - a.data()[k] * a.data()[k];
                delta = std::move(prev_delta);
            }
        }
        for (auto& g : grads) out.grads.push_back(std::move(g));
        return out;
    }

    LmForward f = lm_forward(model, batch, weights);
    out.loss = f.loss;
    const int b_sz = batch.batch_size;
    const int t = model.cfg.context_len;
    const int emb_dim = model.cfg.layer_dims[0];
    const int n_hidden = static_cast<int>(model.cfg.layer_dims.size()) - 1;
    const int vocab = model.cfg.vocab_size;

    Matrix dlogits(b_sz, vocab);
    for (int b = 0; b < b_sz; ++b) {
        double max_logit = f.logits(b, 0);
        for (int v = 1; v < vocab; ++v) max_logit = std::max(max_logit, f.logits(b, v));
        double sum_exp = 0.0;
        for (int v = 0; v < vocab; ++v) sum_exp += std::exp(f.logits(b, v) - max_logit);
        for (int v = 0; v < vocab; ++v)
            dlogits(b, v) = std::exp(f.logits(b, v) - max_logit) / sum_exp / b_sz;
        dlogits(b, batch.next_tokens[b]) -= 1.0 / b_sz;
    }

    std::vector<Matrix> grads(model.params.size());
    grads[1 + n_hidden] = matmul_tn(dlogits, f.acts[n_hidden]);
    Matrix delta = matmul(dlogits, *weights[1 + n_hidden]);
    for (int i = n_hidden - 1; i >= 0; --i) {
        const Matrix& a = f.acts[i + 1];
        for (std::size_t k = 0; k < delta.data().size(); ++k)
            delta.data()[k] *= 1.0 - a.data()[k] * a.data()[k];
        grads[1 + i] = matmul_tn(delta, f.acts[i]);
        delta = matmul(delta, *weights[1 + i]);
    }
    // delta is now d loss / d concat-embedding
    Matrix demb(vocab, emb_dim);
    for (int b = 0; b < b_sz; ++b)
        for (int ti = 0; ti < t; ++ti) {
            const int tok = batch.tokens[static_cast<std::size_t>(b) * t + ti];
            for (int j = 0; j < emb_dim; ++j) demb(tok, j) += delta(b, ti * emb_dim + j);
        }
    grads[0] = std::move(demb);
    out.grads = std::move(grads);
    return out;
}

EvalResult evaluate(const ToyModel& model, std::span<const Batch> batches, WeightSource source) {
    if (batches.empty()) throw DataError("evaluate: no batches");
    std::vector<Matrix> storage;
    const auto weights = select_weights(model, source, storage);
    double total = 0.0;
    long long count = 0;
    for (const Batch& batch : batches) {
        double loss =
            model.cfg.kind == ModelKind::mlp_regression
                ? reg_forward(model, batch, weights).loss
                : lm_forward(model, batch, weights).loss;
        total += loss * batch.batch_size;
        count += batch.batch_size;
    }
    EvalResult out;
    out.loss = total / static_cast<double>(count);
    if (model.cfg.kind == ModelKind::char_lm) out.perplexity = std::exp(out.loss);
    return out;
}

AdamState make_adam_state(const ToyModel& model, const AdamParams& params) {
    if (params.lr <= 0.0 || params.eps <= 0.0)
        throw ConfigError("adam: lr and eps must be positive");
    if (params.beta1 <= 0.0 || params.beta1 >= 1.0 || params.beta2 <= 0.0 || params.beta2 >= 1.0)
        throw ConfigError("adam: betas must be in (0, 1)");
    if (params.weight_decay < 0.0) throw ConfigError("adam: weight_decay must be nonnegative");
    AdamState st;
    st.params = params;
    for (const auto& p : model.params) {
        st.m1.emplace_back(p.state.x.rows(), p.state.x.cols());
        st.m2.emplace_back(p.state.x.rows(), p.state.x.cols());
    }
    return st;
}

void adam_step(AdamState& state, ToyModel& model, const std::vector<Matrix>& grads) {
    if (grads.size() != model.params.size())
        throw DataError("adam_step: gradient count does not match parameter count");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads[i].same_shape(model.params[i].state.x))
            throw DataError("adam_step: gradient shape mismatch for block '" +
                            model.params[i].state.name + "'");
        for (double v : grads[i].data())
            if (!std::isfinite(v))
                throw DivergenceError("adam_step: non-finite gradient in block '" +
                                      model.params[i].state.name + "'");
    }
    state.step += 1;
    const auto& p = state.params;
    const double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < grads.size(); ++i) {
        auto& x = model.params[i].state.x.data();
        auto& m1 = state.m1[i].data();
        auto& m2 = state.m2[i].data();
        const auto& g = grads[i].data();
        for (std::size_t k = 0; k < x.size(); ++k) {
            double grad = g[k] + p.weight_decay * x[k];
            m1[k] = p.beta1 * m1[k] + (1.0 - p.beta1) * grad;
            m2[k] = p.beta2 * m2[k] + (1.0 - p.beta2) * grad * grad;
            const double mhat = m1[k] / bc1;
            const double vhat = m2[k] / bc2;
            x[k] -= p.lr * mhat / (std::sqrt(vhat) + p.eps);
        }
    }
}

int token_of_byte(unsigned char byte, int vocab_size) {
    const std::string_view table(kByteTable);
    const int usable = std::min<int>(vocab_size - 1, static_cast<int>(table.size()));
    for (int i = 0; i < usable; ++i)
        if (static_cast<unsigned char>(table[i]) == byte) return i + 1;
    return 0;
}

namespace {

// Fixed-seed order-2 Markov stream; every run of the artifact shares the
// same built-in corpus.
std::vector<int> synthetic_corpus(int vocab_size, int length) {
    std::mt19937_64 gen(0x5A1AADULL);
    const int v = vocab_size;
    std::vector<int> successors(static_cast<std::size_t>(v) * v * 3);
    std::uniform_int_distribution<int> pick(0, v - 1);
    for (auto& s : successors) s = pick(gen);
    std::vector<int> corpus;
    corpus.reserve(length);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    int a = 0, b = v > 1 ? 1 : 0;
    for (int i = 0; i < length; ++i) {
        const std::size_t base = (static_cast<std::size_t>(a) * v + b) * 3;
        const double r = unit(gen);
        int c = r < 0.6 ? successors[base] : (r < 0.9 ? successors[base + 1] : successors[base + 2]);
        corpus.push_back(c);
        a = b;
        b = c;
    }
    return corpus;
}

} // namespace

DataSource::DataSource(const ToyModelConfig& cfg, std::uint64_t seed, const std::string& corpus_path)
    : cfg_(cfg), rng_(seed) {
    validate_config(cfg);
    if (cfg.kind == ModelKind::mlp_regression) {
        const int in_dim = cfg.layer_dims.front();
        const int out_dim = cfg.layer_dims.back();
        const int teacher_hidden = 16;
        teacher_hidden_ = random_matrix(teacher_hidden, in_dim,
                                        1.0 / std::sqrt(static_cast<double>(in_dim)), rng_);
        teacher_out_ = random_matrix(out_dim, teacher_hidden,
                                     1.0 / std::sqrt(static_cast<double>(teacher_hidden)), rng_);
        return;
    }
    if (!corpus_path.empty()) {
        std::ifstream in(corpus_path, std::ios::binary);
        if (!in) throw DataError("data: cannot open corpus file '" + corpus_path + "'");
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        corpus_.reserve(bytes.size());
        for (unsigned char b : bytes) corpus_.push_back(token_of_byte(b, cfg.vocab_size));
    } else {
        corpus_ = synthetic_corpus(cfg.vocab_size, 60000);
    }
    if (corpus_.size() < static_cast<std::size_t>(cfg.context_len) + 1)
        throw DataError("data: corpus shorter than context_len + 1");
}

Matrix DataSource::teacher_targets(const Matrix& features) const {
    if (cfg_.kind != ModelKind::mlp_regression)
        throw StateError("data: teacher_targets is regression-only");
    // y = teacher_out * tanh(teacher_hidden * x), no noise
    Matrix h = matmul_nt(features, teacher_hidden_);
    for (double& v : h.data()) v = std::tanh(v);
    return matmul_nt(h, teacher_out_);
}

Batch DataSource::next(int batch_size) {
    if (batch_size <= 0) throw DataError("data: batch_size must be positive");
    Batch batch;
    batch.batch_size = batch_size;
    if (cfg_.kind == ModelKind::mlp_regression) {
        const int in_dim = cfg_.layer_dims.front();
        batch.features = random_matrix(batch_size, in_dim, 1.0, rng_);
        batch.targets = teacher_targets(batch.features);
        return batch;
    }
    const int t = cfg_.context_len;
    std::uniform_int_distribution<std::size_t> pos(0, corpus_.size() - t - 1);
    batch.tokens.resize(static_cast<std::size_t>(batch_size) * t);
    batch.next_tokens.resize(batch_size);
    for (int b = 0; b < batch_size; ++b) {
        const std::size_t p = pos(rng_);
        for (int i = 0; i < t; ++i) batch.tokens[static_cast<std::size_t>(b) * t + i] = corpus_[p + i];
        batch.next_tokens[b] = corpus_[p + t];
    }
    return batch;
}

} // namespace salaad
