#include "salaad/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "salaad/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian binary64");

namespace salaad {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'S', 'L', 'R', 'C'};
constexpr std::uint32_t kVersion = 1;

json config_to_json(const ToyModelConfig& cfg) {
    return json{{"kind", cfg.kind == ModelKind::char_lm ? "char_lm" : "mlp_regression"},
                {"layer_dims", cfg.layer_dims},
                {"vocab_size", cfg.vocab_size},
                {"context_len", cfg.context_len},
                {"include_embedding_block", cfg.include_embedding_block},
                {"include_head_block", cfg.include_head_block},
                {"seed", cfg.seed}};
}

ToyModelConfig config_from_json(const json& j) {
    ToyModelConfig cfg;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "char_lm")
        cfg.kind = ModelKind::char_lm;
    else if (kind == "mlp_regression")
        cfg.kind = ModelKind::mlp_regression;
    else
        throw CheckpointError("checkpoint: unknown model kind '" + kind + "'");
    cfg.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.context_len = j.at("context_len").get<int>();
    cfg.include_embedding_block = j.at("include_embedding_block").get<bool>();
    cfg.include_head_block = j.at("include_head_block").get<bool>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

struct TensorRef {
    std::string label;  // "<block>.<id>" for error messages
    const double* data = nullptr;
    std::size_t count = 0;
    std::vector<double> owned;  // for tensors built on the fly (sparse parts)

    const double* ptr() const { return owned.empty() ? data : owned.data(); }
};

void write_doubles(std::ostream& out, const double* data, std::size_t count) {
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * sizeof(double)));
}

json sparse_entry(const Matrix& s, std::vector<TensorRef>& payload, const std::string& block) {
    std::vector<double> indices, values;
    for (std::size_t i = 0; i < s.data().size(); ++i) {
        if (s.data()[i] != 0.0) {
            indices.push_back(static_cast<double>(i));
            values.push_back(s.data()[i]);
        }
    }
    const auto nnz = static_cast<long long>(values.size());
    TensorRef idx;
    idx.label = block + ".s.indices";
    idx.owned = std::move(indices);
    idx.count = idx.owned.size();
    payload.push_back(std::move(idx));
    TensorRef val;
    val.label = block + ".s.values";
    val.owned = std::move(values);
    val.count = val.owned.size();
    payload.push_back(std::move(val));
    return json{{"id", "s"}, {"kind", "sparse_coo"}, {"rows", s.rows()}, {"cols", s.cols()},
                {"nnz", nnz}};
}

json dense_entry(const std::string& id, const Matrix& m, std::vector<TensorRef>& payload,
                 const std::string& block) {
    TensorRef t;
    t.label = block + "." + id;
    t.data = m.data().data();
    t.count = m.data().size();
    payload.push_back(std::move(t));
    return json{{"id", id}, {"kind", "dense"}, {"rows", m.rows()}, {"cols", m.cols()}};
}

void write_file(const std::string& path, const json& manifest,
                const std::vector<TensorRef>& payload) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot open '" + path + "' for writing");
    out.write(kMagic, 4);
    const std::uint32_t version = kVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::string text = manifest.dump();
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : payload) write_doubles(out, t.ptr(), t.count);
    if (!out) throw CheckpointError("checkpoint: write to '" + path + "' failed");
}

json block_header(const BlockState& b, bool regulated) {
    return json{{"name", b.name},
                {"rows", b.x.rows() > 0 ? b.x.rows() : b.l.rows()},
                {"cols", b.x.cols() > 0 ? b.x.cols() : b.l.cols()},
                {"regulated", regulated},
                {"alpha", b.alpha},
                {"beta", b.beta},
                {"rho", b.rho},
                {"singular_values", b.last_singular_values},
                {"tensors", json::array()}};
}

} // namespace

void save_checkpoint(const ToyModel& model, const std::string& path, const AdamState* adam) {
    json manifest;
    manifest["format_version"] = kVersion;
    manifest["checkpoint_kind"] = "train";
    manifest["model_config"] = config_to_json(model.cfg);
    manifest["has_optimizer_state"] = adam != nullptr;
    if (adam)
        manifest["adam"] = {{"lr", adam->params.lr},       {"beta1", adam->params.beta1},
                            {"beta2", adam->params.beta2}, {"eps", adam->params.eps},
                            {"weight_decay", adam->params.weight_decay},
                            {"step", adam->step}};

    std::vector<TensorRef> payload;
    manifest["blocks"] = json::array();
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        const auto& p = model.params[i];
        json blk = block_header(p.state, p.regulated);
        auto& tensors = blk["tensors"];
        if (!p.has_x)
            throw StateError("save_checkpoint: block '" + p.state.name +
                             "' has no dense weight; use save_compressed_checkpoint");
        tensors.push_back(dense_entry("x", p.state.x, payload, p.state.name));
        if (p.regulated && p.has_surrogate) {
            tensors.push_back(dense_entry("l", p.state.l, payload, p.state.name));
            tensors.push_back(sparse_entry(p.state.s, payload, p.state.name));
            tensors.push_back(dense_entry("y", p.state.y, payload, p.state.name));
        }
        if (adam) {
            tensors.push_back(dense_entry("adam_m1", adam->m1[i], payload, p.state.name));
            tensors.push_back(dense_entry("adam_m2", adam->m2[i], payload, p.state.name));
        }
        manifest["blocks"].push_back(std::move(blk));
    }
    write_file(path, manifest, payload);
}

void save_compressed_checkpoint(const CompressedModel& cm, const std::string& path) {
    json manifest;
    manifest["format_version"] = kVersion;
    manifest["checkpoint_kind"] = "compressed";
    manifest["model_config"] = config_to_json(cm.model.cfg);
    manifest["has_optimizer_state"] = false;
    manifest["slr_param_count"] = cm.slr_param_count;

    std::vector<TensorRef> payload;
    manifest["blocks"] = json::array();
    std::size_t factor_idx = 0;
    for (const auto& p : cm.model.params) {
        json blk = block_header(p.state, p.regulated);
        auto& tensors = blk["tensors"];
        if (!p.regulated) {
            tensors.push_back(dense_entry("x", p.state.x, payload, p.state.name));
        } else {
            const CompressedBlock& cb = cm.factors.at(factor_idx++);
            const int rank = cb.left.size() > 0 ? cb.left.cols() : 0;
            json entry{{"id", "l"}, {"kind", "factored_lr"}, {"rows", p.state.l.rows()},
                       {"cols", p.state.l.cols()}, {"rank", rank}};
            if (rank > 0) {
                TensorRef left;
                left.label = p.state.name + ".l.left";
                left.data = cb.left.data().data();
                left.count = cb.left.data().size();
                payload.push_back(std::move(left));
                TensorRef right;
                right.label = p.state.name + ".l.right";
                right.data = cb.right.data().data();
                right.count = cb.right.data().size();
                payload.push_back(std::move(right));
            }
            tensors.push_back(std::move(entry));
            tensors.push_back(sparse_entry(cb.sparse, payload, p.state.name));
        }
        manifest["blocks"].push_back(std::move(blk));
    }
    write_file(path, manifest, payload);
}

namespace {

std::vector<double> read_doubles(std::istream& in, std::size_t count, const std::string& label) {
    std::vector<double> out(count);
    if (count == 0) return out;
    in.read(reinterpret_cast<char*>(out.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double))
        throw CheckpointError("checkpoint: payload truncated while reading tensor '" + label +
                              "' (expected " + std::to_string(count * sizeof(double)) + " bytes)");
    return out;
}

Matrix read_dense(std::istream& in, int rows, int cols, const std::string& label) {
    if (rows <= 0 || cols <= 0)
        throw CheckpointError("checkpoint: tensor '" + label + "' has non-positive shape");
    return Matrix(rows, cols,
                  read_doubles(in, static_cast<std::size_t>(rows) * cols, label));
}

} // namespace

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError("checkpoint: bad magic in '" + path + "'");
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!in || version != kVersion)
        throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version) +
                              " (expected " + std::to_string(kVersion) + ")");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in) throw CheckpointError("checkpoint: truncated manifest length");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (static_cast<std::uint64_t>(in.gcount()) != len)
        throw CheckpointError("checkpoint: truncated manifest");

    json manifest;
    try {
        manifest = json::parse(text);
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint: manifest is not valid JSON: ") + e.what());
    }

    LoadedCheckpoint out;
    try {
        out.model.cfg = config_from_json(manifest.at("model_config"));
        out.model.compressed =
            manifest.at("checkpoint_kind").get<std::string>() == "compressed";
        const bool has_adam = manifest.at("has_optimizer_state").get<bool>();
        if (has_adam) {
            AdamState st;
            const auto& a = manifest.at("adam");
            st.params.lr = a.at("lr").get<double>();
            st.params.beta1 = a.at("beta1").get<double>();
            st.params.beta2 = a.at("beta2").get<double>();
            st.params.eps = a.at("eps").get<double>();
            st.params.weight_decay = a.at("weight_decay").get<double>();
            st.step = a.at("step").get<long long>();
            out.adam = std::move(st);
        }

        for (const auto& blk : manifest.at("blocks")) {
            ModelParam p;
            p.state.name = blk.at("name").get<std::string>();
            const int rows = blk.at("rows").get<int>();
            const int cols = blk.at("cols").get<int>();
            if (rows <= 0 || cols <= 0)
                throw CheckpointError("checkpoint: block '" + p.state.name +
                                      "' has non-positive shape");
            p.regulated = blk.at("regulated").get<bool>();
            p.state.alpha = blk.at("alpha").get<double>();
            p.state.beta = blk.at("beta").get<double>();
            p.state.rho = blk.at("rho").get<double>();
            p.state.last_singular_values =
                blk.at("singular_values").get<std::vector<double>>();
            p.state.l = Matrix(rows, cols);
            p.state.s = Matrix(rows, cols);
            p.state.y = Matrix(rows, cols);
            p.has_x = false;
            p.has_surrogate = false;

            for (const auto& t : blk.at("tensors")) {
                const std::string id = t.at("id").get<std::string>();
                const std::string kind = t.at("kind").get<std::string>();
                const std::string label = p.state.name + "." + id;
                if (kind == "dense") {
                    const int tr = t.at("rows").get<int>();
                    const int tc = t.at("cols").get<int>();
                    if (tr != rows || tc != cols)
                        throw CheckpointError("checkpoint: tensor '" + label +
                                              "' shape disagrees with block shape");
                    Matrix m = read_dense(in, tr, tc, label);
                    if (id == "x") {
                        p.state.x = std::move(m);
                        p.has_x = true;
                    } else if (id == "l") {
                        p.state.l = std::move(m);
                        p.has_surrogate = true;
                    } else if (id == "y") {
                        p.state.y = std::move(m);
                    } else if (id == "adam_m1" || id == "adam_m2") {
                        if (!out.adam)
                            throw CheckpointError("checkpoint: optimizer tensor '" + label +
                                                  "' without optimizer state flag");
                        if (id == "adam_m1")
                            out.adam->m1.push_back(std::move(m));
                        else
                            out.adam->m2.push_back(std::move(m));
                    } else {
                        throw CheckpointError("checkpoint: unknown dense tensor id '" + label + "'");
                    }
                } else if (kind == "sparse_coo") {
                    if (id != "s")
                        throw CheckpointError("checkpoint: unexpected sparse tensor '" + label + "'");
                    const auto nnz = t.at("nnz").get<long long>();
                    if (nnz < 0 || nnz > static_cast<long long>(rows) * cols)
                        throw CheckpointError("checkpoint: tensor '" + label +
                                              "' nnz disagrees with block shape");
                    const auto indices =
                        read_doubles(in, static_cast<std::size_t>(nnz), label + ".indices");
                    const auto values =
                        read_doubles(in, static_cast<std::size_t>(nnz), label + ".values");
                    Matrix s(rows, cols);
                    for (long long k = 0; k < nnz; ++k) {
                        const auto flat = static_cast<long long>(indices[k]);
                        if (flat < 0 || flat >= static_cast<long long>(rows) * cols)
                            throw CheckpointError("checkpoint: tensor '" + label +
                                                  "' index out of range");
                        s.data()[static_cast<std::size_t>(flat)] = values[k];
                    }
                    p.state.s = std::move(s);
                    p.has_surrogate = p.has_surrogate || out.model.compressed;
                } else if (kind == "factored_lr") {
                    if (id != "l")
                        throw CheckpointError("checkpoint: unexpected factored tensor '" + label + "'");
                    const int rank = t.at("rank").get<int>();
                    if (rank < 0 || rank > std::min(rows, cols))
                        throw CheckpointError("checkpoint: tensor '" + label +
                                              "' rank disagrees with block shape");
                    if (rank > 0) {
                        Matrix left = read_dense(in, rows, rank, label + ".left");
                        Matrix right = read_dense(in, rank, cols, label + ".right");
                        p.state.l = matmul(left, right);
                    } else {
                        p.state.l = Matrix(rows, cols);
                    }
                    p.has_surrogate = true;
                } else {
                    throw CheckpointError("checkpoint: unknown tensor kind '" + kind + "'");
                }
            }
            if (p.regulated && out.model.compressed && !p.has_surrogate)
                throw CheckpointError("checkpoint: compressed block '" + p.state.name +
                                      "' has no surrogate tensors");
            out.model.params.push_back(std::move(p));
        }
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint: malformed manifest: ") + e.what());
    }

    char extra;
    if (in.read(&extra, 1))
        throw CheckpointError("checkpoint: trailing bytes after payload");
    return out;
}

std::string read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError("checkpoint: bad magic in '" + path + "'");
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in) throw CheckpointError("checkpoint: truncated manifest length");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (static_cast<std::uint64_t>(in.gcount()) != len)
        throw CheckpointError("checkpoint: truncated manifest");
    try {
        return nlohmann::json::parse(text).dump(2);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint: manifest is not valid JSON: ") + e.what());
    }
}

} // namespace salaad
