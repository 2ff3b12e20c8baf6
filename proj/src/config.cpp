#include "salaad/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "salaad/errors.hpp"

namespace salaad {

namespace {

std::string trim(std::string_view s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string_view::npos) return {};
    return std::string(s.substr(a, b - a + 1));
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: bad numeric value for '" + key + "': " + v);
    }
}

long long parse_int(const std::string& key, const std::string& v) {
    long long x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError("config: bad integer value for '" + key + "': " + v);
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("config: bad boolean value for '" + key + "': " + v);
}

std::vector<int> parse_dims(const std::string& key, const std::string& v) {
    std::vector<int> dims;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        dims.push_back(static_cast<int>(parse_int(key, item)));
    }
    if (dims.empty()) throw ConfigError("config: empty dimension list for '" + key + "'");
    return dims;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.model.kind = ModelKind::char_lm;
    cfg.model.layer_dims = {48, 256, 128};
    cfg.model.vocab_size = 48;
    cfg.model.context_len = 8;
    cfg.model.seed = 1;
    return cfg;
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg = default_run_config();
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(line_no) +
                              " is not 'key = value': " + stripped);
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));

        if (key == "model.kind") {
            if (value == "char_lm")
                cfg.model.kind = ModelKind::char_lm;
            else if (value == "mlp_regression")
                cfg.model.kind = ModelKind::mlp_regression;
            else
                throw ConfigError("config: unknown model.kind '" + value + "'");
        } else if (key == "model.layer_dims") {
            cfg.model.layer_dims = parse_dims(key, value);
        } else if (key == "model.vocab_size") {
            cfg.model.vocab_size = static_cast<int>(parse_int(key, value));
        } else if (key == "model.context_len") {
            cfg.model.context_len = static_cast<int>(parse_int(key, value));
        } else if (key == "model.include_embedding_block") {
            cfg.model.include_embedding_block = parse_bool(key, value);
        } else if (key == "model.include_head_block") {
            cfg.model.include_head_block = parse_bool(key, value);
        } else if (key == "model.seed") {
            cfg.model.seed = static_cast<std::uint64_t>(parse_int(key, value));
        } else if (key == "engine.k_inner") {
            cfg.engine.k_inner = static_cast<int>(parse_int(key, value));
        } else if (key == "engine.j_inner") {
            cfg.engine.j_inner = static_cast<int>(parse_int(key, value));
        } else if (key == "engine.rho_constant") {
            cfg.engine.rho_constant = parse_double(key, value);
        } else if (key == "controller.gamma") {
            cfg.controller.gamma = parse_double(key, value);
        } else if (key == "controller.target_rank_ratio") {
            cfg.controller.target_rank_ratio = parse_double(key, value);
        } else if (key == "controller.target_density") {
            cfg.controller.target_density = parse_double(key, value);
        } else if (key == "controller.delta_alpha") {
            cfg.controller.delta_alpha = parse_double(key, value);
        } else if (key == "controller.delta_beta") {
            cfg.controller.delta_beta = parse_double(key, value);
        } else if (key == "adam.lr") {
            cfg.adam.lr = parse_double(key, value);
        } else if (key == "adam.beta1") {
            cfg.adam.beta1 = parse_double(key, value);
        } else if (key == "adam.beta2") {
            cfg.adam.beta2 = parse_double(key, value);
        } else if (key == "adam.eps") {
            cfg.adam.eps = parse_double(key, value);
        } else if (key == "adam.weight_decay") {
            cfg.adam.weight_decay = parse_double(key, value);
        } else if (key == "run.total_cycles") {
            cfg.total_cycles = static_cast<int>(parse_int(key, value));
        } else if (key == "run.batch_size") {
            cfg.batch_size = static_cast<int>(parse_int(key, value));
        } else if (key == "run.eval_every") {
            cfg.eval_every = static_cast<int>(parse_int(key, value));
        } else if (key == "run.log_every") {
            cfg.log_every = static_cast<int>(parse_int(key, value));
        } else if (key == "run.eval_batch_count") {
            cfg.eval_batch_count = static_cast<int>(parse_int(key, value));
        } else if (key == "run.eval_batch_size") {
            cfg.eval_batch_size = static_cast<int>(parse_int(key, value));
        } else if (key == "run.data_seed") {
            cfg.data_seed = static_cast<std::uint64_t>(parse_int(key, value));
        } else if (key == "run.output_dir") {
            cfg.output_dir = value;
        } else if (key == "run.corpus_path") {
            cfg.corpus_path = value;
        } else if (key == "run.workers") {
            cfg.workers = static_cast<int>(parse_int(key, value));
        } else if (key == "run.slr_enabled") {
            cfg.slr_enabled = parse_bool(key, value);
        } else if (key == "hpa.kappa") {
            cfg.kappa = parse_double(key, value);
        } else {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    }

    if (cfg.total_cycles < 1) throw ConfigError("config: run.total_cycles must be >= 1");
    if (cfg.eval_every < 1 || cfg.log_every < 1)
        throw ConfigError("config: eval/log intervals must be >= 1");
    if (cfg.batch_size < 1 || cfg.eval_batch_count < 1 || cfg.eval_batch_size < 1)
        throw ConfigError("config: batch sizes must be >= 1");
    if (cfg.engine.k_inner < 1 || cfg.engine.j_inner < 1)
        throw ConfigError("config: engine.k_inner and engine.j_inner must be >= 1");
    if (cfg.engine.rho_constant <= 0.0)
        throw ConfigError("config: engine.rho_constant must be positive");
    if (!(cfg.controller.gamma > 0.0 && cfg.controller.gamma <= 1.0))
        throw ConfigError("config: controller.gamma must be in (0, 1]");
    if (cfg.controller.target_rank_ratio < 0.0 || cfg.controller.target_rank_ratio > 1.0 ||
        cfg.controller.target_density < 0.0 || cfg.controller.target_density > 1.0)
        throw ConfigError("config: controller targets must be in [0, 1]");
    if (cfg.controller.delta_alpha <= 0.0 || cfg.controller.delta_beta <= 0.0)
        throw ConfigError("config: controller step sizes must be positive");
    if (cfg.kappa < 0.0 || cfg.kappa > 1.0) throw ConfigError("config: hpa.kappa must be in [0, 1]");
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

std::string dump_run_config(const RunConfig& cfg) {
    std::ostringstream os;
    os << "model.kind = "
       << (cfg.model.kind == ModelKind::char_lm ? "char_lm" : "mlp_regression") << '\n';
    os << "model.layer_dims = ";
    for (std::size_t i = 0; i < cfg.model.layer_dims.size(); ++i)
        os << (i ? "," : "") << cfg.model.layer_dims[i];
    os << '\n';
    os << "model.vocab_size = " << cfg.model.vocab_size << '\n';
    os << "model.context_len = " << cfg.model.context_len << '\n';
    os << "model.include_embedding_block = "
       << (cfg.model.include_embedding_block ? "true" : "false") << '\n';
    os << "model.include_head_block = " << (cfg.model.include_head_block ? "true" : "false")
       << '\n';
    os << "model.seed = " << cfg.model.seed << '\n';
    os << "engine.k_inner = " << cfg.engine.k_inner << '\n';
    os << "engine.j_inner = " << cfg.engine.j_inner << '\n';
    os << "engine.rho_constant = " << fmt(cfg.engine.rho_constant) << '\n';
    os << "controller.gamma = " << fmt(cfg.controller.gamma) << '\n';
    os << "controller.target_rank_ratio = " << fmt(cfg.controller.target_rank_ratio) << '\n';
    os << "controller.target_density = " << fmt(cfg.controller.target_density) << '\n';
    os << "controller.delta_alpha = " << fmt(cfg.controller.delta_alpha) << '\n';
    os << "controller.delta_beta = " << fmt(cfg.controller.delta_beta) << '\n';
    os << "adam.lr = " << fmt(cfg.adam.lr) << '\n';
    os << "adam.beta1 = " << fmt(cfg.adam.beta1) << '\n';
    os << "adam.beta2 = " << fmt(cfg.adam.beta2) << '\n';
    os << "adam.eps = " << fmt(cfg.adam.eps) << '\n';
    os << "adam.weight_decay = " << fmt(cfg.adam.weight_decay) << '\n';
    os << "run.total_cycles = " << cfg.total_cycles << '\n';
    os << "run.batch_size = " << cfg.batch_size << '\n';
    os << "run.eval_every = " << cfg.eval_every << '\n';
    os << "run.log_every = " << cfg.log_every << '\n';
    os << "run.eval_batch_count = " << cfg.eval_batch_count << '\n';
    os << "run.eval_batch_size = " << cfg.eval_batch_size << '\n';
    os << "run.data_seed = " << cfg.data_seed << '\n';
    os << "run.output_dir = " << cfg.output_dir << '\n';
    os << "run.corpus_path = " << cfg.corpus_path << '\n';
    os << "run.workers = " << cfg.workers << '\n';
    os << "run.slr_enabled = " << (cfg.slr_enabled ? "true" : "false") << '\n';
    os << "hpa.kappa = " << fmt(cfg.kappa) << '\n';
    return os.str();
}

} // namespace salaad
