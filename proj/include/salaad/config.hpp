#pragma once

#include <string>

#include "salaad/engine.hpp"
#include "salaad/toy_model.hpp"

namespace salaad {

/// Everything one training run needs. Defaults are the shipped desk-scale
/// configuration.
struct RunConfig {
    ToyModelConfig model;
    EngineConfig engine;
    ControllerConfig controller;
    AdamParams adam;
    int total_cycles = 150;
    int batch_size = 32;
    int eval_every = 50;
    int log_every = 1;
    int eval_batch_count = 8;
    int eval_batch_size = 64;
    std::uint64_t data_seed = 7;
    std::string output_dir;
    std::string corpus_path;
    double kappa = 0.7;
    int workers = 0;
    bool slr_enabled = true;  // false = plain Adam baseline, no surrogate machinery
};

RunConfig default_run_config();

/// Flat `key = value` text, `#` comments, dotted keys; see dump_run_config
/// for the full key set. Unknown keys are rejected.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string dump_run_config(const RunConfig& cfg);

} // namespace salaad
