#pragma once

#include <optional>
#include <string>

#include "salaad/hpa.hpp"
#include "salaad/toy_model.hpp"

namespace salaad {

/// Single-file checkpoint: magic + version, a JSON manifest (length
/// prefixed), then raw little-endian binary64 payload in manifest order.
/// Save -> load reproduces all tensors bit-exactly.

struct LoadedCheckpoint {
    ToyModel model;
    std::optional<AdamState> adam;
};

/// Training checkpoint: X dense per block; regulated blocks also store L
/// dense, S as sparse entries and the dual Y. Pass adam to persist
/// optimizer moments.
void save_checkpoint(const ToyModel& model, const std::string& path,
                     const AdamState* adam = nullptr);

/// Deployment checkpoint: regulated blocks store L factored (r' folded
/// into the left factor) and the pruned S; X and Y are dropped.
void save_compressed_checkpoint(const CompressedModel& cm, const std::string& path);

LoadedCheckpoint load_checkpoint(const std::string& path);

/// The manifest JSON text (for `inspect`).
std::string read_manifest(const std::string& path);

} // namespace salaad
