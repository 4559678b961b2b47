#pragma once
// Checkpoint directory: splats.ply, predictor.bin, state.bin, rig.json.

#include <filesystem>

#include "signsplat/optim.hpp"

namespace signsplat {

/// Binary little-endian PLY, one "splat" element per anchor, float32
/// attributes. Throws InputError naming the first bad header line or the
/// first truncated record.
void write_splats_ply(const SplatSet& splats, const std::filesystem::path& path);
SplatSet read_splats_ply(const std::filesystem::path& path);

/// Magic line, one JSON header line (shapes, layer order), float64 data.
void write_predictor(const AttributePredictor& pred, const std::filesystem::path& path);
AttributePredictor read_predictor(const std::filesystem::path& path);

/// Writes a compacted copy of `state` (inactive splats dropped).
void save_checkpoint(const TrainState& state, const std::filesystem::path& dir);
TrainState load_checkpoint(const std::filesystem::path& dir);

}  // namespace signsplat
