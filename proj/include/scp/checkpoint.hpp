#pragma once

// Binary model snapshots.
//
//   "SCPM" | u32 LE version | u32 LE header bytes | UTF-8 JSON header | payload
//
// The header carries the model and training configuration, the phase and
// epoch, the rng state, the vocabulary and a tensor directory
// {name, rank, dims, offset}; offsets count bytes from the payload start.
// The payload holds every tensor as little-endian f32 in directory order.
//
// Parameters are fp64 in memory and f32 on disk, so a save rounds. A loaded
// model runs bit-identically to round_to_f32() of the model that was saved,
// and a save of a loaded model is lossless.

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "scp/model.hpp"
#include "scp/text.hpp"
#include "scp/training.hpp"

namespace scp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string phase;        // "lm", "classifier", "joint" or "abort"
  std::size_t epoch = 0;    // epochs completed in `phase`
  TrainConfig train;
  std::string rng_state;
  nlohmann::json run;       // full run configuration, null when not known
};

struct Checkpoint {
  Model model;
  Vocabulary vocab;
  CheckpointMeta meta;
};

// Writes to a sibling temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, Model& model, const Vocabulary& vocab,
                     const CheckpointMeta& meta);

// Throws IoError when unreadable and FormatError on any structural mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Only the JSON header, for inspection.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

// Rounds every parameter to the nearest f32, as a save does.
void round_to_f32(Model& model);

}  // namespace scp
