#pragma once

// Binary checkpoint layout (all integers 64-bit little-endian, strings as a
// u64 byte length followed by UTF-8 bytes):
//
//   "LBLM1"
//   config: batch_size, epochs, learning_rate (IEEE-754 bits), seed,
//           fusion (string), dim, max_len, min_freq, depth
//   vocab_fingerprint, vocab_size
//   num_labels, then (name, phrase) per label
//   num_params, then (name, rows, cols) per parameter
//   parameter values as 32-bit little-endian floats, in the same order
//
// Optimizer moments are not stored.

#include <cstdint>
#include <string>

#include "labelmatch/errors.hpp"
#include "labelmatch/trainer.hpp"

namespace labelmatch {

inline constexpr char kCheckpointMagic[] = "LBLM1";

class CheckpointError : public Error {
 public:
  enum class Kind { io, bad_magic, malformed, shape_mismatch, fingerprint_mismatch };

  CheckpointError(Kind kind, const std::string& what)
      : Error(what), _kind(kind) {}
  Kind kind() const { return _kind; }

 private:
  Kind _kind;
};

struct Checkpoint {
  TrainConfig config;
  std::uint64_t vocab_fingerprint = 0;
  std::uint64_t vocab_size = 0;
  Model<float> model;
};

std::string serialize_checkpoint(const TrainConfig& config,
                                 const Model<float>& model,
                                 const Vocabulary& vocab);

// Rejects, in this order: bad magic, truncated or malformed header,
// vocabulary fingerprint mismatch against `vocab`, parameter names or shapes
// inconsistent with the stored config.
Checkpoint deserialize_checkpoint(const std::string& bytes,
                                  const Vocabulary& vocab);

void save_checkpoint(const std::string& path, const TrainConfig& config,
                     const Model<float>& model, const Vocabulary& vocab);

Checkpoint load_checkpoint(const std::string& path, const Vocabulary& vocab);

}  // namespace labelmatch
