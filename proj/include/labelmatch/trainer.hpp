#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "labelmatch/corpus.hpp"
#include "labelmatch/model.hpp"
#include "labelmatch/rng.hpp"

namespace labelmatch {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  FusionMode fusion = FusionMode::dot;
  std::size_t dim = 64;
  std::size_t max_len = 32;
  std::size_t min_freq = 1;
  std::size_t depth = 1;

  std::size_t ffn_hidden() const { return 4 * dim; }

  // Throws ConfigError on batch_size < 1, learning_rate <= 0, dim < 1,
  // max_len < 1, min_freq < 1 or depth != 1.
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

// Batch sizes accepted by the command-line front end.
inline constexpr std::size_t kAllowedBatchSizes[] = {32, 64};

// Uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)) for embeddings and weight
// matrices; uniform(-0.01, 0.01) for position embeddings; zero biases;
// dot-head log scale = ln 10. Draws follow parameter declaration order.
Model<float> init_model(const TrainConfig& config, std::size_t vocab_size,
                        LabelSet labels, SplitMix64& rng);

struct AdamConstants {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam update at step `t` (>= 1) over `params` in order, then
// zeroes every gradient. Throws NumericError naming the first parameter with
// a non-finite gradient, before anything is modified.
template <class T>
void adam_step(std::span<ParamTensor<T>* const> params, double lr,
               std::uint64_t t, const AdamConstants& c = {});

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean over the epoch's mini-batches
  double train_acc = 0.0;   // percent, after the epoch
  double test_acc = 0.0;    // percent, after the epoch

  bool operator==(const EpochRecord&) const = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0.0;
};

// Tokenized view of a dataset against a model's label order.
struct EncodedSet {
  std::vector<TokenSeq> seqs;
  std::vector<std::size_t> targets;

  std::size_t size() const { return seqs.size(); }
};

// Maps each example's label to its index in `label_names`; throws DataError
// naming any label absent from it.
EncodedSet encode_dataset(const Dataset& dataset,
                          const std::vector<std::string>& label_names,
                          const Vocabulary& vocab, std::size_t max_len);

struct EvalResult {
  std::size_t correct = 0;
  std::size_t total = 0;
  double mean_loss = 0.0;
  std::vector<std::size_t> predictions;

  double accuracy() const {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) /
                                  static_cast<double>(total);
  }
};

// Scores every example with label embeddings computed once. `threads` > 1
// splits examples across threads; results do not depend on it.
EvalResult evaluate(const Model<float>& model, const EncodedSet& data,
                    std::size_t threads = 1);

struct TrainResult {
  Model<float> model;
  Vocabulary vocab;
  TrainHistory history;
  std::uint64_t steps = 0;
};

struct TrainOptions {
  const Verbalizer* verbalizer = nullptr;
  std::size_t eval_threads = 1;
  // Called after each epoch.
  std::function<void(const EpochRecord&)> on_epoch;
};

// Builds the vocabulary from the training texts plus verbalized label
// phrases, initializes from config.seed and runs config.epochs passes of
// shuffled mini-batch Adam on the mean cross-entropy.
TrainResult train(const TrainConfig& config, const Dataset& train_set,
                  const Dataset& eval_set, const TrainOptions& options = {});

// Same, with an already-built model and vocabulary (used by tests and by
// resumption from a checkpoint).
TrainHistory train_model(const TrainConfig& config, Model<float>& model,
                         const EncodedSet& train_data,
                         const EncodedSet& eval_data, SplitMix64& rng,
                         const TrainOptions& options = {},
                         std::uint64_t* steps = nullptr);

// Number of worker threads from LABELMATCH_THREADS (default 1).
std::size_t threads_from_env();

}  // namespace labelmatch
