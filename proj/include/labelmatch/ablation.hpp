#pragma once

// Trains the three fusion heads under otherwise identical settings for each
// seed and tabulates test accuracy, one row per head:
//
//   Label Embeddings  Fusion Methods  <dataset>
//   No                No              ...
//   Yes               Add             ...
//   Yes               Dot Product     ...

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "labelmatch/trainer.hpp"

namespace labelmatch {

inline constexpr FusionMode kAblationModes[] = {FusionMode::none,
                                                FusionMode::add,
                                                FusionMode::dot};

struct AblationRun {
  FusionMode mode = FusionMode::none;
  std::uint64_t seed = 0;
  double accuracy = 0.0;  // percent, final epoch test accuracy
};

struct EvalReport {
  std::string dataset_name;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRun> runs;

  // Per-seed accuracies for `mode`, in seed order.
  std::vector<double> accuracies(FusionMode mode) const;
  // Arithmetic mean of accuracies(mode).
  double mean(FusionMode mode) const;
};

// "No" / "Yes" and "No" / "Add" / "Dot Product".
std::string label_embeddings_cell(FusionMode mode);
std::string fusion_method_cell(FusionMode mode);

struct AblationOptions {
  const Verbalizer* verbalizer = nullptr;
  // Concurrent training runs; 1 runs configurations sequentially.
  std::size_t jobs = 1;
  std::function<void(const AblationRun&)> on_run;
};

// `base.fusion` is ignored; every mode in kAblationModes is trained per seed.
EvalReport run_ablation(const TrainConfig& base, const Dataset& train_set,
                        const Dataset& test_set,
                        std::span<const std::uint64_t> seeds,
                        std::string dataset_name,
                        const AblationOptions& options = {});

// Three-row summary table followed by per-seed detail.
std::string format_ablation_table(const EvalReport& report);

// label_embeddings,fusion_method,dataset,seed,accuracy; one row per run
// plus one row per mode with seed "mean".
std::string format_ablation_csv(const EvalReport& report);

}  // namespace labelmatch
