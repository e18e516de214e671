#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "labelmatch/nncore.hpp"

namespace labelmatch {

inline constexpr double kLayerGradTolerance = 1e-6;
inline constexpr double kModelGradTolerance = 1e-3;

struct GradcheckOptions {
  std::size_t dim = 8;
  std::size_t max_len = 6;
  std::size_t vocab_size = 50;
  std::uint64_t seed = 7;
  // Component whose analytic gradient is scaled by 1.5 before comparison
  // (fault injection for testing the checker itself).
  std::optional<std::string> corrupt;
};

struct GradcheckOutcome {
  GradCheckReport report;
  double tolerance = 0.0;

  bool passed() const { return report.max_rel_err < tolerance; }
};

// Upper bounds that keep one run well under a minute.
inline constexpr std::size_t kGradcheckMaxDim = 16;
inline constexpr std::size_t kGradcheckMaxLen = 12;
inline constexpr std::size_t kGradcheckMaxVocab = 200;

// Names of all components, in the order they are checked.
std::vector<std::string> gradcheck_components();

// 64-bit finite-difference checks of every layer primitive, every fusion
// head in isolation and the composed model under each fusion mode. Inputs
// are resampled until every relu preactivation is at least 1e-3 from zero.
std::vector<GradcheckOutcome> run_gradcheck_suite(const GradcheckOptions& options);

}  // namespace labelmatch
