#include "labelmatch/fusion.hpp"

#include <string>

namespace labelmatch {

std::string_view to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::none: return "none";
    case FusionMode::add: return "add";
    case FusionMode::dot: return "dot";
  }
  return "unknown";
}

FusionMode parse_fusion_mode(std::string_view name) {
  if (name == "none") return FusionMode::none;
  if (name == "add") return FusionMode::add;
  if (name == "dot") return FusionMode::dot;
  throw ConfigError("unknown fusion mode '" + std::string(name) +
                    "' (expected none, add or dot)");
}

}  // namespace labelmatch
