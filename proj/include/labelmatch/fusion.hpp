#pragma once

// Scoring heads turning a sentence vector t (and, for label-aware heads, the
// K x d label matrix L) into K logits.
//
//   none: logits = W t + b                  (no label information)
//   add:  logits[k] = w . relu(t + L[k]) + b[k]
//   dot:  logits[k] = exp(s) * (t . L[k])   exp(s) clamped to (0, 100]

#include <cmath>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "labelmatch/nncore.hpp"

namespace labelmatch {

enum class FusionMode { none, add, dot };

std::string_view to_string(FusionMode mode);
// Accepts "none", "add", "dot". Throws ConfigError otherwise.
FusionMode parse_fusion_mode(std::string_view name);

inline constexpr double kMaxDotScale = 100.0;

template <class T>
struct BaselineHead {
  ParamTensor<T> weight;  // K x d
  ParamTensor<T> bias;    // 1 x K
};

template <class T>
struct AddHead {
  ParamTensor<T> weight;  // 1 x d
  ParamTensor<T> bias;    // 1 x K
};

template <class T>
struct DotHead {
  ParamTensor<T> log_scale;  // 1 x 1

  // Returns the effective scale and whether the clamp is active.
  T scale(bool* clamped = nullptr) const {
    const T raw = std::exp(log_scale.value.data[0]);
    const bool over = raw > static_cast<T>(kMaxDotScale);
    if (clamped != nullptr) *clamped = over;
    return over ? static_cast<T>(kMaxDotScale) : raw;
  }
};

template <class T>
class FusionHead {
 public:
  using Variant = std::variant<BaselineHead<T>, AddHead<T>, DotHead<T>>;

  FusionHead() = default;
  explicit FusionHead(Variant head) : _head(std::move(head)) {}

  static FusionHead zeros(FusionMode mode, std::size_t num_labels,
                          std::size_t dim) {
    switch (mode) {
      case FusionMode::none:
        return FusionHead(BaselineHead<T>{{"head.weight", num_labels, dim},
                                          {"head.bias", 1, num_labels}});
      case FusionMode::add:
        return FusionHead(AddHead<T>{{"head.weight", 1, dim},
                                     {"head.bias", 1, num_labels}});
      case FusionMode::dot:
        return FusionHead(DotHead<T>{{"head.log_scale", 1, 1}});
    }
    throw ConfigError("unknown fusion mode");
  }

  FusionMode mode() const { return static_cast<FusionMode>(_head.index()); }
  bool uses_labels() const { return mode() != FusionMode::none; }

  template <class H>
  H* get() { return std::get_if<H>(&_head); }
  template <class H>
  const H* get() const { return std::get_if<H>(&_head); }

  std::vector<ParamTensor<T>*> parameters() {
    return std::visit(
        [](auto& h) -> std::vector<ParamTensor<T>*> {
          using H = std::decay_t<decltype(h)>;
          if constexpr (std::is_same_v<H, DotHead<T>>) {
            return {&h.log_scale};
          } else {
            return {&h.weight, &h.bias};
          }
        },
        _head);
  }
  std::vector<const ParamTensor<T>*> parameters() const {
    auto params = const_cast<FusionHead*>(this)->parameters();
    return {params.begin(), params.end()};
  }

  template <class U>
  FusionHead<U> cast() const {
    auto out = FusionHead<U>::zeros(mode(), 1, 1);
    auto dst = out.parameters();
    auto src = parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
      *dst[i] = src[i]->template cast<U>();
    }
    return out;
  }

 private:
  Variant _head;
};

namespace detail {

template <class H, class T>
const H& require_head(const FusionHead<T>& head, const char* op) {
  const H* h = head.template get<H>();
  if (h == nullptr) {
    throw NumericError(std::string(op) + ": fusion mode mismatch (head is '" +
                       std::string(to_string(head.mode())) + "')");
  }
  return *h;
}

template <class T>
void require_labels(const Tensor2<T>& labels, std::size_t expected_k,
                    std::size_t dim, const char* op) {
  if (labels.cols != dim) {
    throw NumericError(std::string(op) + ": label dimension mismatch");
  }
  if (expected_k != 0 && labels.rows != expected_k) {
    throw NumericError(std::string(op) + ": expected " +
                       std::to_string(expected_k) + " label rows, got " +
                       std::to_string(labels.rows));
  }
}

}  // namespace detail

template <class T>
std::vector<T> score_baseline(std::span<const T> t, const FusionHead<T>& head) {
  const auto& h = detail::require_head<BaselineHead<T>>(head, "score_baseline");
  if (t.size() != h.weight.cols()) {
    throw NumericError("score_baseline: dimension mismatch");
  }
  std::vector<T> logits(h.weight.rows());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    logits[k] = dot<T>(h.weight.value.row(k), t) + h.bias.value.data[k];
  }
  return logits;
}

// The relu keeps the text term from cancelling: with a purely linear sum
// w.t is shared by every class and drops out of the softmax.
template <class T>
std::vector<T> score_add(std::span<const T> t, const Tensor2<T>& labels,
                         const FusionHead<T>& head) {
  const auto& h = detail::require_head<AddHead<T>>(head, "score_add");
  detail::require_labels(labels, h.bias.cols(), t.size(), "score_add");
  const auto w = h.weight.value.row(0);
  std::vector<T> logits(labels.rows);
  for (std::size_t k = 0; k < labels.rows; ++k) {
    const auto l = labels.row(k);
    T acc{0};
    for (std::size_t j = 0; j < t.size(); ++j) {
      const T sum = t[j] + l[j];
      if (sum > T{0}) acc += w[j] * sum;
    }
    logits[k] = acc + h.bias.value.data[k];
  }
  return logits;
}

template <class T>
std::vector<T> score_dot(std::span<const T> t, const Tensor2<T>& labels,
                         const FusionHead<T>& head) {
  const auto& h = detail::require_head<DotHead<T>>(head, "score_dot");
  detail::require_labels(labels, 0, t.size(), "score_dot");
  const T scale = h.scale();
  std::vector<T> logits(labels.rows);
  for (std::size_t k = 0; k < labels.rows; ++k) {
    logits[k] = scale * dot<T>(t, labels.row(k));
  }
  return logits;
}

// Dispatches on the head's mode. `labels` may be null for the baseline head.
template <class T>
std::vector<T> score(std::span<const T> t, const Tensor2<T>* labels,
                     const FusionHead<T>& head) {
  if (head.mode() == FusionMode::none) return score_baseline(t, head);
  if (labels == nullptr) {
    throw NumericError("score: label matrix required for fusion mode '" +
                       std::string(to_string(head.mode())) + "'");
  }
  return head.mode() == FusionMode::add ? score_add(t, *labels, head)
                                        : score_dot(t, *labels, head);
}

// Given d(loss)/d(logits), accumulates head parameter gradients, adds
// d(loss)/dt into d_t and (label-aware heads) d(loss)/dL into d_labels.
template <class T>
void score_backward(std::span<const T> t, const Tensor2<T>* labels,
                    FusionHead<T>& head, std::span<const T> d_logits,
                    std::span<T> d_t, Tensor2<T>* d_labels) {
  if (auto* h = head.template get<BaselineHead<T>>()) {
    for (std::size_t k = 0; k < d_logits.size(); ++k) {
      const T g = d_logits[k];
      auto gw = h->weight.grad.row(k);
      const auto w = h->weight.value.row(k);
      for (std::size_t j = 0; j < t.size(); ++j) {
        gw[j] += g * t[j];
        d_t[j] += g * w[j];
      }
      h->bias.grad.data[k] += g;
    }
    return;
  }
  if (labels == nullptr || d_labels == nullptr) {
    throw NumericError("score_backward: label matrix required");
  }
  if (auto* h = head.template get<AddHead<T>>()) {
    const auto w = h->weight.value.row(0);
    auto gw = h->weight.grad.row(0);
    for (std::size_t k = 0; k < d_logits.size(); ++k) {
      const T g = d_logits[k];
      const auto l = labels->row(k);
      auto dl = d_labels->row(k);
      for (std::size_t j = 0; j < t.size(); ++j) {
        const T sum = t[j] + l[j];
        if (!(sum > T{0})) continue;
        gw[j] += g * sum;
        d_t[j] += g * w[j];
        dl[j] += g * w[j];
      }
      h->bias.grad.data[k] += g;
    }
    return;
  }
  auto* h = head.template get<DotHead<T>>();
  bool clamped = false;
  const T scale = h->scale(&clamped);
  T g_scale{0};
  for (std::size_t k = 0; k < d_logits.size(); ++k) {
    const T g = d_logits[k];
    const auto l = labels->row(k);
    auto dl = d_labels->row(k);
    g_scale += g * dot<T>(t, l);
    for (std::size_t j = 0; j < t.size(); ++j) {
      d_t[j] += scale * g * l[j];
      dl[j] += scale * g * t[j];
    }
  }
  // d exp(s) / ds = exp(s); zero where the clamp is active.
  if (!clamped) h->log_scale.grad.data[0] += g_scale * scale;
}

}  // namespace labelmatch
