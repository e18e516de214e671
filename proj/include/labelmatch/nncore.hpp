#pragma once

// Layer primitives with explicit forward/backward passes. Everything is
// templated on the scalar type: training runs in float, gradient checks in
// double. Backward functions accumulate (+=) into parameter gradients and
// return input gradients by value.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "labelmatch/corpus.hpp"
#include "labelmatch/errors.hpp"

namespace labelmatch {

using Mask = std::vector<std::uint8_t>;

template <class T>
struct Tensor2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Tensor2() = default;
  Tensor2(std::size_t r, std::size_t c, T fill = T{0})
      : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
  std::size_t size() const { return data.size(); }
  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <class U>
  Tensor2<U> cast() const {
    Tensor2<U> out(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) {
      out.data[i] = static_cast<U>(data[i]);
    }
    return out;
  }

  bool operator==(const Tensor2&) const = default;
};

template <class T>
struct ParamTensor {
  std::string name;
  Tensor2<T> value;
  Tensor2<T> grad;
  Tensor2<T> adam_m;
  Tensor2<T> adam_v;

  ParamTensor() = default;
  ParamTensor(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)),
        value(rows, cols),
        grad(rows, cols),
        adam_m(rows, cols),
        adam_v(rows, cols) {}

  std::size_t rows() const { return value.rows; }
  std::size_t cols() const { return value.cols; }
  void zero_grad() { grad.fill(T{0}); }

  template <class U>
  ParamTensor<U> cast() const {
    ParamTensor<U> out;
    out.name = name;
    out.value = value.template cast<U>();
    out.grad = grad.template cast<U>();
    out.adam_m = adam_m.template cast<U>();
    out.adam_v = adam_v.template cast<U>();
    return out;
  }
};

namespace detail {

inline std::size_t count_valid(const Mask& mask) {
  std::size_t n = 0;
  for (auto m : mask) n += m != 0;
  return n;
}

inline void require(bool ok, const char* what) {
  if (!ok) throw NumericError(what);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dense helpers.

// C = A * B
template <class T>
Tensor2<T> matmul(const Tensor2<T>& a, const Tensor2<T>& b) {
  detail::require(a.cols == b.rows, "matmul: inner dimension mismatch");
  Tensor2<T> c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    T* ci = c.data.data() + i * c.cols;
    for (std::size_t p = 0; p < a.cols; ++p) {
      const T aip = a(i, p);
      const T* bp = b.data.data() + p * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aip * bp[j];
    }
  }
  return c;
}

// C += A^T * B
template <class T>
void matmul_at_b_acc(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& c) {
  detail::require(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols,
                  "matmul_at_b: shape mismatch");
  for (std::size_t p = 0; p < a.rows; ++p) {
    const T* bp = b.data.data() + p * b.cols;
    for (std::size_t i = 0; i < a.cols; ++i) {
      const T api = a(p, i);
      T* ci = c.data.data() + i * c.cols;
      for (std::size_t j = 0; j < b.cols; ++j) ci[j] += api * bp[j];
    }
  }
}

// C += A * B^T
template <class T>
void matmul_a_bt_acc(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& c) {
  detail::require(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows,
                  "matmul_a_bt: shape mismatch");
  for (std::size_t i = 0; i < a.rows; ++i) {
    const T* ai = a.data.data() + i * a.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const T* bj = b.data.data() + j * b.cols;
      T acc{0};
      for (std::size_t p = 0; p < a.cols; ++p) acc += ai[p] * bj[p];
      c(i, j) += acc;
    }
  }
}

template <class T>
T dot(std::span<const T> a, std::span<const T> b) {
  detail::require(a.size() == b.size(), "dot: length mismatch");
  T acc{0};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// ---------------------------------------------------------------------------
// Token + position embedding. Row i = E[ids[i]] + P[i].

template <class T>
Tensor2<T> embed_forward(const TokenSeq& seq, const ParamTensor<T>& tokens,
                         const ParamTensor<T>& positions) {
  const std::size_t m = seq.ids.size();
  const std::size_t d = tokens.cols();
  detail::require(positions.cols() == d, "embed: dimension mismatch");
  detail::require(m <= positions.rows(), "embed: sequence longer than positions");
  Tensor2<T> out(m, d);
  for (std::size_t i = 0; i < m; ++i) {
    if (seq.ids[i] >= tokens.rows()) {
      throw NumericError("embed: token id " + std::to_string(seq.ids[i]) +
                         " >= vocabulary size " +
                         std::to_string(tokens.rows()));
    }
    const auto e = tokens.value.row(seq.ids[i]);
    const auto p = positions.value.row(i);
    auto o = out.row(i);
    for (std::size_t j = 0; j < d; ++j) o[j] = e[j] + p[j];
  }
  return out;
}

template <class T>
void embed_backward(const TokenSeq& seq, const Tensor2<T>& d_out,
                    ParamTensor<T>& tokens, ParamTensor<T>& positions) {
  const std::size_t d = tokens.cols();
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    const auto g = d_out.row(i);
    auto ge = tokens.grad.row(seq.ids[i]);
    auto gp = positions.grad.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      ge[j] += g[j];
      gp[j] += g[j];
    }
  }
}

// ---------------------------------------------------------------------------
// Single-head scaled dot-product self-attention. Keys at masked positions get
// zero weight; query rows at masked positions are still computed.

template <class T>
struct AttentionCache {
  Tensor2<T> q, k, v;
  Tensor2<T> probs;  // rows x rows, zero at masked keys
};

template <class T>
Tensor2<T> attention_forward(const Tensor2<T>& x, const Mask& mask,
                             const ParamTensor<T>& wq, const ParamTensor<T>& wk,
                             const ParamTensor<T>& wv,
                             AttentionCache<T>* cache = nullptr) {
  const std::size_t m = x.rows;
  const std::size_t d = x.cols;
  detail::require(mask.size() == m, "attention: mask length mismatch");
  detail::require(detail::count_valid(mask) > 0, "attention: all positions masked");
  detail::require(wq.rows() == d && wk.rows() == d && wv.rows() == d,
                  "attention: weight shape mismatch");

  AttentionCache<T> local;
  AttentionCache<T>& c = cache != nullptr ? *cache : local;
  c.q = matmul(x, wq.value);
  c.k = matmul(x, wk.value);
  c.v = matmul(x, wv.value);
  c.probs = Tensor2<T>(m, m);
  const T scale = T{1} / std::sqrt(static_cast<T>(wq.cols()));

  Tensor2<T> out(m, wv.cols());
  for (std::size_t i = 0; i < m; ++i) {
    auto p = c.probs.row(i);
    T max_score = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      if (!mask[j]) continue;
      p[j] = dot<T>(c.q.row(i), c.k.row(j)) * scale;
      max_score = std::max(max_score, p[j]);
    }
    T sum{0};
    for (std::size_t j = 0; j < m; ++j) {
      if (!mask[j]) continue;
      p[j] = std::exp(p[j] - max_score);
      sum += p[j];
    }
    auto o = out.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      if (!mask[j]) continue;
      p[j] /= sum;
      const auto vj = c.v.row(j);
      for (std::size_t t = 0; t < o.size(); ++t) o[t] += p[j] * vj[t];
    }
  }
  return out;
}

template <class T>
Tensor2<T> attention_backward(const Tensor2<T>& x, const Mask& mask,
                              const AttentionCache<T>& c,
                              const Tensor2<T>& d_out, ParamTensor<T>& wq,
                              ParamTensor<T>& wk, ParamTensor<T>& wv) {
  const std::size_t m = x.rows;
  const T scale = T{1} / std::sqrt(static_cast<T>(wq.cols()));

  Tensor2<T> dv(m, c.v.cols);
  matmul_at_b_acc(c.probs, d_out, dv);

  Tensor2<T> dq(m, c.q.cols);
  Tensor2<T> dk(m, c.k.cols);
  std::vector<T> dp(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto p = c.probs.row(i);
    T weighted{0};
    for (std::size_t j = 0; j < m; ++j) {
      if (!mask[j]) continue;
      dp[j] = dot<T>(d_out.row(i), c.v.row(j));
      weighted += p[j] * dp[j];
    }
    auto dqi = dq.row(i);
    const auto qi = c.q.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      if (!mask[j]) continue;
      const T ds = p[j] * (dp[j] - weighted) * scale;
      const auto kj = c.k.row(j);
      auto dkj = dk.row(j);
      for (std::size_t t = 0; t < dqi.size(); ++t) {
        dqi[t] += ds * kj[t];
        dkj[t] += ds * qi[t];
      }
    }
  }

  matmul_at_b_acc(x, dq, wq.grad);
  matmul_at_b_acc(x, dk, wk.grad);
  matmul_at_b_acc(x, dv, wv.grad);

  Tensor2<T> dx(m, x.cols);
  matmul_a_bt_acc(dq, wq.value, dx);
  matmul_a_bt_acc(dk, wk.value, dx);
  matmul_a_bt_acc(dv, wv.value, dx);
  return dx;
}

// ---------------------------------------------------------------------------
// Position-wise feed-forward: relu(X W1 + b1) W2 + b2.

template <class T>
struct FfnCache {
  Tensor2<T> pre;     // X W1 + b1
  Tensor2<T> hidden;  // relu(pre)
};

template <class T>
Tensor2<T> ffn_forward(const Tensor2<T>& x, const ParamTensor<T>& w1,
                       const ParamTensor<T>& b1, const ParamTensor<T>& w2,
                       const ParamTensor<T>& b2, FfnCache<T>* cache = nullptr) {
  detail::require(w1.rows() == x.cols && b1.cols() == w1.cols() &&
                      w2.rows() == w1.cols() && b2.cols() == w2.cols(),
                  "ffn: shape mismatch");
  detail::require(w1.cols() >= 1, "ffn: hidden width must be >= 1");
  FfnCache<T> local;
  FfnCache<T>& c = cache != nullptr ? *cache : local;
  c.pre = matmul(x, w1.value);
  c.hidden = Tensor2<T>(x.rows, w1.cols());
  for (std::size_t i = 0; i < x.rows; ++i) {
    auto pre = c.pre.row(i);
    auto h = c.hidden.row(i);
    for (std::size_t j = 0; j < pre.size(); ++j) {
      pre[j] += b1.value.data[j];
      h[j] = pre[j] > T{0} ? pre[j] : T{0};
    }
  }
  Tensor2<T> out = matmul(c.hidden, w2.value);
  for (std::size_t i = 0; i < out.rows; ++i) {
    auto o = out.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += b2.value.data[j];
  }
  return out;
}

template <class T>
Tensor2<T> ffn_backward(const Tensor2<T>& x, const FfnCache<T>& c,
                        const Tensor2<T>& d_out, ParamTensor<T>& w1,
                        ParamTensor<T>& b1, ParamTensor<T>& w2,
                        ParamTensor<T>& b2) {
  matmul_at_b_acc(c.hidden, d_out, w2.grad);
  for (std::size_t i = 0; i < d_out.rows; ++i) {
    const auto g = d_out.row(i);
    for (std::size_t j = 0; j < g.size(); ++j) b2.grad.data[j] += g[j];
  }
  Tensor2<T> d_pre(x.rows, w1.cols());
  matmul_a_bt_acc(d_out, w2.value, d_pre);
  for (std::size_t i = 0; i < d_pre.rows; ++i) {
    auto g = d_pre.row(i);
    const auto pre = c.pre.row(i);
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!(pre[j] > T{0})) g[j] = T{0};
      b1.grad.data[j] += g[j];
    }
  }
  matmul_at_b_acc(x, d_pre, w1.grad);
  Tensor2<T> dx(x.rows, x.cols);
  matmul_a_bt_acc(d_pre, w1.value, dx);
  return dx;
}

// ---------------------------------------------------------------------------
// Mean over rows with mask set.

template <class T>
std::vector<T> mean_pool_masked(const Tensor2<T>& x, const Mask& mask) {
  detail::require(mask.size() == x.rows, "mean_pool: mask length mismatch");
  const std::size_t n = detail::count_valid(mask);
  detail::require(n > 0, "mean_pool: all positions masked");
  std::vector<T> out(x.cols, T{0});
  for (std::size_t i = 0; i < x.rows; ++i) {
    if (!mask[i]) continue;
    const auto r = x.row(i);
    for (std::size_t j = 0; j < x.cols; ++j) out[j] += r[j];
  }
  const T count = static_cast<T>(n);
  for (auto& v : out) v /= count;
  return out;
}

template <class T>
Tensor2<T> mean_pool_masked_backward(const Mask& mask,
                                     std::span<const T> d_out) {
  const T count = static_cast<T>(detail::count_valid(mask));
  Tensor2<T> dx(mask.size(), d_out.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    auto r = dx.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = d_out[j] / count;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Softmax and cross-entropy.

// Shift-by-max softmax. -inf entries map to exactly 0.
template <class T>
std::vector<T> softmax(std::span<const T> z) {
  detail::require(z.size() >= 2, "softmax: need at least two entries");
  T max_z = -std::numeric_limits<T>::infinity();
  for (T v : z) {
    detail::require(!std::isnan(v) && v != std::numeric_limits<T>::infinity(),
                    "softmax: entries must be finite or -inf");
    max_z = std::max(max_z, v);
  }
  detail::require(std::isfinite(max_z), "softmax: all entries are -inf");
  std::vector<T> out(z.size());
  T sum{0};
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - max_z);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

template <class T>
struct CrossEntropyResult {
  T loss;
  std::vector<T> grad_logits;
};

// loss = -log softmax(logits)[target]; grad = softmax - onehot(target).
template <class T>
CrossEntropyResult<T> cross_entropy(std::span<const T> logits,
                                    std::size_t target) {
  if (target >= logits.size()) {
    throw NumericError("cross_entropy: target " + std::to_string(target) +
                       " out of range for " + std::to_string(logits.size()) +
                       " classes");
  }
  T max_z = -std::numeric_limits<T>::infinity();
  for (T v : logits) max_z = std::max(max_z, v);
  T sum{0};
  for (T v : logits) sum += std::exp(v - max_z);
  CrossEntropyResult<T> r;
  r.loss = std::log(sum) - (logits[target] - max_z);
  if (r.loss < T{0}) r.loss = T{0};
  r.grad_logits = softmax(logits);
  r.grad_logits[target] -= T{1};
  return r;
}

template <class T>
std::size_t argmax(std::span<const T> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) -
                                  v.begin());
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check (64-bit).

struct GradCheckReport {
  std::string op_name;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  std::size_t num_checked = 0;
};

// One block of coordinates: the live parameter values (perturbed in place by
// the checker and restored afterwards) and the analytic gradient for them.
struct GradProbe {
  std::span<double> value;
  std::span<const double> analytic;
};

// Central differences (f(x+eps) - f(x-eps)) / (2 eps) for every coordinate of
// every probe. Relative error uses max(|analytic|, |numeric|, 1e-8) as the
// denominator. worst_index is the flattened coordinate index across probes.
GradCheckReport finite_diff_check(const std::string& op_name,
                                  const std::function<double()>& f,
                                  std::span<const GradProbe> probes,
                                  double eps = 1e-6);

inline GradProbe probe(ParamTensor<double>& p) {
  return {std::span<double>(p.value.data), std::span<const double>(p.grad.data)};
}

}  // namespace labelmatch
