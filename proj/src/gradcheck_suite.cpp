#include "labelmatch/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "labelmatch/model.hpp"
#include "labelmatch/rng.hpp"
#include "labelmatch/trainer.hpp"

namespace labelmatch {

namespace {

// Components that are piecewise linear in each coordinate have no truncation
// error, so the larger step only lowers round-off. Attention and the loss
// are curved enough that a smaller step wins.
constexpr double kEps = 1e-4;
constexpr double kSmoothEps = 3e-5;
constexpr double kReluMargin = 1e-3;
constexpr std::size_t kMaxResamples = 200;
constexpr std::size_t kNumLabels = 4;
constexpr std::size_t kBatch = 4;

void fill(Tensor2<double>& t, SplitMix64& rng, double bound = 1.0) {
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
}

ParamTensor<double> random_param(const std::string& name, std::size_t rows,
                                 std::size_t cols, SplitMix64& rng,
                                 double bound = 1.0) {
  ParamTensor<double> p(name, rows, cols);
  fill(p.value, rng, bound);
  return p;
}

double weighted_sum(const Tensor2<double>& x, const Tensor2<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x.data[i] * w.data[i];
  return s;
}

bool relu_safe(const Tensor2<double>& pre) {
  return std::all_of(pre.data.begin(), pre.data.end(),
                     [](double v) { return std::abs(v) >= kReluMargin; });
}

// The add head applies relu to t + L[k].
bool add_head_safe(std::span<const double> t, const Tensor2<double>& labels) {
  for (std::size_t k = 0; k < labels.rows; ++k) {
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (std::abs(t[j] + labels(k, j)) < kReluMargin) return false;
    }
  }
  return true;
}

Mask prefix_mask(std::size_t m, std::size_t valid) {
  Mask mask(m, 0);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(valid), 1);
  return mask;
}

TokenSeq random_seq(std::size_t max_len, std::size_t vocab, SplitMix64& rng) {
  const std::size_t len = 1 + rng.below(max_len);
  TokenSeq seq;
  seq.ids.assign(max_len, Vocabulary::kPadId);
  seq.mask.assign(max_len, 0);
  seq.true_len = len;
  for (std::size_t i = 0; i < len; ++i) {
    seq.ids[i] = static_cast<std::uint32_t>(1 + rng.below(vocab - 1));
    seq.mask[i] = 1;
  }
  return seq;
}

// Copies a parameter's gradient so it can be corrupted independently.
std::vector<double> grad_copy(const ParamTensor<double>& p) {
  return p.grad.data;
}

struct ProbeSet {
  std::vector<std::span<double>> values;
  std::vector<std::vector<double>> analytic;

  void add(std::span<double> value, std::vector<double> grad) {
    analytic.push_back(std::move(grad));
    values.push_back(value);
  }
  void add(ParamTensor<double>& p) { add(p.value.data, grad_copy(p)); }

  std::vector<GradProbe> build() {
    std::vector<GradProbe> out;
    for (std::size_t i = 0; i < values.size(); ++i) {
      out.push_back({values[i], analytic[i]});
    }
    return out;
  }
};

GradcheckOutcome check(const GradcheckOptions& options, const std::string& name,
                       double tolerance, const std::function<double()>& f,
                       ProbeSet& set, double eps = kEps) {
  if (options.corrupt && *options.corrupt == name) {
    for (auto& a : set.analytic) {
      for (auto& v : a) v *= 1.5;
    }
  }
  const auto probes = set.build();
  return {finite_diff_check(name, f, probes, eps), tolerance};
}

GradcheckOutcome check_embed(const GradcheckOptions& o, SplitMix64& rng) {
  auto tokens = random_param("E", o.vocab_size, o.dim, rng);
  auto positions = random_param("P", o.max_len, o.dim, rng);
  TokenSeq seq = random_seq(o.max_len, o.vocab_size, rng);
  seq.true_len = o.max_len;
  seq.mask.assign(o.max_len, 1);
  for (auto& id : seq.ids) {
    id = static_cast<std::uint32_t>(rng.below(o.vocab_size));
  }
  if (o.max_len > 1) seq.ids[1] = seq.ids[0];  // duplicate ids accumulate
  Tensor2<double> weights(o.max_len, o.dim);
  fill(weights, rng);

  embed_backward(seq, weights, tokens, positions);
  ProbeSet set;
  set.add(tokens);
  set.add(positions);
  return check(o, "embed", kLayerGradTolerance, [&] {
    return weighted_sum(embed_forward(seq, tokens, positions), weights);
  }, set);
}

GradcheckOutcome check_attention(const GradcheckOptions& o, SplitMix64& rng) {
  const std::size_t m = o.max_len;
  Tensor2<double> x(m, o.dim);
  fill(x, rng);
  auto wq = random_param("Wq", o.dim, o.dim, rng);
  auto wk = random_param("Wk", o.dim, o.dim, rng);
  auto wv = random_param("Wv", o.dim, o.dim, rng);
  const Mask mask = prefix_mask(m, std::max<std::size_t>(1, m - m / 3));
  Tensor2<double> weights(m, o.dim);
  fill(weights, rng);

  AttentionCache<double> cache;
  attention_forward(x, mask, wq, wk, wv, &cache);
  const auto dx = attention_backward(x, mask, cache, weights, wq, wk, wv);
  ProbeSet set;
  set.add(wq);
  set.add(wk);
  set.add(wv);
  set.add(x.data, dx.data);
  return check(o, "attention", kLayerGradTolerance, [&] {
    return weighted_sum(attention_forward(x, mask, wq, wk, wv), weights);
  }, set, kSmoothEps);
}

GradcheckOutcome check_ffn(const GradcheckOptions& o, SplitMix64& rng) {
  const std::size_t h = 4 * o.dim;
  Tensor2<double> x(o.max_len, o.dim);
  ParamTensor<double> w1, b1, w2, b2;
  FfnCache<double> cache;
  for (std::size_t attempt = 0;; ++attempt) {
    fill(x, rng);
    w1 = random_param("W1", o.dim, h, rng);
    b1 = random_param("b1", 1, h, rng);
    w2 = random_param("W2", h, o.dim, rng);
    b2 = random_param("b2", 1, o.dim, rng);
    ffn_forward(x, w1, b1, w2, b2, &cache);
    if (relu_safe(cache.pre)) break;
    if (attempt + 1 == kMaxResamples) {
      throw NumericError("gradcheck: no relu-safe ffn input found");
    }
  }
  Tensor2<double> weights(o.max_len, o.dim);
  fill(weights, rng);
  const auto dx = ffn_backward(x, cache, weights, w1, b1, w2, b2);
  ProbeSet set;
  set.add(w1);
  set.add(b1);
  set.add(w2);
  set.add(b2);
  set.add(x.data, dx.data);
  return check(o, "ffn", kLayerGradTolerance, [&] {
    return weighted_sum(ffn_forward(x, w1, b1, w2, b2), weights);
  }, set);
}

GradcheckOutcome check_pool(const GradcheckOptions& o, SplitMix64& rng) {
  Tensor2<double> x(o.max_len, o.dim);
  fill(x, rng);
  const Mask mask = prefix_mask(o.max_len, std::max<std::size_t>(1, o.max_len / 2));
  std::vector<double> weights(o.dim);
  for (auto& w : weights) w = rng.uniform(-1.0, 1.0);
  const auto dx = mean_pool_masked_backward<double>(mask, weights);
  ProbeSet set;
  set.add(x.data, dx.data);
  return check(o, "mean_pool", kLayerGradTolerance, [&] {
    return dot<double>(mean_pool_masked(x, mask), weights);
  }, set);
}

GradcheckOutcome check_cross_entropy(const GradcheckOptions& o,
                                     SplitMix64& rng) {
  std::vector<double> logits(5);
  for (auto& z : logits) z = rng.uniform(-3.0, 3.0);
  const std::size_t target = 2;
  const auto ce = cross_entropy<double>(logits, target);
  ProbeSet set;
  set.add(logits, ce.grad_logits);
  return check(o, "cross_entropy", kLayerGradTolerance, [&] {
    return cross_entropy<double>(logits, target).loss;
  }, set, kSmoothEps);
}

GradcheckOutcome check_head(const GradcheckOptions& o, FusionMode mode,
                            SplitMix64& rng) {
  const std::size_t k = kNumLabels;
  auto head = FusionHead<double>::zeros(mode, k, o.dim);
  for (auto* p : head.parameters()) fill(p->value, rng);
  std::vector<double> t(o.dim);
  Tensor2<double> labels(k, o.dim);
  do {
    for (auto& v : t) v = rng.uniform(-1.0, 1.0);
    fill(labels, rng);
  } while (mode == FusionMode::add && !add_head_safe(t, labels));
  // A random linear read-out of the logits; cross-entropy would hide any
  // error shared by all classes.
  std::vector<double> weights(k);
  for (auto& w : weights) w = rng.uniform(-1.0, 1.0);

  const auto* label_ptr = mode == FusionMode::none ? nullptr : &labels;
  std::vector<double> d_t(o.dim, 0.0);
  Tensor2<double> d_labels(k, o.dim);
  score_backward<double>(t, label_ptr, head, weights, d_t,
                         mode == FusionMode::none ? nullptr : &d_labels);

  ProbeSet set;
  for (auto* p : head.parameters()) set.add(*p);
  set.add(t, d_t);
  if (mode != FusionMode::none) set.add(labels.data, d_labels.data);
  return check(o, "head." + std::string(to_string(mode)),
               kLayerGradTolerance, [&] {
                 return dot<double>(score<double>(t, label_ptr, head), weights);
               },
               set);
}

double batch_loss(const Model<double>& model, const std::vector<TokenSeq>& seqs,
                  const std::vector<std::size_t>& targets) {
  const auto labels = label_matrix(model);
  double total = 0.0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto logits = model_logits(model, seqs[i], labels ? &*labels : nullptr);
    total += cross_entropy<double>(logits, targets[i]).loss;
  }
  return total / static_cast<double>(seqs.size());
}

bool model_relu_safe(const Model<double>& model,
                     const std::vector<TokenSeq>& seqs) {
  EncodeCache<double> cache;
  auto safe = [&](const TokenSeq& seq) {
    encode(seq, model.encoder, &cache);
    return relu_safe(cache.ffn.pre);
  };
  if (!std::all_of(seqs.begin(), seqs.end(), safe)) return false;
  if (!model.head.uses_labels()) return true;
  if (!std::all_of(model.labels.seqs.begin(), model.labels.seqs.end(), safe)) {
    return false;
  }
  if (model.fusion() == FusionMode::add) {
    const auto labels = encode_labels(model.labels, model.encoder);
    for (const auto& seq : seqs) {
      if (!add_head_safe(encode(seq, model.encoder), labels)) return false;
    }
  }
  return true;
}

GradcheckOutcome check_model(const GradcheckOptions& o, FusionMode mode,
                             SplitMix64& rng) {
  TrainConfig config;
  config.dim = o.dim;
  config.max_len = o.max_len;
  config.fusion = mode;

  Model<double> model;
  std::vector<TokenSeq> seqs;
  std::vector<std::size_t> targets;
  for (std::size_t attempt = 0;; ++attempt) {
    LabelSet labels;
    for (std::size_t k = 0; k < kNumLabels; ++k) {
      labels.names.push_back("label" + std::to_string(k));
      labels.phrases.push_back(labels.names.back());
      labels.seqs.push_back(random_seq(std::min<std::size_t>(3, o.max_len),
                                       o.vocab_size, rng));
      auto& seq = labels.seqs.back();
      seq.ids.resize(o.max_len, Vocabulary::kPadId);
      seq.mask.resize(o.max_len, 0);
    }
    model = init_model(config, o.vocab_size, labels, rng).cast<double>();
    // Unit-scale FFN input weights and non-zero biases push preactivations
    // away from the relu kink so a safe instance is found quickly.
    fill(model.encoder.ffn_in.value, rng);
    fill(model.encoder.ffn_in_bias.value, rng);
    fill(model.encoder.ffn_out_bias.value, rng, 0.1);
    if (auto* head = model.head.get<BaselineHead<double>>()) {
      fill(head->bias.value, rng, 0.1);
    } else if (auto* head = model.head.get<AddHead<double>>()) {
      fill(head->bias.value, rng, 0.1);
    } else if (auto* head = model.head.get<DotHead<double>>()) {
      // A scale near 1 keeps the softmax away from saturation, where the
      // gradients shrink below what differencing can resolve.
      head->log_scale.value.data[0] = rng.uniform(-1.0, 0.0);
    }
    seqs.clear();
    targets.clear();
    for (std::size_t i = 0; i < kBatch; ++i) {
      seqs.push_back(random_seq(o.max_len, o.vocab_size, rng));
      targets.push_back(static_cast<std::size_t>(rng.below(kNumLabels)));
    }
    if (model_relu_safe(model, seqs)) break;
    if (attempt + 1 == kMaxResamples) {
      throw NumericError("gradcheck: no relu-safe model instance found");
    }
  }

  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  model.zero_grad();
  accumulate_batch(model, std::span<const std::size_t>(order), seqs, targets);

  ProbeSet set;
  for (auto* p : model.parameters()) set.add(*p);
  return check(o, "model." + std::string(to_string(mode)), kModelGradTolerance,
               [&] { return batch_loss(model, seqs, targets); }, set);
}

}  // namespace

std::vector<std::string> gradcheck_components() {
  return {"embed",     "attention",  "ffn",        "mean_pool",
          "cross_entropy", "head.none", "head.add", "head.dot",
          "model.none", "model.add", "model.dot"};
}

std::vector<GradcheckOutcome> run_gradcheck_suite(const GradcheckOptions& o) {
  if (o.dim < 1 || o.dim > kGradcheckMaxDim || o.max_len < 2 ||
      o.max_len > kGradcheckMaxLen || o.vocab_size < 4 ||
      o.vocab_size > kGradcheckMaxVocab) {
    throw ConfigError("gradcheck dimensions out of range (dim 1.." +
                      std::to_string(kGradcheckMaxDim) + ", maxlen 2.." +
                      std::to_string(kGradcheckMaxLen) + ", vocab 4.." +
                      std::to_string(kGradcheckMaxVocab) + ")");
  }
  if (o.corrupt) {
    const auto names = gradcheck_components();
    if (std::find(names.begin(), names.end(), *o.corrupt) == names.end()) {
      throw ConfigError("unknown gradcheck component '" + *o.corrupt + "'");
    }
  }
  SplitMix64 rng(o.seed);
  std::vector<GradcheckOutcome> out;
  out.push_back(check_embed(o, rng));
  out.push_back(check_attention(o, rng));
  out.push_back(check_ffn(o, rng));
  out.push_back(check_pool(o, rng));
  out.push_back(check_cross_entropy(o, rng));
  for (auto mode : {FusionMode::none, FusionMode::add, FusionMode::dot}) {
    out.push_back(check_head(o, mode, rng));
  }
  for (auto mode : {FusionMode::none, FusionMode::add, FusionMode::dot}) {
    out.push_back(check_model(o, mode, rng));
  }
  return out;
}

}  // namespace labelmatch
