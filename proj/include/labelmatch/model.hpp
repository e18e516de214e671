#pragma once

#include <optional>
#include <span>
#include <vector>

#include "labelmatch/encoder.hpp"
#include "labelmatch/fusion.hpp"

namespace labelmatch {

template <class T>
struct Model {
  EncoderParams<T> encoder;
  FusionHead<T> head;
  LabelSet labels;

  FusionMode fusion() const { return head.mode(); }
  std::size_t num_labels() const { return labels.size(); }

  // Encoder parameters in declaration order, then head parameters.
  std::vector<ParamTensor<T>*> parameters() {
    auto params = encoder.parameters();
    for (auto* p : head.parameters()) params.push_back(p);
    return params;
  }
  std::vector<const ParamTensor<T>*> parameters() const {
    auto params = encoder.parameters();
    for (const auto* p : head.parameters()) params.push_back(p);
    return params;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  template <class U>
  Model<U> cast() const {
    return {encoder.template cast<U>(), head.template cast<U>(), labels};
  }
};

// Label matrix under the current parameters, or nullopt for the baseline head.
template <class T>
std::optional<Tensor2<T>> label_matrix(const Model<T>& model) {
  if (!model.head.uses_labels()) return std::nullopt;
  return encode_labels(model.labels, model.encoder);
}

template <class T>
std::vector<T> model_logits(const Model<T>& model, const TokenSeq& seq,
                            const Tensor2<T>* labels) {
  const auto t = encode(seq, model.encoder);
  return score<T>(t, labels, model.head);
}

template <class T>
struct BatchOutcome {
  double loss_sum = 0.0;  // sum of per-example losses
  std::size_t correct = 0;
};

// Forward and backward over the examples at `indices`, accumulating the
// gradient of the batch-mean loss into every parameter's grad. Examples are
// processed in the given order; label-path gradients are propagated once,
// after all examples, in label order.
template <class T>
BatchOutcome<T> accumulate_batch(Model<T>& model,
                                 std::span<const std::size_t> indices,
                                 const std::vector<TokenSeq>& seqs,
                                 const std::vector<std::size_t>& targets) {
  BatchOutcome<T> outcome;
  if (indices.empty()) return outcome;
  const T inv_batch = T{1} / static_cast<T>(indices.size());

  std::vector<EncodeCache<T>> label_caches;
  std::optional<Tensor2<T>> labels;
  std::optional<Tensor2<T>> d_labels;
  if (model.head.uses_labels()) {
    labels = encode_labels(model.labels, model.encoder, &label_caches);
    d_labels.emplace(labels->rows, labels->cols);
  }

  EncodeCache<T> cache;
  std::vector<T> d_t(model.encoder.dim());
  for (const std::size_t idx : indices) {
    const auto t = encode(seqs[idx], model.encoder, &cache);
    const auto logits =
        score<T>(t, labels ? &*labels : nullptr, model.head);
    auto ce = cross_entropy<T>(logits, targets[idx]);
    outcome.loss_sum += static_cast<double>(ce.loss);
    outcome.correct += argmax<T>(logits) == targets[idx];
    for (auto& g : ce.grad_logits) g *= inv_batch;

    std::fill(d_t.begin(), d_t.end(), T{0});
    score_backward<T>(t, labels ? &*labels : nullptr, model.head,
                      ce.grad_logits, d_t, d_labels ? &*d_labels : nullptr);
    encode_backward<T>(cache, d_t, model.encoder);
  }
  if (labels) {
    encode_labels_backward(label_caches, *d_labels, model.encoder);
  }
  return outcome;
}

}  // namespace labelmatch
