#pragma once

// The shared sentence encoder. One EncoderParams instance encodes both
// utterances and verbalized label names:
//
//   X0 = E[ids] + P
//   X1 = X0 + attention(X0)
//   X2 = X1 + ffn(X1)
//   out = masked mean of X2 rows
//
// Only the valid prefix of a TokenSeq is processed. Padded rows never reach
// the pooled output (attention ignores pad keys and the FFN is row-wise), so
// dropping them is exact.

#include <string>
#include <vector>

#include "labelmatch/corpus.hpp"
#include "labelmatch/nncore.hpp"

namespace labelmatch {

template <class T>
struct EncoderParams {
  ParamTensor<T> token_embedding;     // V x d
  ParamTensor<T> position_embedding;  // M x d
  ParamTensor<T> query;               // d x d
  ParamTensor<T> key;                 // d x d
  ParamTensor<T> value;               // d x d
  ParamTensor<T> ffn_in;              // d x h
  ParamTensor<T> ffn_in_bias;         // 1 x h
  ParamTensor<T> ffn_out;             // h x d
  ParamTensor<T> ffn_out_bias;        // 1 x d

  static EncoderParams zeros(std::size_t vocab_size, std::size_t max_len,
                             std::size_t dim, std::size_t hidden) {
    EncoderParams p;
    p.token_embedding = {"encoder.token_embedding", vocab_size, dim};
    p.position_embedding = {"encoder.position_embedding", max_len, dim};
    p.query = {"encoder.attention.query", dim, dim};
    p.key = {"encoder.attention.key", dim, dim};
    p.value = {"encoder.attention.value", dim, dim};
    p.ffn_in = {"encoder.ffn.in", dim, hidden};
    p.ffn_in_bias = {"encoder.ffn.in_bias", 1, hidden};
    p.ffn_out = {"encoder.ffn.out", hidden, dim};
    p.ffn_out_bias = {"encoder.ffn.out_bias", 1, dim};
    return p;
  }

  std::size_t dim() const { return token_embedding.cols(); }
  std::size_t vocab_size() const { return token_embedding.rows(); }
  std::size_t max_len() const { return position_embedding.rows(); }
  std::size_t hidden() const { return ffn_in.cols(); }

  // Declaration order; fixes checkpoint layout and optimizer order.
  std::vector<ParamTensor<T>*> parameters() {
    return {&token_embedding, &position_embedding, &query, &key, &value,
            &ffn_in, &ffn_in_bias, &ffn_out, &ffn_out_bias};
  }
  std::vector<const ParamTensor<T>*> parameters() const {
    return {&token_embedding, &position_embedding, &query, &key, &value,
            &ffn_in, &ffn_in_bias, &ffn_out, &ffn_out_bias};
  }

  template <class U>
  EncoderParams<U> cast() const {
    EncoderParams<U> out;
    auto dst = out.parameters();
    auto src = parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
      *dst[i] = src[i]->template cast<U>();
    }
    return out;
  }
};

template <class T>
struct EncodeCache {
  TokenSeq prefix;
  Tensor2<T> x0;
  AttentionCache<T> attention;
  Tensor2<T> x1;
  FfnCache<T> ffn;
};

namespace detail {

inline TokenSeq valid_prefix(const TokenSeq& seq) {
  if (seq.true_len == 0 || seq.true_len > seq.ids.size() ||
      seq.mask.size() != seq.ids.size()) {
    throw NumericError("encode: sequence has no valid positions");
  }
  return make_token_seq(std::vector<std::uint32_t>(
      seq.ids.begin(), seq.ids.begin() + static_cast<std::ptrdiff_t>(seq.true_len)));
}

}  // namespace detail

template <class T>
std::vector<T> encode(const TokenSeq& seq, const EncoderParams<T>& p,
                      EncodeCache<T>* cache = nullptr) {
  EncodeCache<T> local;
  EncodeCache<T>& c = cache != nullptr ? *cache : local;
  c.prefix = detail::valid_prefix(seq);
  const Mask& mask = c.prefix.mask;

  c.x0 = embed_forward(c.prefix, p.token_embedding, p.position_embedding);
  c.x1 = attention_forward(c.x0, mask, p.query, p.key, p.value, &c.attention);
  for (std::size_t i = 0; i < c.x1.size(); ++i) c.x1.data[i] += c.x0.data[i];
  Tensor2<T> x2 =
      ffn_forward(c.x1, p.ffn_in, p.ffn_in_bias, p.ffn_out, p.ffn_out_bias, &c.ffn);
  for (std::size_t i = 0; i < x2.size(); ++i) x2.data[i] += c.x1.data[i];
  return mean_pool_masked(x2, mask);
}

// Accumulates d(loss)/d(params) given d(loss)/d(encode output).
template <class T>
void encode_backward(const EncodeCache<T>& c, std::span<const T> d_out,
                     EncoderParams<T>& p) {
  const Mask& mask = c.prefix.mask;
  Tensor2<T> d_x2 = mean_pool_masked_backward<T>(mask, d_out);
  // X2 = X1 + ffn(X1)
  Tensor2<T> d_x1 = ffn_backward(c.x1, c.ffn, d_x2, p.ffn_in, p.ffn_in_bias,
                                 p.ffn_out, p.ffn_out_bias);
  for (std::size_t i = 0; i < d_x1.size(); ++i) d_x1.data[i] += d_x2.data[i];
  // X1 = X0 + attention(X0)
  Tensor2<T> d_x0 =
      attention_backward(c.x0, mask, c.attention, d_x1, p.query, p.key, p.value);
  for (std::size_t i = 0; i < d_x0.size(); ++i) d_x0.data[i] += d_x1.data[i];
  embed_backward(c.prefix, d_x0, p.token_embedding, p.position_embedding);
}

// Label names in dataset order, their verbalized phrases and token sequences.
struct LabelSet {
  std::vector<std::string> names;
  std::vector<std::string> phrases;
  std::vector<TokenSeq> seqs;

  std::size_t size() const { return names.size(); }
};

// Verbalizes and tokenizes each label. Requires at least two labels.
LabelSet make_label_set(const std::vector<std::string>& names,
                        const Vocabulary& vocab, std::size_t max_len,
                        const Verbalizer* verbalizer = nullptr);

// Same, from already-verbalized phrases (used when reloading checkpoints).
LabelSet make_label_set(const std::vector<std::string>& names,
                        const std::vector<std::string>& phrases,
                        const Vocabulary& vocab, std::size_t max_len);

// K x d matrix whose row k encodes label k with the shared parameters.
template <class T>
Tensor2<T> encode_labels(const LabelSet& labels, const EncoderParams<T>& p,
                         std::vector<EncodeCache<T>>* caches = nullptr) {
  if (labels.size() < 2) {
    throw NumericError("encode_labels: need at least two labels");
  }
  if (caches != nullptr) caches->assign(labels.size(), {});
  Tensor2<T> out(labels.size(), p.dim());
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const auto row = encode(labels.seqs[k], p,
                            caches != nullptr ? &(*caches)[k] : nullptr);
    std::copy(row.begin(), row.end(), out.row(k).begin());
  }
  return out;
}

template <class T>
void encode_labels_backward(const std::vector<EncodeCache<T>>& caches,
                            const Tensor2<T>& d_labels, EncoderParams<T>& p) {
  for (std::size_t k = 0; k < caches.size(); ++k) {
    encode_backward(caches[k], d_labels.row(k), p);
  }
}

}  // namespace labelmatch
