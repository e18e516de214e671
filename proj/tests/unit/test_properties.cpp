#include "doctest.h"
#include "fixtures.hpp"
#include "invariants.hpp"
#include "labelmatch/encoder.hpp"

namespace lm = labelmatch;

namespace {

constexpr std::size_t kCases = 2000;

void require_property(const lmtest::PropertyResult& r) {
  INFO(r.name << ": " << r.failures << "/" << r.cases << " failed; " << r.first_failure);
  CHECK(r.cases >= 1000);
  CHECK(r.passed());
}

// Random text over ASCII words, Unicode spaces and a few multi-byte letters.
std::string random_text(lm::SplitMix64& rng) {
  static const char* pieces[] = {"a", "B", "word", "Q", "é", "ß", "日本", "x1", "?", "-",
                                 " ", "  ", "\t", "\xC2\xA0", "\xE3\x80\x80", "\xE2\x80\x83"};
  std::string out;
  const std::size_t n = rng.below(40);
  for (std::size_t i = 0; i < n; ++i) out += pieces[rng.below(std::size(pieces))];
  return out;
}

}  // namespace

TEST_CASE("softmax is a probability vector") {
  require_property(lmtest::softmax_normalization(kCases, 101));
}

TEST_CASE("softmax is invariant to additive shifts") {
  require_property(lmtest::softmax_shift_invariance(kCases, 102));
}

TEST_CASE("cross-entropy gradient sums to zero") {
  require_property(lmtest::cross_entropy_zero_sum(kCases, 103));
}

TEST_CASE("encode ignores appended padding") {
  require_property(lmtest::encode_padding_invariance(kCases, 104));
}

TEST_CASE("dot-fusion argmax is invariant to positive scaling") {
  require_property(lmtest::dot_argmax_scaling(kCases, 105));
}

TEST_CASE("tokenize keeps length and mask consistent") {
  lm::SplitMix64 rng(106);
  const auto vocab = lm::build_vocab(std::vector<std::string>{"a b word q é x1 ?"});
  std::size_t checked = 0;
  for (std::size_t c = 0; c < kCases; ++c) {
    const auto text = random_text(rng);
    const std::size_t m = 1 + rng.below(12);
    const auto tokens = lm::split_tokens(text);
    if (tokens.empty()) {
      CHECK_THROWS(lm::tokenize(text, vocab, m));
      continue;
    }
    const auto seq = lm::tokenize(text, vocab, m);
    ++checked;
    REQUIRE(seq.ids.size() == m);
    REQUIRE(seq.mask.size() == m);
    CHECK(seq.true_len == std::min(m, tokens.size()));
    for (std::size_t i = 0; i < m; ++i) {
      CHECK(static_cast<bool>(seq.mask[i]) == (i < seq.true_len));
      if (i >= seq.true_len) CHECK(seq.ids[i] == lm::Vocabulary::kPadId);
      if (i < seq.true_len) CHECK(seq.ids[i] != lm::Vocabulary::kPadId);
    }
  }
  CHECK(checked >= 1000);
}

TEST_CASE("dataset save and reload is the identity") {
  lm::SplitMix64 rng(107);
  const auto dir = lmtest::scratch_dir("roundtrip");
  const char* labels[] = {"NUM", "LOC", "atis_flight", "HUM", "É"};
  for (std::size_t c = 0; c < 200; ++c) {
    std::vector<lm::Example> examples;
    const std::size_t n = 1 + rng.below(20);
    for (std::size_t i = 0; i < n; ++i) {
      std::string text;
      while (lm::split_tokens(text).empty()) text = random_text(rng);
      // Leading and trailing whitespace and tabs are not representable.
      for (auto& ch : text) if (ch == '\t') ch = ' ';
      const auto first = text.find_first_not_of(' ');
      const auto last = text.find_last_not_of(' ');
      text = text.substr(first, last - first + 1);
      if (lm::split_tokens(text).empty()) text = "x";
      examples.push_back({labels[rng.below(std::size(labels))], text});
    }
    const auto ds = lm::make_dataset(examples);
    const auto path = (dir / ("d" + std::to_string(c) + ".tsv")).string();
    lm::save_dataset(ds, path);
    CHECK(lm::load_dataset(path, lm::Split::train, lm::DatasetFormat::tsv) == ds);
  }
}

TEST_CASE("vocabulary depends only on the token multiset") {
  lm::SplitMix64 rng(108);
  for (std::size_t c = 0; c < 300; ++c) {
    std::vector<std::string> tokens;
    const std::size_t n = 1 + rng.below(50);
    for (std::size_t i = 0; i < n; ++i) tokens.push_back("t" + std::to_string(rng.below(12)));
    auto shuffled = tokens;
    lm::shuffle(std::span<std::string>(shuffled), rng);
    // Regroup into differently sized texts.
    auto group = [&](const std::vector<std::string>& toks) {
      std::vector<std::string> texts(1);
      for (const auto& t : toks) {
        if (rng.below(4) == 0) texts.emplace_back();
        texts.back() += t + " ";
      }
      return texts;
    };
    const std::size_t min_freq = 1 + rng.below(3);
    CHECK(lm::build_vocab(group(tokens), min_freq) == lm::build_vocab(group(shuffled), min_freq));
  }
}

TEST_CASE("encode is sensitive to token order") {
  lm::SplitMix64 rng(109);
  std::size_t checked = 0;
  for (std::size_t c = 0; c < kCases; ++c) {
    const auto model = lmtest::random_model(lm::FusionMode::none, 30, 8, 8, 2, 1 + c / 100);
    auto seq = lmtest::random_seq(2 + rng.below(7), 8, 30, rng);
    const std::size_t i = rng.below(seq.true_len);
    std::size_t j = rng.below(seq.true_len);
    if (i == j) j = (i + 1) % seq.true_len;
    auto swapped = seq;
    std::swap(swapped.ids[i], swapped.ids[j]);
    const bool same_token = seq.ids[i] == seq.ids[j];
    const bool same_output =
        lmtest::same_bits(lm::encode(seq, model.encoder), lm::encode(swapped, model.encoder));
    CHECK(same_output == same_token);
    checked += !same_token;
  }
  CHECK(checked >= 1000);
}

TEST_CASE("attention and pooling ignore appended pad rows bit-exactly") {
  lm::SplitMix64 rng(110);
  for (std::size_t c = 0; c < kCases; ++c) {
    const std::size_t d = 1 + rng.below(8);
    const std::size_t m = 1 + rng.below(8);
    const std::size_t extra = 1 + rng.below(8);
    lm::Tensor2<float> x(m, d), xp(m + extra, d);
    for (auto& v : x.data) v = static_cast<float>(rng.uniform(-2, 2));
    std::copy(x.data.begin(), x.data.end(), xp.data.begin());
    for (std::size_t i = x.size(); i < xp.size(); ++i) xp.data[i] = static_cast<float>(rng.uniform(-9, 9));
    lm::ParamTensor<float> wq("q", d, d), wk("k", d, d), wv("v", d, d);
    for (auto* w : {&wq, &wk, &wv}) {
      for (auto& v : w->value.data) v = static_cast<float>(rng.uniform(-1, 1));
    }
    const lm::Mask mask(m, 1);
    lm::Mask mask_p(m + extra, 0);
    std::fill(mask_p.begin(), mask_p.begin() + static_cast<std::ptrdiff_t>(m), 1);
    const auto a = lm::attention_forward(x, mask, wq, wk, wv);
    const auto b = lm::attention_forward(xp, mask_p, wq, wk, wv);
    CHECK(std::equal(a.data.begin(), a.data.end(), b.data.begin()));
    CHECK(lmtest::same_bits(lm::mean_pool_masked(x, mask), lm::mean_pool_masked(xp, mask_p)));
  }
}
