#include <cmath>
#include <limits>

#include "doctest.h"
#include "fixtures.hpp"
#include "labelmatch/errors.hpp"
#include "labelmatch/nncore.hpp"

namespace lm = labelmatch;

namespace {

lm::ParamTensor<double> param(std::size_t r, std::size_t c, lm::SplitMix64& rng,
                              double bound = 1.0) {
  lm::ParamTensor<double> p("p", r, c);
  for (auto& v : p.value.data) v = rng.uniform(-bound, bound);
  return p;
}

lm::Tensor2<double> tensor(std::size_t r, std::size_t c, lm::SplitMix64& rng) {
  lm::Tensor2<double> t(r, c);
  for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

lm::Mask prefix(std::size_t m, std::size_t valid) {
  lm::Mask mask(m, 0);
  for (std::size_t i = 0; i < valid; ++i) mask[i] = 1;
  return mask;
}

// Copy of `x` with `extra` rows of junk appended.
lm::Tensor2<double> with_pad_rows(const lm::Tensor2<double>& x, std::size_t extra,
                                  lm::SplitMix64& rng) {
  lm::Tensor2<double> out(x.rows + extra, x.cols);
  std::copy(x.data.begin(), x.data.end(), out.data.begin());
  for (std::size_t i = x.size(); i < out.size(); ++i) out.data[i] = rng.uniform(-5.0, 5.0);
  return out;
}

}  // namespace

TEST_CASE("embed: duplicate ids accumulate") {
  lm::ParamTensor<double> e("E", 5, 3), p("P", 2, 3);
  const auto seq = lm::make_token_seq({4, 4});
  lm::Tensor2<double> g(2, 3);
  g.data = {1, 2, 3, 10, 20, 30};
  lm::embed_backward(seq, g, e, p);
  CHECK(e.grad(4, 0) == 11);
  CHECK(e.grad(4, 1) == 22);
  CHECK(e.grad(4, 2) == 33);
  CHECK(e.grad(3, 0) == 0);
  CHECK(p.grad(1, 2) == 30);
}

TEST_CASE("embed: zero token table yields position rows") {
  lm::SplitMix64 rng(1);
  lm::ParamTensor<double> e("E", 6, 4);
  auto p = param(3, 4, rng);
  const auto out = lm::embed_forward(lm::make_token_seq({5, 2, 3}), e, p);
  CHECK(out == p.value);
}

TEST_CASE("embed: id out of range") {
  lm::ParamTensor<double> e("E", 3, 2), p("P", 2, 2);
  CHECK_THROWS_AS(lm::embed_forward(lm::make_token_seq({3}), e, p), lm::Error);
}

TEST_CASE("attention: single valid position returns its value row") {
  lm::SplitMix64 rng(2);
  const auto x = tensor(4, 3, rng);
  auto wq = param(3, 3, rng), wk = param(3, 3, rng), wv = param(3, 3, rng);
  const auto mask = prefix(4, 1);
  const auto out = lm::attention_forward(x, mask, wq, wk, wv);
  const auto v = lm::matmul(x, wv.value);
  for (std::size_t j = 0; j < 3; ++j) CHECK(out(0, j) == doctest::Approx(v(0, j)).epsilon(1e-15));
}

TEST_CASE("attention: identical keys give the shared value row") {
  lm::SplitMix64 rng(3);
  lm::Tensor2<double> x(5, 4);
  const auto row = lmtest::random_vector(4, rng);
  for (std::size_t i = 0; i < 5; ++i) std::copy(row.begin(), row.end(), x.row(i).begin());
  auto wq = param(4, 4, rng), wk = param(4, 4, rng), wv = param(4, 4, rng);
  const auto out = lm::attention_forward(x, prefix(5, 5), wq, wk, wv);
  const auto v = lm::matmul(x, wv.value);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(out(i, j) == doctest::Approx(v(0, j)).epsilon(1e-14));
  }
}

TEST_CASE("attention: appended pads leave valid rows bit-identical") {
  lm::SplitMix64 rng(4);
  const auto x = tensor(3, 4, rng);
  auto wq = param(4, 4, rng), wk = param(4, 4, rng), wv = param(4, 4, rng);
  const auto base = lm::attention_forward(x, prefix(3, 3), wq, wk, wv);
  const auto padded = lm::attention_forward(with_pad_rows(x, 4, rng), prefix(7, 3), wq, wk, wv);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(base(i, j) == padded(i, j));
  }
}

TEST_CASE("attention: all masked is an error") {
  lm::SplitMix64 rng(5);
  const auto x = tensor(2, 2, rng);
  auto w = param(2, 2, rng);
  CHECK_THROWS_AS(lm::attention_forward(x, prefix(2, 0), w, w, w), lm::NumericError);
}

TEST_CASE("ffn: zero weights give the output bias") {
  lm::SplitMix64 rng(6);
  const auto x = tensor(3, 2, rng);
  lm::ParamTensor<double> w1("W1", 2, 8), b1("b1", 1, 8), w2("W2", 8, 2), b2("b2", 1, 2);
  b2.value.data = {0.25, -4.0};
  const auto out = lm::ffn_forward(x, w1, b1, w2, b2);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(out(i, 0) == 0.25);
    CHECK(out(i, 1) == -4.0);
  }
}

TEST_CASE("ffn: negative preactivations block the W1 gradient") {
  lm::SplitMix64 rng(7);
  lm::Tensor2<double> x(2, 2);
  x.data = {1.0, 2.0, 0.5, 0.5};
  auto w1 = param(2, 4, rng);
  for (auto& v : w1.value.data) v = -std::abs(v) - 0.1;  // x > 0, so pre < 0
  lm::ParamTensor<double> b1("b1", 1, 4);
  auto w2 = param(4, 2, rng);
  auto b2 = param(1, 2, rng);
  lm::FfnCache<double> cache;
  const auto out = lm::ffn_forward(x, w1, b1, w2, b2, &cache);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(out(i, 0) == b2.value.data[0]);
    CHECK(out(i, 1) == b2.value.data[1]);
  }
  lm::Tensor2<double> g(2, 2, 1.0);
  lm::ffn_backward(x, cache, g, w1, b1, w2, b2);
  for (double v : w1.grad.data) CHECK(v == 0.0);
  for (double v : b1.grad.data) CHECK(v == 0.0);
}

TEST_CASE("mean pool examples") {
  lm::Tensor2<double> x(2, 1);
  x.data = {1.0, 3.0};
  CHECK(lm::mean_pool_masked(x, prefix(2, 2)) == std::vector<double>{2.0});

  lm::SplitMix64 rng(8);
  const auto v = lmtest::random_vector(3, rng);
  lm::Tensor2<double> same(4, 3);
  for (std::size_t i = 0; i < 4; ++i) std::copy(v.begin(), v.end(), same.row(i).begin());
  const auto pooled = lm::mean_pool_masked(same, prefix(4, 4));
  for (std::size_t j = 0; j < 3; ++j) CHECK(pooled[j] == doctest::Approx(v[j]).epsilon(1e-15));

  const auto base = tensor(3, 3, rng);
  CHECK(lm::mean_pool_masked(base, prefix(3, 3)) ==
        lm::mean_pool_masked(with_pad_rows(base, 5, rng), prefix(8, 3)));
  CHECK_THROWS_AS(lm::mean_pool_masked(base, prefix(3, 0)), lm::NumericError);
}

TEST_CASE("mean pool backward spreads the gradient over valid rows") {
  const std::vector<double> g{3.0, 6.0};
  const auto dx = lm::mean_pool_masked_backward<double>(prefix(4, 3), g);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(dx(i, 0) == 1.0);
    CHECK(dx(i, 1) == 2.0);
  }
  CHECK(dx(3, 0) == 0.0);
}

TEST_CASE("softmax examples") {
  const std::vector<double> equal(6, 0.7);
  for (double p : lm::softmax<double>(equal)) CHECK(p == doctest::Approx(1.0 / 6.0).epsilon(1e-15));

  const std::vector<double> z{0.0, std::log(3.0)};
  const auto p = lm::softmax<double>(z);
  CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-15));

  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<double> masked{1.0, -inf, 2.0};
  CHECK(lm::softmax<double>(masked)[1] == 0.0);
  const std::vector<double> all_masked{-inf, -inf};
  CHECK_THROWS_AS(lm::softmax<double>(all_masked), lm::NumericError);
  const std::vector<double> single{1.0};
  CHECK_THROWS_AS(lm::softmax<double>(single), lm::NumericError);
}

TEST_CASE("cross entropy examples") {
  const std::vector<double> uniform(6, 0.0);
  CHECK(lm::cross_entropy<double>(uniform, 3).loss == doctest::Approx(std::log(6.0)).epsilon(1e-15));
  CHECK(std::log(6.0) == doctest::Approx(1.791759).epsilon(1e-6));

  const std::vector<double> two{0.0, 0.0};
  const auto ce = lm::cross_entropy<double>(two, 0);
  CHECK(ce.loss == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(ce.grad_logits[0] == doctest::Approx(-0.5));
  CHECK(ce.grad_logits[1] == doctest::Approx(0.5));

  const std::vector<double> confident{50.0, 0.0, 0.0};
  CHECK(lm::cross_entropy<double>(confident, 0).loss < 1e-8);
  CHECK(lm::cross_entropy<float>(std::vector<float>{50.0f, 0.0f}, 0).loss >= 0.0f);

  CHECK_THROWS_AS(lm::cross_entropy<double>(two, 2), lm::NumericError);
}

TEST_CASE("finite_diff_check: quadratic") {
  lm::SplitMix64 rng(9);
  auto theta = lmtest::random_vector(10, rng, -3.0, 3.0);
  std::vector<double> grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) grad[i] = 2.0 * theta[i];
  const std::vector<lm::GradProbe> probes{{theta, grad}};
  const auto report = lm::finite_diff_check(
      "quadratic",
      [&] {
        double s = 0.0;
        for (double v : theta) s += v * v;
        return s;
      },
      probes, 1e-5);
  CHECK(report.max_rel_err < 1e-9);
  CHECK(report.max_rel_err >= 0.0);
  CHECK(report.num_checked == 10);
}

TEST_CASE("finite_diff_check: linear layer plus cross entropy") {
  lm::SplitMix64 rng(10);
  const std::size_t k = 4, d = 5;
  auto w = lmtest::random_vector(k * d, rng);
  const auto x = lmtest::random_vector(d, rng);
  const std::size_t target = 2;
  auto logits_of = [&] {
    std::vector<double> z(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < d; ++j) z[c] += w[c * d + j] * x[j];
    }
    return z;
  };
  const auto ce = lm::cross_entropy<double>(logits_of(), target);
  std::vector<double> grad(k * d);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < d; ++j) grad[c * d + j] = ce.grad_logits[c] * x[j];
  }
  const std::vector<lm::GradProbe> probes{{w, grad}};
  const auto report = lm::finite_diff_check(
      "linear_ce", [&] { return lm::cross_entropy<double>(logits_of(), target).loss; },
      probes, 1e-5);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("finite_diff_check: detects a wrong gradient and bad input") {
  std::vector<double> theta{1.0, 2.0};
  std::vector<double> wrong{2.0, 3.0};
  const std::vector<lm::GradProbe> probes{{theta, wrong}};
  auto f = [&] { return theta[0] * theta[0] + theta[1] * theta[1]; };
  const auto report = lm::finite_diff_check("wrong", f, probes, 1e-5);
  CHECK(report.max_rel_err > 0.2);
  CHECK(report.worst_index == 1);
  CHECK(theta == std::vector<double>{1.0, 2.0});

  CHECK_THROWS_AS(lm::finite_diff_check("eps", f, probes, 1e-2), lm::NumericError);
  CHECK_THROWS_AS(lm::finite_diff_check(
                      "nan", [] { return std::numeric_limits<double>::quiet_NaN(); },
                      probes, 1e-5),
                  lm::NumericError);
}
