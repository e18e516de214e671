#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "labelmatch/ablation.hpp"
#include "labelmatch/errors.hpp"
#include "labelmatch/hash.hpp"
#include "labelmatch/manifest.hpp"

namespace lm = labelmatch;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

lm::EvalReport fake_report() {
  lm::EvalReport r;
  r.dataset_name = "TREC6";
  r.seeds = {1, 2};
  r.runs = {{lm::FusionMode::none, 1, 80.0},  {lm::FusionMode::add, 1, 81.0},
            {lm::FusionMode::dot, 1, 82.0},   {lm::FusionMode::none, 2, 84.0},
            {lm::FusionMode::add, 2, 83.25},  {lm::FusionMode::dot, 2, 86.0}};
  return r;
}

}  // namespace

TEST_CASE("ablation table has the three paper rows") {
  const auto lines = lines_of(lm::format_ablation_table(fake_report()));
  REQUIRE(lines.size() >= 4);
  CHECK(lines[0] == "Label Embeddings  Fusion Methods  TREC6");
  CHECK(lines[1] == "No                No              82.0");
  CHECK(lines[2] == "Yes               Add             82.1");
  CHECK(lines[3] == "Yes               Dot Product     84.0");
}

TEST_CASE("report means are arithmetic means in seed order") {
  const auto r = fake_report();
  CHECK(r.accuracies(lm::FusionMode::add) == std::vector<double>{81.0, 83.25});
  CHECK(r.mean(lm::FusionMode::add) == doctest::Approx(82.125));
  CHECK(r.mean(lm::FusionMode::dot) == doctest::Approx(84.0));
}

TEST_CASE("ablation csv") {
  const auto lines = lines_of(lm::format_ablation_csv(fake_report()));
  REQUIRE(lines.size() == 10);
  CHECK(lines[0] == "label_embeddings,fusion_method,dataset,seed,accuracy");
  CHECK(lines[1] == "No,No,TREC6,1,80.0");
  CHECK(lines[3] == "No,No,TREC6,mean,82.0");
  CHECK(lines[9] == "Yes,Dot Product,TREC6,mean,84.0");
}

TEST_CASE("single-seed ablation mean equals the run") {
  auto config = lmtest::small_config(lm::FusionMode::dot);
  config.epochs = 2;
  const std::vector<std::uint64_t> seeds{4};
  std::size_t callbacks = 0;
  lm::AblationOptions options;
  options.on_run = [&](const lm::AblationRun&) { ++callbacks; };
  const auto report = lm::run_ablation(config, lmtest::mini_train(), lmtest::mini_test(),
                                       seeds, "mini", options);
  CHECK(callbacks == 3);
  REQUIRE(report.runs.size() == 3);
  for (auto mode : lm::kAblationModes) {
    const auto acc = report.accuracies(mode);
    REQUIRE(acc.size() == 1);
    CHECK(report.mean(mode) == acc[0]);
    CHECK(acc[0] >= 0.0);
    CHECK(acc[0] <= 100.0);
  }

  // A run of the same configuration trained alone reports the same accuracy.
  auto dot = config;
  dot.seed = 4;
  const auto alone = lm::train(dot, lmtest::mini_train(), lmtest::mini_test());
  CHECK(report.accuracies(lm::FusionMode::dot)[0] == alone.history.epochs.back().test_acc);
}

TEST_CASE("parallel ablation matches sequential") {
  auto config = lmtest::small_config(lm::FusionMode::dot);
  config.epochs = 1;
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto seq = lm::run_ablation(config, lmtest::mini_train(), lmtest::mini_test(), seeds, "m");
  lm::AblationOptions options;
  options.jobs = 4;
  const auto par =
      lm::run_ablation(config, lmtest::mini_train(), lmtest::mini_test(), seeds, "m", options);
  CHECK(lm::format_ablation_csv(seq) == lm::format_ablation_csv(par));
  CHECK_THROWS_AS(lm::run_ablation(config, lmtest::mini_train(), lmtest::mini_test(),
                                   std::span<const std::uint64_t>(), "m"),
                  lm::ConfigError);
}

TEST_CASE("FNV-1a known values") {
  CHECK(lm::fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(lm::fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(lm::fnv1a64("foobar") == 0x85944171f73967e8ull);
  CHECK(lm::to_hex(0xabcull) == "0000000000000abc");
}

TEST_CASE("manifest roundtrip and tamper detection") {
  const auto dir = lmtest::scratch_dir("manifest");
  lmtest::write_file(dir / "train.tsv", "A\tx y\nB\tz\n");
  lmtest::write_file(dir / "test.tsv", "A\tx\n");
  lmtest::write_file(dir / "m.ckpt", "LBLM1...");
  lm::RunManifest m;
  m.config.seed = 17;
  m.config.fusion = lm::FusionMode::add;
  m.train = lm::FileRef::of((dir / "train.tsv").string());
  m.test = lm::FileRef::of((dir / "test.tsv").string());
  m.checkpoint = lm::FileRef::of((dir / "m.ckpt").string());
  m.vocab_path = (dir / "m.ckpt.vocab").string();
  m.history_path = (dir / "m.ckpt.history.csv").string();
  m.started_at = lm::utc_timestamp();
  m.finished_at = lm::utc_timestamp();
  CHECK(m.started_at.size() == 20);  // YYYY-MM-DDTHH:MM:SSZ
  CHECK(m.train.hash == lm::to_hex(lm::fnv1a64("A\tx y\nB\tz\n")));

  const auto path = (dir / "manifest.json").string();
  lm::save_manifest(m, path);
  const auto loaded = lm::load_manifest(path);
  CHECK(loaded.config == m.config);
  CHECK(loaded.train.hash == m.train.hash);
  CHECK(loaded.checkpoint.path == m.checkpoint.path);
  CHECK_FALSE(loaded.verbalizer.has_value());

  lmtest::write_file(dir / "test.tsv", "A\tchanged\n");
  CHECK_THROWS_AS(lm::load_manifest(path), lm::DataError);
}
