// labelmatch: train, evaluate and verify label-embedding text classifiers.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "labelmatch/ablation.hpp"
#include "labelmatch/checkpoint.hpp"
#include "labelmatch/corpus.hpp"
#include "labelmatch/errors.hpp"
#include "labelmatch/gradcheck_suite.hpp"
#include "labelmatch/manifest.hpp"
#include "labelmatch/trainer.hpp"

namespace lm = labelmatch;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerification = 3;

struct TrainFlags {
  std::string train_path;
  std::string test_path;
  std::string verbalizer_path;
  std::string fusion = "dot";
  std::size_t dim = 64;
  std::size_t batch = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  std::size_t max_len = 32;
  std::size_t min_freq = 1;

  lm::TrainConfig config() const {
    lm::TrainConfig c;
    c.batch_size = batch;
    c.epochs = epochs;
    c.learning_rate = lr;
    c.seed = seed;
    c.fusion = lm::parse_fusion_mode(fusion);
    c.dim = dim;
    c.max_len = max_len;
    c.min_freq = min_freq;
    return c;
  }
};

void add_model_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--train", f.train_path, "Training set (TSV)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--test", f.test_path, "Evaluation set (TSV)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--verbalizer", f.verbalizer_path,
                  "JSON object mapping label -> phrase")
      ->check(CLI::ExistingFile);
  cmd->add_option("--dim", f.dim, "Embedding dimension")
      ->check(CLI::Range(1, 4096));
  cmd->add_option("--batch", f.batch, "Batch size (32 or 64)")
      ->check(CLI::IsMember({32, 64}));
  cmd->add_option("--epochs", f.epochs, "Training epochs");
  cmd->add_option("--lr", f.lr, "Adam learning rate")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--maxlen", f.max_len, "Maximum sequence length")
      ->check(CLI::Range(1, 4096));
  cmd->add_option("--min-freq", f.min_freq, "Minimum token frequency")
      ->check(CLI::Range(1, 1 << 30));
}

std::optional<lm::Verbalizer> maybe_verbalizer(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return lm::load_verbalizer(path);
}

std::string percent4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string percent1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

void write_history(const std::string& path, const lm::TrainHistory& history) {
  std::ofstream out(path);
  if (!out) throw lm::DataError("cannot write '" + path + "'");
  out << "epoch,train_loss,train_acc,test_acc\n";
  for (const auto& e : history.epochs) {
    char loss[32];
    std::snprintf(loss, sizeof(loss), "%.6f", e.train_loss);
    out << e.epoch << ',' << loss << ',' << percent4(e.train_acc) << ','
        << percent4(e.test_acc) << '\n';
  }
}

int cmd_train(const TrainFlags& flags, const std::string& out_path) {
  const auto started = lm::utc_timestamp();
  const auto config = flags.config();
  config.validate();
  const auto verbalizer = maybe_verbalizer(flags.verbalizer_path);
  const auto train_set = lm::load_dataset(flags.train_path, lm::Split::train);
  const auto test_set = lm::load_dataset(flags.test_path, lm::Split::test);

  lm::TrainOptions options;
  options.verbalizer = verbalizer ? &*verbalizer : nullptr;
  options.eval_threads = lm::threads_from_env();
  options.on_epoch = [&](const lm::EpochRecord& e) {
    std::cerr << "epoch " << e.epoch << "/" << config.epochs
              << "  loss " << e.train_loss << "  train_acc "
              << percent1(e.train_acc) << "  test_acc " << percent1(e.test_acc)
              << "\n";
  };
  const auto result = lm::train(config, train_set, test_set, options);

  const std::string vocab_path = out_path + ".vocab";
  const std::string history_path = out_path + ".history.csv";
  lm::save_checkpoint(out_path, config, result.model, result.vocab);
  result.vocab.save(vocab_path);
  write_history(history_path, result.history);

  lm::RunManifest manifest;
  manifest.config = config;
  manifest.train = lm::FileRef::of(flags.train_path);
  manifest.test = lm::FileRef::of(flags.test_path);
  if (!flags.verbalizer_path.empty()) {
    manifest.verbalizer = lm::FileRef::of(flags.verbalizer_path);
  }
  manifest.checkpoint = lm::FileRef::of(out_path);
  manifest.vocab_path = vocab_path;
  manifest.history_path = history_path;
  manifest.started_at = started;
  manifest.finished_at = lm::utc_timestamp();
  lm::save_manifest(manifest, out_path + ".manifest.json");

  std::cout << "wrote " << out_path << " (" << result.history.epochs.size()
            << " epochs, " << result.steps << " steps, "
            << result.history.wall_seconds << " s)\n";
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             std::string vocab_path) {
  if (vocab_path.empty()) vocab_path = checkpoint_path + ".vocab";
  const auto vocab = lm::Vocabulary::load(vocab_path);
  const auto ck = lm::load_checkpoint(checkpoint_path, vocab);
  if (const auto manifest = checkpoint_path + ".manifest.json";
      std::filesystem::exists(manifest)) {
    lm::load_manifest(manifest);
  }
  const auto data = lm::load_dataset(data_path, lm::Split::test);
  const auto encoded = lm::encode_dataset(data, ck.model.labels.names, vocab,
                                          ck.config.max_len);
  const auto result = lm::evaluate(ck.model, encoded, lm::threads_from_env());

  std::cout << "accuracy " << percent1(result.accuracy()) << " ("
            << result.correct << "/" << result.total << ")\n";
  std::cout << "accuracy_exact " << percent4(result.accuracy()) << "\n";
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> per_class;
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    auto& [correct, total] = per_class[encoded.targets[i]];
    ++total;
    correct += result.predictions[i] == encoded.targets[i];
  }
  for (const auto& [label, counts] : per_class) {
    std::cout << "  " << ck.model.labels.names[label] << " " << counts.first
              << "/" << counts.second << "\n";
  }
  return kExitOk;
}

int cmd_gradcheck(const lm::GradcheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const auto outcomes = lm::run_gradcheck_suite(options);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  std::vector<std::string> failures;
  for (const auto& o : outcomes) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-14s max_rel_err %.3e  tol %.0e  %s",
                  o.report.op_name.c_str(), o.report.max_rel_err, o.tolerance,
                  o.passed() ? "ok" : "FAIL");
    std::cout << line << "\n";
    if (!o.passed()) failures.push_back(o.report.op_name);
  }
  std::cout << "elapsed " << seconds << " s\n";
  if (!failures.empty()) {
    std::cout << "failed:";
    for (const auto& f : failures) std::cout << " " << f;
    std::cout << "\n";
    return kExitVerification;
  }
  return kExitOk;
}

int cmd_stats(const std::string& path) {
  const auto data = lm::load_dataset(path);
  std::cout << lm::format_stats(lm::dataset_stats(data)) << "\n";
  return kExitOk;
}

int cmd_ablation(const TrainFlags& flags, const std::vector<std::uint64_t>& seeds,
                 const std::string& name, const std::string& csv_path,
                 std::size_t jobs) {
  auto config = flags.config();
  config.validate();
  const auto verbalizer = maybe_verbalizer(flags.verbalizer_path);
  const auto train_set = lm::load_dataset(flags.train_path, lm::Split::train);
  const auto test_set = lm::load_dataset(flags.test_path, lm::Split::test);

  lm::AblationOptions options;
  options.verbalizer = verbalizer ? &*verbalizer : nullptr;
  options.jobs = jobs;
  options.on_run = [](const lm::AblationRun& run) {
    std::cerr << "seed " << run.seed << " fusion " << lm::to_string(run.mode)
              << ": " << percent1(run.accuracy) << "\n";
  };
  const auto report =
      lm::run_ablation(config, train_set, test_set, seeds, name, options);
  std::cout << lm::format_ablation_table(report);
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    if (!out) throw lm::DataError("cannot write '" + csv_path + "'");
    out << lm::format_ablation_csv(report);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label-embedding matching classifiers for intent classification"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  std::string out_path;
  auto* train = app.add_subcommand("train", "Train one model");
  add_model_flags(train, train_flags);
  train->add_option("--fusion", train_flags.fusion, "none | add | dot")
      ->check(CLI::IsMember({"none", "add", "dot"}));
  train->add_option("--seed", train_flags.seed, "Random seed");
  train->add_option("--out", out_path, "Checkpoint path")->required();

  std::string checkpoint_path, eval_data, vocab_path;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data)->required()->check(CLI::ExistingFile);
  eval->add_option("--vocab", vocab_path, "Defaults to <checkpoint>.vocab");

  lm::GradcheckOptions gc;
  std::string corrupt;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--dim", gc.dim)->check(CLI::Range(std::size_t{1}, lm::kGradcheckMaxDim));
  gradcheck->add_option("--maxlen", gc.max_len)->check(CLI::Range(std::size_t{2}, lm::kGradcheckMaxLen));
  gradcheck->add_option("--vocab", gc.vocab_size)->check(CLI::Range(std::size_t{4}, lm::kGradcheckMaxVocab));
  gradcheck->add_option("--seed", gc.seed);
  gradcheck->add_option("--corrupt", corrupt, "Scale one component's analytic gradient (testing)")
      ->group("");

  std::string stats_path;
  auto* stats = app.add_subcommand("stats", "Dataset statistics");
  stats->add_option("--data", stats_path)->required()->check(CLI::ExistingFile);

  TrainFlags ablation_flags;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string dataset_name = "dataset", csv_path;
  std::size_t jobs = 0;
  auto* ablation = app.add_subcommand("ablation", "No / Add / Dot Product comparison");
  add_model_flags(ablation, ablation_flags);
  ablation->add_option("--seeds", seeds, "Comma-separated seeds")->delimiter(',');
  ablation->add_option("--name", dataset_name, "Dataset column header");
  ablation->add_option("--csv", csv_path, "Also write the table as CSV");
  ablation->add_option("--jobs", jobs, "Concurrent runs (default LABELMATCH_THREADS)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_flags, out_path);
    if (*eval) return cmd_eval(checkpoint_path, eval_data, vocab_path);
    if (*gradcheck) {
      if (!corrupt.empty()) gc.corrupt = corrupt;
      return cmd_gradcheck(gc);
    }
    if (*stats) return cmd_stats(stats_path);
    if (*ablation) {
      if (seeds.empty()) throw lm::ConfigError("--seeds needs at least one seed");
      return cmd_ablation(ablation_flags, seeds, dataset_name, csv_path,
                          jobs == 0 ? lm::threads_from_env() : jobs);
    }
  } catch (const lm::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const lm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
