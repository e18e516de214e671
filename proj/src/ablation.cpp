#include "labelmatch/ablation.hpp"

#include <cstdio>
#include <future>
#include <numeric>
#include <sstream>

#include "labelmatch/errors.hpp"

namespace labelmatch {

namespace {

std::string one_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::vector<double> EvalReport::accuracies(FusionMode mode) const {
  std::vector<double> out;
  for (const auto seed : seeds) {
    for (const auto& run : runs) {
      if (run.mode == mode && run.seed == seed) out.push_back(run.accuracy);
    }
  }
  return out;
}

double EvalReport::mean(FusionMode mode) const {
  const auto acc = accuracies(mode);
  if (acc.empty()) return 0.0;
  return std::accumulate(acc.begin(), acc.end(), 0.0) /
         static_cast<double>(acc.size());
}

std::string label_embeddings_cell(FusionMode mode) {
  return mode == FusionMode::none ? "No" : "Yes";
}

std::string fusion_method_cell(FusionMode mode) {
  switch (mode) {
    case FusionMode::none: return "No";
    case FusionMode::add: return "Add";
    case FusionMode::dot: return "Dot Product";
  }
  return "?";
}

EvalReport run_ablation(const TrainConfig& base, const Dataset& train_set,
                        const Dataset& test_set,
                        std::span<const std::uint64_t> seeds,
                        std::string dataset_name,
                        const AblationOptions& options) {
  if (seeds.empty()) {
    throw ConfigError("ablation needs at least one seed");
  }
  EvalReport report;
  report.dataset_name = std::move(dataset_name);
  report.seeds.assign(seeds.begin(), seeds.end());

  std::vector<AblationRun> plan;
  for (const auto seed : seeds) {
    for (const auto mode : kAblationModes) plan.push_back({mode, seed, 0.0});
  }

  auto run_one = [&](AblationRun run) {
    TrainConfig config = base;
    config.fusion = run.mode;
    config.seed = run.seed;
    TrainOptions train_options;
    train_options.verbalizer = options.verbalizer;
    const auto result = train(config, train_set, test_set, train_options);
    run.accuracy = result.history.epochs.empty()
                       ? evaluate(result.model,
                                  encode_dataset(test_set,
                                                 result.model.labels.names,
                                                 result.vocab, config.max_len))
                             .accuracy()
                       : result.history.epochs.back().test_acc;
    return run;
  };

  auto record = [&](AblationRun run) {
    report.runs.push_back(run);
    if (options.on_run) options.on_run(run);
  };
  const std::size_t jobs = std::max<std::size_t>(1, options.jobs);
  if (jobs == 1) {
    for (const auto& run : plan) record(run_one(run));
    return report;
  }
  for (std::size_t begin = 0; begin < plan.size(); begin += jobs) {
    const std::size_t end = std::min(plan.size(), begin + jobs);
    std::vector<std::future<AblationRun>> pending;
    for (std::size_t i = begin; i < end; ++i) {
      pending.push_back(std::async(std::launch::async, run_one, plan[i]));
    }
    for (auto& f : pending) record(f.get());
  }
  return report;
}

std::string format_ablation_table(const EvalReport& report) {
  std::ostringstream out;
  const std::size_t c1 = 18, c2 = 16;
  out << pad("Label Embeddings", c1) << pad("Fusion Methods", c2)
      << report.dataset_name << "\n";
  for (const auto mode : kAblationModes) {
    out << pad(label_embeddings_cell(mode), c1)
        << pad(fusion_method_cell(mode), c2) << one_decimal(report.mean(mode))
        << "\n";
  }
  out << "\nPer-seed test accuracy (%)\n" << pad("Fusion Methods", c2);
  for (const auto seed : report.seeds) {
    out << pad("seed " + std::to_string(seed), 10);
  }
  out << "mean\n";
  for (const auto mode : kAblationModes) {
    out << pad(fusion_method_cell(mode), c2);
    for (const double acc : report.accuracies(mode)) {
      out << pad(one_decimal(acc), 10);
    }
    out << one_decimal(report.mean(mode)) << "\n";
  }
  return out.str();
}

std::string format_ablation_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "label_embeddings,fusion_method,dataset,seed,accuracy\n";
  for (const auto mode : kAblationModes) {
    const auto acc = report.accuracies(mode);
    for (std::size_t i = 0; i < acc.size(); ++i) {
      out << label_embeddings_cell(mode) << ',' << fusion_method_cell(mode)
          << ',' << report.dataset_name << ',' << report.seeds[i] << ','
          << one_decimal(acc[i]) << "\n";
    }
    out << label_embeddings_cell(mode) << ',' << fusion_method_cell(mode) << ','
        << report.dataset_name << ",mean," << one_decimal(report.mean(mode))
        << "\n";
  }
  return out.str();
}

}  // namespace labelmatch
