#include "labelmatch/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "labelmatch/errors.hpp"

namespace labelmatch {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be > 0");
  }
  if (dim < 1) throw ConfigError("dim must be >= 1");
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  if (min_freq < 1) throw ConfigError("min_freq must be >= 1");
  if (depth != 1) {
    throw ConfigError("only single-block encoders are supported (depth = 1)");
  }
}

namespace {

void fill_uniform(ParamTensor<float>& p, double bound, SplitMix64& rng) {
  for (auto& v : p.value.data) {
    v = static_cast<float>(rng.uniform(-bound, bound));
  }
}

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

Model<float> init_model(const TrainConfig& config, std::size_t vocab_size,
                        LabelSet labels, SplitMix64& rng) {
  config.validate();
  if (labels.size() < 2) {
    throw DataError("need at least two labels to train a classifier");
  }
  const std::size_t d = config.dim;
  const std::size_t h = config.ffn_hidden();
  const std::size_t k = labels.size();

  Model<float> model;
  model.encoder =
      EncoderParams<float>::zeros(vocab_size, config.max_len, d, h);
  model.head = FusionHead<float>::zeros(config.fusion, k, d);
  model.labels = std::move(labels);

  auto& enc = model.encoder;
  fill_uniform(enc.token_embedding, glorot_bound(vocab_size, d), rng);
  fill_uniform(enc.position_embedding, 0.01, rng);
  fill_uniform(enc.query, glorot_bound(d, d), rng);
  fill_uniform(enc.key, glorot_bound(d, d), rng);
  fill_uniform(enc.value, glorot_bound(d, d), rng);
  fill_uniform(enc.ffn_in, glorot_bound(d, h), rng);
  fill_uniform(enc.ffn_out, glorot_bound(h, d), rng);

  if (auto* head = model.head.get<BaselineHead<float>>()) {
    fill_uniform(head->weight, glorot_bound(d, k), rng);
  } else if (auto* head = model.head.get<AddHead<float>>()) {
    fill_uniform(head->weight, glorot_bound(d, 1), rng);
  } else if (auto* head = model.head.get<DotHead<float>>()) {
    head->log_scale.value.data[0] = static_cast<float>(std::log(10.0));
  }
  return model;
}

template <class T>
void adam_step(std::span<ParamTensor<T>* const> params, double lr,
               std::uint64_t t, const AdamConstants& c) {
  if (t < 1) throw NumericError("adam_step: step counter must be >= 1");
  for (const auto* p : params) {
    for (const T g : p->grad.data) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in parameter '" + p->name + "'");
      }
    }
  }
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (auto* p : params) {
    auto& value = p->value.data;
    auto& grad = p->grad.data;
    auto& m = p->adam_m.data;
    auto& v = p->adam_v.data;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      const double mi = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      const double vi = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / correction1;
      const double v_hat = vi / correction2;
      value[i] = static_cast<T>(value[i] -
                                lr * m_hat / (std::sqrt(v_hat) + c.epsilon));
      grad[i] = T{0};
    }
  }
}

template void adam_step<float>(std::span<ParamTensor<float>* const>, double,
                               std::uint64_t, const AdamConstants&);
template void adam_step<double>(std::span<ParamTensor<double>* const>, double,
                                std::uint64_t, const AdamConstants&);

EncodedSet encode_dataset(const Dataset& dataset,
                          const std::vector<std::string>& label_names,
                          const Vocabulary& vocab, std::size_t max_len) {
  EncodedSet out;
  out.seqs.reserve(dataset.size());
  out.targets.reserve(dataset.size());
  for (const auto& ex : dataset.examples) {
    const auto it =
        std::find(label_names.begin(), label_names.end(), ex.label_name);
    if (it == label_names.end()) {
      throw DataError("label '" + ex.label_name +
                      "' does not appear in the training labels");
    }
    out.targets.push_back(static_cast<std::size_t>(it - label_names.begin()));
    out.seqs.push_back(tokenize(ex.text, vocab, max_len));
  }
  return out;
}

EvalResult evaluate(const Model<float>& model, const EncodedSet& data,
                    std::size_t threads) {
  const auto labels = label_matrix(model);
  const Tensor2<float>* label_ptr = labels ? &*labels : nullptr;

  EvalResult result;
  result.total = data.size();
  result.predictions.assign(data.size(), 0);
  std::vector<double> losses(data.size(), 0.0);

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto logits = model_logits(model, data.seqs[i], label_ptr);
      result.predictions[i] = argmax<float>(logits);
      losses[i] = cross_entropy<float>(logits, data.targets[i]).loss;
    }
  };

  threads = std::max<std::size_t>(1, std::min(threads, data.size()));
  if (threads == 1) {
    work(0, data.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (data.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(data.size(), begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  double loss_sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    result.correct += result.predictions[i] == data.targets[i];
    loss_sum += losses[i];
  }
  result.mean_loss =
      data.size() == 0 ? 0.0 : loss_sum / static_cast<double>(data.size());
  return result;
}

TrainHistory train_model(const TrainConfig& config, Model<float>& model,
                         const EncodedSet& train_data,
                         const EncodedSet& eval_data, SplitMix64& rng,
                         const TrainOptions& options, std::uint64_t* steps) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  TrainHistory history;
  std::uint64_t step = steps != nullptr ? *steps : 0;
  auto params = model.parameters();
  model.zero_grad();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = shuffled_indices(train_data.size(), rng);
    double batch_loss_sum = 0.0;
    std::size_t num_batches = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + begin,
                                               end - begin);
      const auto outcome = accumulate_batch(model, batch, train_data.seqs,
                                            train_data.targets);
      batch_loss_sum += outcome.loss_sum / static_cast<double>(batch.size());
      ++num_batches;
      adam_step<float>(params, config.learning_rate, ++step);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss =
        num_batches == 0 ? 0.0 : batch_loss_sum / static_cast<double>(num_batches);
    record.train_acc = evaluate(model, train_data, options.eval_threads).accuracy();
    record.test_acc = evaluate(model, eval_data, options.eval_threads).accuracy();
    history.epochs.push_back(record);
    if (options.on_epoch) options.on_epoch(record);
  }

  if (steps != nullptr) *steps = step;
  history.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return history;
}

TrainResult train(const TrainConfig& config, const Dataset& train_set,
                  const Dataset& eval_set, const TrainOptions& options) {
  config.validate();
  std::vector<std::string> phrases;
  for (const auto& name : train_set.label_names) {
    phrases.push_back(verbalize_label(name, options.verbalizer));
  }
  TrainResult result;
  result.vocab = build_vocab(train_set, config.min_freq, phrases);
  auto labels = make_label_set(train_set.label_names, phrases, result.vocab,
                               config.max_len);
  const auto train_data = encode_dataset(train_set, train_set.label_names,
                                         result.vocab, config.max_len);
  const auto eval_data = encode_dataset(eval_set, train_set.label_names,
                                        result.vocab, config.max_len);

  SplitMix64 rng(config.seed);
  result.model =
      init_model(config, result.vocab.size(), std::move(labels), rng);
  result.history = train_model(config, result.model, train_data, eval_data,
                               rng, options, &result.steps);
  return result;
}

std::size_t threads_from_env() {
  const char* value = std::getenv("LABELMATCH_THREADS");
  if (value == nullptr || *value == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(value, &end, 10);
  if (end == value || *end != '\0' || n < 1) {
    throw ConfigError("LABELMATCH_THREADS must be a positive integer");
  }
  return static_cast<std::size_t>(n);
}

}  // namespace labelmatch
