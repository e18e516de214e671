#include "labelmatch/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "labelmatch/hash.hpp"

namespace labelmatch {

namespace {

using Kind = CheckpointError::Kind;

class Writer {
 public:
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) _out.push_back(static_cast<char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) _out.push_back(static_cast<char>(bits >> (8 * i)));
  }
  void str(const std::string& s) {
    u64(s.size());
    _out += s;
  }
  void raw(const char* data, std::size_t n) { _out.append(data, n); }
  std::string take() { return std::move(_out); }

 private:
  std::string _out;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : _in(in) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= std::uint64_t(static_cast<unsigned char>(_in[_pos + i])) << (8 * i);
    }
    _pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  float f32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= std::uint32_t(static_cast<unsigned char>(_in[_pos + i])) << (8 * i);
    }
    _pos += 4;
    return std::bit_cast<float>(v);
  }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s = _in.substr(_pos, n);
    _pos += n;
    return s;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = _in.substr(_pos, n);
    _pos += n;
    return s;
  }
  bool done() const { return _pos == _in.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > _in.size() - _pos) {
      throw CheckpointError(Kind::malformed, "checkpoint truncated");
    }
  }

  const std::string& _in;
  std::size_t _pos = 0;
};

// A model of the right shape for `config`, with zero values.
Model<float> shaped_model(const TrainConfig& config, std::size_t vocab_size,
                          LabelSet labels) {
  Model<float> model;
  model.encoder = EncoderParams<float>::zeros(vocab_size, config.max_len,
                                              config.dim, config.ffn_hidden());
  model.head = FusionHead<float>::zeros(config.fusion, labels.size(), config.dim);
  model.labels = std::move(labels);
  return model;
}

}  // namespace

std::string serialize_checkpoint(const TrainConfig& config,
                                 const Model<float>& model,
                                 const Vocabulary& vocab) {
  Writer w;
  w.raw(kCheckpointMagic, 5);
  w.u64(config.batch_size);
  w.u64(config.epochs);
  w.f64(config.learning_rate);
  w.u64(config.seed);
  w.str(std::string(to_string(config.fusion)));
  w.u64(config.dim);
  w.u64(config.max_len);
  w.u64(config.min_freq);
  w.u64(config.depth);
  w.u64(vocab.fingerprint());
  w.u64(vocab.size());
  w.u64(model.labels.size());
  for (std::size_t k = 0; k < model.labels.size(); ++k) {
    w.str(model.labels.names[k]);
    w.str(model.labels.phrases[k]);
  }
  const auto params = model.parameters();
  w.u64(params.size());
  for (const auto* p : params) {
    w.str(p->name);
    w.u64(p->rows());
    w.u64(p->cols());
  }
  for (const auto* p : params) {
    for (const float v : p->value.data) w.f32(v);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes,
                                  const Vocabulary& vocab) {
  Reader r(bytes);
  if (bytes.size() < 5 || std::memcmp(bytes.data(), kCheckpointMagic, 5) != 0) {
    throw CheckpointError(Kind::bad_magic, "bad magic: not a checkpoint file");
  }
  r.raw(5);

  Checkpoint ck;
  auto& cfg = ck.config;
  cfg.batch_size = r.u64();
  cfg.epochs = r.u64();
  cfg.learning_rate = r.f64();
  cfg.seed = r.u64();
  try {
    cfg.fusion = parse_fusion_mode(r.str());
  } catch (const ConfigError& e) {
    throw CheckpointError(Kind::malformed, e.what());
  }
  cfg.dim = r.u64();
  cfg.max_len = r.u64();
  cfg.min_freq = r.u64();
  cfg.depth = r.u64();
  ck.vocab_fingerprint = r.u64();
  ck.vocab_size = r.u64();

  const auto num_labels = r.u64();
  std::vector<std::string> names, phrases;
  for (std::uint64_t k = 0; k < num_labels; ++k) {
    names.push_back(r.str());
    phrases.push_back(r.str());
  }

  if (ck.vocab_fingerprint != vocab.fingerprint() ||
      ck.vocab_size != vocab.size()) {
    throw CheckpointError(
        Kind::fingerprint_mismatch,
        "vocabulary fingerprint mismatch: checkpoint has " +
            std::to_string(ck.vocab_size) + " tokens (" +
            to_hex(ck.vocab_fingerprint) + "), supplied vocabulary has " +
            std::to_string(vocab.size()) + " (" + to_hex(vocab.fingerprint()) +
            ")");
  }

  try {
    cfg.validate();
    ck.model = shaped_model(cfg, ck.vocab_size,
                            make_label_set(names, phrases, vocab, cfg.max_len));
  } catch (const Error& e) {
    throw CheckpointError(Kind::malformed, std::string("checkpoint header: ") +
                                               e.what());
  }

  auto params = ck.model.parameters();
  const auto num_params = r.u64();
  if (num_params != params.size()) {
    throw CheckpointError(Kind::shape_mismatch,
                          "shape mismatch: expected " +
                              std::to_string(params.size()) +
                              " parameters, checkpoint lists " +
                              std::to_string(num_params));
  }
  for (auto* p : params) {
    const auto name = r.str();
    const auto rows = r.u64();
    const auto cols = r.u64();
    if (name != p->name || rows != p->rows() || cols != p->cols()) {
      throw CheckpointError(
          Kind::shape_mismatch,
          "shape mismatch: checkpoint parameter '" + name + "' [" +
              std::to_string(rows) + "x" + std::to_string(cols) +
              "] does not match expected '" + p->name + "' [" +
              std::to_string(p->rows()) + "x" + std::to_string(p->cols()) + "]");
    }
  }
  for (auto* p : params) {
    for (auto& v : p->value.data) v = r.f32();
  }
  if (!r.done()) {
    throw CheckpointError(Kind::malformed, "trailing bytes after parameters");
  }
  return ck;
}

void save_checkpoint(const std::string& path, const TrainConfig& config,
                     const Model<float>& model, const Vocabulary& vocab) {
  const auto bytes = serialize_checkpoint(config, model, vocab);
  std::ofstream out(path, std::ios::binary);
  if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw CheckpointError(Kind::io, "cannot write checkpoint '" + path + "'");
  }
}

Checkpoint load_checkpoint(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointError(Kind::io, "cannot open checkpoint '" + path + "'");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize_checkpoint(buffer.str(), vocab);
}

}  // namespace labelmatch
