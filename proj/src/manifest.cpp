#include "labelmatch/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "labelmatch/errors.hpp"
#include "labelmatch/hash.hpp"

namespace labelmatch {

using nlohmann::json;

namespace {

json to_json(const FileRef& ref) { return {{"path", ref.path}, {"hash", ref.hash}}; }

FileRef file_ref_from(const json& j) {
  return {j.at("path").get<std::string>(), j.at("hash").get<std::string>()};
}

void verify(const FileRef& ref, const std::string& manifest_path) {
  const auto actual = to_hex(hash_file(ref.path));
  if (actual != ref.hash) {
    throw DataError(manifest_path + ": content hash of '" + ref.path +
                    "' changed (manifest " + ref.hash + ", now " + actual + ")");
  }
}

}  // namespace

FileRef FileRef::of(const std::string& path) {
  return {path, to_hex(hash_file(path))};
}

std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void save_manifest(const RunManifest& m, const std::string& path) {
  const auto& c = m.config;
  json doc = {
      {"config",
       {{"batch_size", c.batch_size},
        {"epochs", c.epochs},
        {"learning_rate", c.learning_rate},
        {"seed", c.seed},
        {"fusion", std::string(to_string(c.fusion))},
        {"dim", c.dim},
        {"max_len", c.max_len},
        {"min_freq", c.min_freq},
        {"depth", c.depth}}},
      {"train", to_json(m.train)},
      {"test", to_json(m.test)},
      {"checkpoint", to_json(m.checkpoint)},
      {"vocab", m.vocab_path},
      {"history", m.history_path},
      {"started_at", m.started_at},
      {"finished_at", m.finished_at},
  };
  if (m.verbalizer) doc["verbalizer"] = to_json(*m.verbalizer);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << doc.dump(2) << "\n";
}

RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  RunManifest m;
  try {
    const json doc = json::parse(in);
    const auto& c = doc.at("config");
    m.config.batch_size = c.at("batch_size").get<std::size_t>();
    m.config.epochs = c.at("epochs").get<std::size_t>();
    m.config.learning_rate = c.at("learning_rate").get<double>();
    m.config.seed = c.at("seed").get<std::uint64_t>();
    m.config.fusion = parse_fusion_mode(c.at("fusion").get<std::string>());
    m.config.dim = c.at("dim").get<std::size_t>();
    m.config.max_len = c.at("max_len").get<std::size_t>();
    m.config.min_freq = c.at("min_freq").get<std::size_t>();
    m.config.depth = c.at("depth").get<std::size_t>();
    m.train = file_ref_from(doc.at("train"));
    m.test = file_ref_from(doc.at("test"));
    m.checkpoint = file_ref_from(doc.at("checkpoint"));
    if (doc.contains("verbalizer")) m.verbalizer = file_ref_from(doc["verbalizer"]);
    m.vocab_path = doc.at("vocab").get<std::string>();
    m.history_path = doc.at("history").get<std::string>();
    m.started_at = doc.at("started_at").get<std::string>();
    m.finished_at = doc.at("finished_at").get<std::string>();
  } catch (const json::exception& e) {
    throw DataError(path + ": malformed manifest: " + e.what());
  }
  verify(m.train, path);
  verify(m.test, path);
  verify(m.checkpoint, path);
  if (m.verbalizer) verify(*m.verbalizer, path);
  return m;
}

}  // namespace labelmatch
