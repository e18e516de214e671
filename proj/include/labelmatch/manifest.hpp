#pragma once

#include <optional>
#include <string>

#include "labelmatch/trainer.hpp"

namespace labelmatch {

struct FileRef {
  std::string path;
  std::string hash;  // hex FNV-1a of the file content

  static FileRef of(const std::string& path);
};

// Provenance of one training run, written next to the checkpoint as JSON.
struct RunManifest {
  TrainConfig config;
  FileRef train;
  FileRef test;
  std::optional<FileRef> verbalizer;
  FileRef checkpoint;
  std::string vocab_path;
  std::string history_path;
  std::string started_at;   // ISO-8601 UTC
  std::string finished_at;  // ISO-8601 UTC
};

std::string utc_timestamp();

void save_manifest(const RunManifest& manifest, const std::string& path);

// Reads a manifest and recomputes the hash of every referenced file; throws
// DataError on a mismatch or an unreadable file.
RunManifest load_manifest(const std::string& path);

}  // namespace labelmatch
