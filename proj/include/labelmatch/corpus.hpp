#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace labelmatch {

struct Example {
  std::string label_name;
  std::string text;

  bool operator==(const Example&) const = default;
};

enum class Split { train, test };

struct Dataset {
  std::vector<Example> examples;
  // Sorted, unique.
  std::vector<std::string> label_names;
  Split split = Split::train;

  std::size_t size() const { return examples.size(); }
  // Index of `label` in label_names, or nullopt.
  std::optional<std::size_t> label_index(std::string_view label) const;

  bool operator==(const Dataset&) const = default;
};

enum class DatasetFormat {
  // Detect from the first line: a tab means TSV, otherwise label-space-text.
  detect,
  // label<TAB>text
  tsv,
  // label text... as in the TREC question-classification distribution. A
  // label of the form COARSE:fine is reduced to COARSE.
  space,
};

// Reads a dataset file. Errors (DataError) name the file and, for malformed
// lines, the 1-based line number.
Dataset load_dataset(const std::string& path, Split split = Split::train,
                     DatasetFormat format = DatasetFormat::detect);

// Parses dataset content already in memory; `source` is used in messages.
Dataset parse_dataset(std::string_view content, const std::string& source,
                      Split split = Split::train,
                      DatasetFormat format = DatasetFormat::detect);

// Writes canonical TSV: one `label<TAB>text` line per example, LF endings.
void save_dataset(const Dataset& dataset, const std::string& path);

// Builds a Dataset from examples, deriving sorted label_names and validating
// every example.
Dataset make_dataset(std::vector<Example> examples, Split split = Split::train);

// Lowercases ASCII letters and splits on Unicode whitespace.
std::vector<std::string> split_tokens(std::string_view text);

class Vocabulary {
 public:
  static constexpr std::uint32_t kPadId = 0;
  static constexpr std::uint32_t kUnkId = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();
  // `tokens` must start with the pad and unk tokens and be free of
  // duplicates.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::uint32_t id(std::string_view token) const;
  const std::string& token(std::uint32_t id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return _tokens.size(); }
  const std::vector<std::string>& tokens() const { return _tokens; }

  // FNV-1a over the ordered token list, each token followed by '\n'.
  std::uint64_t fingerprint() const;

  // One token per line.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  bool operator==(const Vocabulary& other) const {
    return _tokens == other._tokens;
  }

 private:
  std::vector<std::string> _tokens;
  std::unordered_map<std::string, std::uint32_t> _id_of;
};

// Vocabulary over all lowercased whitespace tokens of `texts` with frequency
// >= min_freq, ordered by descending frequency then bytewise token order.
Vocabulary build_vocab(const std::vector<std::string>& texts,
                       std::size_t min_freq = 1);

// Vocabulary over the dataset's texts plus `extra_texts` (the verbalized
// label phrases during training).
Vocabulary build_vocab(const Dataset& dataset, std::size_t min_freq = 1,
                       const std::vector<std::string>& extra_texts = {});

struct TokenSeq {
  std::vector<std::uint32_t> ids;
  std::vector<std::uint8_t> mask;
  std::size_t true_len = 0;

  std::size_t max_len() const { return ids.size(); }
  bool operator==(const TokenSeq&) const = default;
};

TokenSeq tokenize(std::string_view text, const Vocabulary& vocab,
                  std::size_t max_len);

// A sequence of `ids` with every position valid.
TokenSeq make_token_seq(std::vector<std::uint32_t> ids);

using Verbalizer = std::map<std::string, std::string>;

// Reads a flat JSON object of label -> phrase.
Verbalizer load_verbalizer(const std::string& path);

std::string verbalize_label(std::string_view label_name,
                            const Verbalizer* verbalizer = nullptr);

struct DatasetStats {
  std::size_t num_classes = 0;
  std::size_t num_examples = 0;
  double avg_token_len = 0.0;
};

DatasetStats dataset_stats(const Dataset& dataset);

// "6 classes, 5452 examples, avg 8.89"
std::string format_stats(const DatasetStats& stats);

}  // namespace labelmatch
