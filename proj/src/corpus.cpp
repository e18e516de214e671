#include "labelmatch/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "labelmatch/errors.hpp"
#include "labelmatch/hash.hpp"

namespace labelmatch {

namespace {

bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

// Decodes one UTF-8 sequence at `pos`. An invalid byte decodes as U+FFFD
// with length 1 and is kept verbatim in the token.
char32_t decode_utf8(std::string_view s, std::size_t pos, std::size_t& len) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  auto cont = [&](std::size_t k) -> int {
    if (pos + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[pos + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    len = 1;
    return b0;
  }
  if ((b0 & 0xE0) == 0xC0) {
    const int c1 = cont(1);
    if (c1 >= 0) {
      len = 2;
      return (char32_t(b0 & 0x1F) << 6) | char32_t(c1);
    }
  } else if ((b0 & 0xF0) == 0xE0) {
    const int c1 = cont(1), c2 = cont(2);
    if (c1 >= 0 && c2 >= 0) {
      len = 3;
      return (char32_t(b0 & 0x0F) << 12) | (char32_t(c1) << 6) | char32_t(c2);
    }
  } else if ((b0 & 0xF8) == 0xF0) {
    const int c1 = cont(1), c2 = cont(2), c3 = cont(3);
    if (c1 >= 0 && c2 >= 0 && c3 >= 0) {
      len = 4;
      return (char32_t(b0 & 0x07) << 18) | (char32_t(c1) << 12) |
             (char32_t(c2) << 6) | char32_t(c3);
    }
  }
  len = 1;
  return 0xFFFD;
}

std::string_view trim_ascii(std::string_view s) {
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' ||
           c == '\f';
  };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open '" + path + "'");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

[[noreturn]] void malformed(const std::string& source, std::size_t line_no,
                            const std::string& what) {
  throw DataError(source + ":" + std::to_string(line_no) + ": malformed line (" +
                  what + ")");
}

Example parse_tsv_line(std::string_view line, const std::string& source,
                       std::size_t line_no) {
  const auto tab = line.find('\t');
  if (tab == std::string_view::npos) {
    malformed(source, line_no, "no tab separator");
  }
  const auto label = trim_ascii(line.substr(0, tab));
  const auto text = line.substr(tab + 1);
  if (label.empty()) {
    malformed(source, line_no, "empty label");
  }
  if (split_tokens(text).empty()) {
    malformed(source, line_no, "empty text");
  }
  return {std::string(label), std::string(trim_ascii(text))};
}

Example parse_space_line(std::string_view line, const std::string& source,
                         std::size_t line_no) {
  line = trim_ascii(line);
  const auto space = line.find_first_of(" \t");
  if (space == std::string_view::npos) {
    malformed(source, line_no, "no text after label");
  }
  auto label = line.substr(0, space);
  if (const auto colon = label.find(':'); colon != std::string_view::npos) {
    label = label.substr(0, colon);
  }
  const auto text = trim_ascii(line.substr(space + 1));
  if (label.empty()) {
    malformed(source, line_no, "empty label");
  }
  if (split_tokens(text).empty()) {
    malformed(source, line_no, "empty text");
  }
  return {std::string(label), std::string(text)};
}

}  // namespace

std::optional<std::size_t> Dataset::label_index(std::string_view label) const {
  const auto it = std::lower_bound(label_names.begin(), label_names.end(), label);
  if (it == label_names.end() || *it != label) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(it - label_names.begin());
}

Dataset make_dataset(std::vector<Example> examples, Split split) {
  if (examples.empty()) {
    throw DataError("empty dataset");
  }
  std::set<std::string> labels;
  for (const auto& ex : examples) {
    if (ex.label_name.empty()) {
      throw DataError("example with empty label name");
    }
    if (split_tokens(ex.text).empty()) {
      throw DataError("example with empty text (label '" + ex.label_name + "')");
    }
    labels.insert(ex.label_name);
  }
  Dataset ds;
  ds.examples = std::move(examples);
  ds.label_names.assign(labels.begin(), labels.end());
  ds.split = split;
  return ds;
}

Dataset parse_dataset(std::string_view content, const std::string& source,
                      Split split, DatasetFormat format) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < content.size()) {
    auto end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    auto line = content.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  if (lines.empty()) {
    throw DataError(source + ": empty dataset");
  }
  if (format == DatasetFormat::detect) {
    format = lines.front().find('\t') != std::string_view::npos
                 ? DatasetFormat::tsv
                 : DatasetFormat::space;
  }

  std::vector<Example> examples;
  examples.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim_ascii(lines[i]).empty()) {
      malformed(source, i + 1, "blank line");
    }
    examples.push_back(format == DatasetFormat::tsv
                           ? parse_tsv_line(lines[i], source, i + 1)
                           : parse_space_line(lines[i], source, i + 1));
  }
  return make_dataset(std::move(examples), split);
}

Dataset load_dataset(const std::string& path, Split split,
                     DatasetFormat format) {
  return parse_dataset(read_file(path), path, split, format);
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write '" + path + "'");
  }
  for (const auto& ex : dataset.examples) {
    out << ex.label_name << '\t' << ex.text << '\n';
  }
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t len = 1;
    const char32_t cp = decode_utf8(text, pos, len);
    if (is_unicode_space(cp)) {
      if (!current.empty()) {
        tokens.push_back(std::move(current));
        current.clear();
      }
    } else if (len == 1) {
      char c = text[pos];
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      current.push_back(c);
    } else {
      current.append(text.substr(pos, len));
    }
    pos += len;
  }
  if (!current.empty()) {
    tokens.push_back(std::move(current));
  }
  return tokens;
}

Vocabulary::Vocabulary()
    : Vocabulary(std::vector<std::string>{std::string(kPadToken),
                                          std::string(kUnkToken)}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens)
    : _tokens(std::move(tokens)) {
  if (_tokens.size() < 2 || _tokens[kPadId] != kPadToken ||
      _tokens[kUnkId] != kUnkToken) {
    throw DataError("vocabulary must start with " + std::string(kPadToken) +
                    " and " + std::string(kUnkToken));
  }
  _id_of.reserve(_tokens.size());
  for (std::size_t i = 0; i < _tokens.size(); ++i) {
    if (!_id_of.emplace(_tokens[i], static_cast<std::uint32_t>(i)).second) {
      throw DataError("duplicate vocabulary token '" + _tokens[i] + "'");
    }
  }
}

std::uint32_t Vocabulary::id(std::string_view token) const {
  const auto it = _id_of.find(std::string(token));
  return it == _id_of.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(std::uint32_t id) const {
  if (id >= _tokens.size()) {
    throw DataError("token id " + std::to_string(id) + " out of range");
  }
  return _tokens[id];
}

bool Vocabulary::contains(std::string_view token) const {
  return _id_of.contains(std::string(token));
}

std::uint64_t Vocabulary::fingerprint() const {
  Fnv1a64 h;
  for (const auto& t : _tokens) {
    h.update(t);
    h.update("\n");
  }
  return h.digest();
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write '" + path + "'");
  }
  for (const auto& t : _tokens) {
    out << t << '\n';
  }
}

Vocabulary Vocabulary::load(const std::string& path) {
  const std::string content = read_file(path);
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start < content.size()) {
    auto end = content.find('\n', start);
    if (end == std::string::npos) end = content.size();
    tokens.emplace_back(content.substr(start, end - start));
    start = end + 1;
  }
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocab(const std::vector<std::string>& texts,
                       std::size_t min_freq) {
  if (min_freq < 1) {
    throw ConfigError("min_freq must be >= 1");
  }
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& text : texts) {
    for (auto& tok : split_tokens(text)) {
      ++counts[std::move(tok)];
    }
  }
  counts.erase(std::string(Vocabulary::kPadToken));
  counts.erase(std::string(Vocabulary::kUnkToken));

  std::vector<std::pair<std::string, std::size_t>> entries;
  for (auto& [tok, n] : counts) {
    if (n >= min_freq) entries.emplace_back(tok, n);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> tokens{std::string(Vocabulary::kPadToken),
                                  std::string(Vocabulary::kUnkToken)};
  tokens.reserve(entries.size() + 2);
  for (auto& e : entries) tokens.push_back(std::move(e.first));
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocab(const Dataset& dataset, std::size_t min_freq,
                       const std::vector<std::string>& extra_texts) {
  if (dataset.examples.empty()) {
    throw DataError("empty dataset");
  }
  std::vector<std::string> texts;
  texts.reserve(dataset.size() + extra_texts.size());
  for (const auto& ex : dataset.examples) texts.push_back(ex.text);
  texts.insert(texts.end(), extra_texts.begin(), extra_texts.end());
  return build_vocab(texts, min_freq);
}

TokenSeq tokenize(std::string_view text, const Vocabulary& vocab,
                  std::size_t max_len) {
  if (max_len < 1) {
    throw ConfigError("max_len must be >= 1");
  }
  const auto tokens = split_tokens(text);
  if (tokens.empty()) {
    throw DataError("cannot tokenize empty text");
  }
  TokenSeq seq;
  seq.true_len = std::min(tokens.size(), max_len);
  seq.ids.assign(max_len, Vocabulary::kPadId);
  seq.mask.assign(max_len, 0);
  for (std::size_t i = 0; i < seq.true_len; ++i) {
    seq.ids[i] = vocab.id(tokens[i]);
    seq.mask[i] = 1;
  }
  return seq;
}

TokenSeq make_token_seq(std::vector<std::uint32_t> ids) {
  TokenSeq seq;
  seq.true_len = ids.size();
  seq.mask.assign(ids.size(), 1);
  seq.ids = std::move(ids);
  return seq;
}

Verbalizer load_verbalizer(const std::string& path) {
  const std::string content = read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(content);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + ": invalid verbalizer: " + e.what());
  }
  if (!doc.is_object()) {
    throw DataError(path + ": verbalizer must be a JSON object");
  }
  Verbalizer map;
  for (const auto& [key, value] : doc.items()) {
    if (!value.is_string()) {
      throw DataError(path + ": verbalizer value for '" + key +
                      "' is not a string");
    }
    map.emplace(key, value.get<std::string>());
  }
  return map;
}

std::string verbalize_label(std::string_view label_name,
                            const Verbalizer* verbalizer) {
  if (label_name.empty()) {
    throw DataError("empty label name");
  }
  if (verbalizer != nullptr) {
    if (const auto it = verbalizer->find(std::string(label_name));
        it != verbalizer->end()) {
      if (split_tokens(it->second).empty()) {
        throw DataError("verbalizer maps '" + std::string(label_name) +
                        "' to an empty phrase");
      }
      return it->second;
    }
  }
  std::string phrase(label_name);
  for (char& c : phrase) {
    if (c == '_') {
      c = ' ';
    } else if (c >= 'A' && c <= 'Z') {
      c = static_cast<char>(c - 'A' + 'a');
    }
  }
  return phrase;
}

DatasetStats dataset_stats(const Dataset& dataset) {
  if (dataset.examples.empty()) {
    throw DataError("empty dataset");
  }
  std::size_t total_tokens = 0;
  for (const auto& ex : dataset.examples) {
    total_tokens += split_tokens(ex.text).size();
  }
  return {dataset.label_names.size(), dataset.size(),
          static_cast<double>(total_tokens) /
              static_cast<double>(dataset.size())};
}

std::string format_stats(const DatasetStats& stats) {
  char avg[32];
  std::snprintf(avg, sizeof(avg), "%.2f", stats.avg_token_len);
  return std::to_string(stats.num_classes) + " classes, " +
         std::to_string(stats.num_examples) + " examples, avg " + avg;
}

}  // namespace labelmatch
