#include "labelmatch/encoder.hpp"

#include "labelmatch/errors.hpp"

namespace labelmatch {

LabelSet make_label_set(const std::vector<std::string>& names,
                        const std::vector<std::string>& phrases,
                        const Vocabulary& vocab, std::size_t max_len) {
  if (names.size() < 2) {
    throw DataError("need at least two labels, got " +
                    std::to_string(names.size()));
  }
  if (phrases.size() != names.size()) {
    throw DataError("label phrase count does not match label count");
  }
  LabelSet set;
  set.names = names;
  set.phrases = phrases;
  set.seqs.reserve(names.size());
  for (const auto& phrase : phrases) {
    set.seqs.push_back(tokenize(phrase, vocab, max_len));
  }
  return set;
}

LabelSet make_label_set(const std::vector<std::string>& names,
                        const Vocabulary& vocab, std::size_t max_len,
                        const Verbalizer* verbalizer) {
  std::vector<std::string> phrases;
  phrases.reserve(names.size());
  for (const auto& name : names) {
    phrases.push_back(verbalize_label(name, verbalizer));
  }
  return make_label_set(names, phrases, vocab, max_len);
}

}  // namespace labelmatch
