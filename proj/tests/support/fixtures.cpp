#include "fixtures.hpp"

#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <cstdlib>

namespace lmtest {

std::string data_path(const std::string& relative) {
  return std::string(LABELMATCH_TEST_DATA) + "/" + relative;
}

std::filesystem::path scratch_dir(const std::string& tag) {
  static std::uint64_t counter = 0;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("labelmatch_test_" + tag + "_" +
                    std::to_string(static_cast<long long>(::getpid())) + "_" +
                    std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

lm::Dataset mini_train() {
  return lm::load_dataset(data_path("mini_trec/train.tsv"), lm::Split::train);
}

lm::Dataset mini_test() {
  return lm::load_dataset(data_path("mini_trec/test.tsv"), lm::Split::test);
}

lm::TrainConfig small_config(lm::FusionMode fusion, std::uint64_t seed) {
  lm::TrainConfig config;
  config.fusion = fusion;
  config.seed = seed;
  config.dim = 16;
  config.max_len = 16;
  config.epochs = 3;
  config.batch_size = 32;
  config.learning_rate = 1e-2;
  return config;
}

std::vector<double> random_vector(std::size_t n, lm::SplitMix64& rng,
                                  double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

lm::TokenSeq random_seq(std::size_t len, std::size_t max_len,
                        std::size_t vocab, lm::SplitMix64& rng) {
  lm::TokenSeq seq;
  seq.ids.assign(max_len, lm::Vocabulary::kPadId);
  seq.mask.assign(max_len, 0);
  seq.true_len = len;
  for (std::size_t i = 0; i < len; ++i) {
    seq.ids[i] = static_cast<std::uint32_t>(2 + rng.below(vocab - 2));
    seq.mask[i] = 1;
  }
  return seq;
}

lm::Model<float> random_model(lm::FusionMode fusion, std::size_t vocab,
                              std::size_t dim, std::size_t max_len,
                              std::size_t num_labels, std::uint64_t seed) {
  std::vector<std::string> tokens{std::string(lm::Vocabulary::kPadToken),
                                  std::string(lm::Vocabulary::kUnkToken)};
  for (std::size_t i = 2; i < vocab; ++i) tokens.push_back("w" + std::to_string(i));
  const lm::Vocabulary v(tokens);
  std::vector<std::string> names, phrases;
  for (std::size_t k = 0; k < num_labels; ++k) {
    names.push_back("L" + std::to_string(k));
    phrases.push_back("w" + std::to_string(2 + k % (vocab - 2)) + " w" +
                      std::to_string(2 + (3 * k + 1) % (vocab - 2)));
  }
  lm::TrainConfig config;
  config.fusion = fusion;
  config.dim = dim;
  config.max_len = max_len;
  lm::SplitMix64 rng(seed);
  return lm::init_model(config, vocab, lm::make_label_set(names, phrases, v, max_len),
                        rng);
}

bool same_bits(const lm::Model<float>& a, const lm::Model<float>& b) {
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->name != pb[i]->name || pa[i]->rows() != pb[i]->rows() ||
        pa[i]->cols() != pb[i]->cols() ||
        !same_bits(pa[i]->value.data, pb[i]->value.data)) {
      return false;
    }
  }
  return true;
}

int run_command(const std::string& command) {
  const int status = std::system(command.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

}  // namespace lmtest
