#pragma once

// Shared helpers for the test binaries.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "labelmatch/checkpoint.hpp"
#include "labelmatch/corpus.hpp"
#include "labelmatch/model.hpp"
#include "labelmatch/rng.hpp"
#include "labelmatch/trainer.hpp"

namespace lmtest {

namespace lm = labelmatch;

// Path under tests/data.
std::string data_path(const std::string& relative);

// Fresh, empty directory under the system temp directory.
std::filesystem::path scratch_dir(const std::string& tag);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

lm::Dataset mini_train();
lm::Dataset mini_test();

// Small config that trains on the fixture in well under a second per epoch.
lm::TrainConfig small_config(lm::FusionMode fusion, std::uint64_t seed = 0);

std::vector<double> random_vector(std::size_t n, lm::SplitMix64& rng,
                                  double lo = -1.0, double hi = 1.0);

// A sequence of `len` random non-pad ids below `vocab`, padded to max_len.
lm::TokenSeq random_seq(std::size_t len, std::size_t max_len,
                        std::size_t vocab, lm::SplitMix64& rng);

// Randomly initialized model over a synthetic vocabulary.
lm::Model<float> random_model(lm::FusionMode fusion, std::size_t vocab,
                              std::size_t dim, std::size_t max_len,
                              std::size_t num_labels, std::uint64_t seed);

// Bitwise equality of every parameter value.
bool same_bits(const lm::Model<float>& a, const lm::Model<float>& b);

template <class T>
bool same_bits(const std::vector<T>& a, const std::vector<T>& b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](T x, T y) {
           return std::memcmp(&x, &y, sizeof(T)) == 0;
         });
}

// Runs a shell command, returning its exit status (-1 if it did not exit).
int run_command(const std::string& command);

}  // namespace lmtest
