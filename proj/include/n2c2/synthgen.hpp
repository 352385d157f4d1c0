#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "n2c2/datastore.hpp"

namespace n2c2 {

// Seeded stand-in for a frozen multilingual LM: class centroids, one additive
// offset per language (none for the first, source, language), Gaussian
// noise, and a base predictor that scores noisy distances to the centroids.
struct SynthConfig {
  std::size_t dim = 32;
  std::size_t num_classes = 4;
  std::size_t shots = 16;            // train records per class
  std::size_t dev_per_class = 16;
  std::size_t test_per_class = 100;  // per target language
  std::vector<std::string> languages{"en", "de", "fr", "ja"};
  double noise_sigma = 2.0;       // per-dimension embedding noise
  double shift_sigma = 1.0;       // per-dimension language offset scale
  double miscalib_temp = 2.0;     // multiplies base-model logits
  double base_noise_sigma = 5.0;  // noise on the base model's centroid distances
  std::size_t views_per_record = 1;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthData {
  Dataset train;
  Dataset dev;
  std::vector<std::pair<std::string, Dataset>> tests;  // language -> test set
};

SynthData generate(const SynthConfig& cfg);

// Writes train.jsonl, dev.jsonl and test_<lang>.jsonl into `out_dir`;
// returns the written paths.
std::vector<std::filesystem::path> write_synth(const SynthData& data,
                                               const std::filesystem::path& out_dir);

}  // namespace n2c2
