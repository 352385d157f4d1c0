#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "n2c2/confidence.hpp"
#include "n2c2/matrix.hpp"
#include "n2c2/shaping.hpp"

namespace n2c2 {

inline constexpr int kModelFormatVersion = 1;

// Weights over candidate retrieval sizes R_s:
//   p(M | x) = softmax(layer2 tanh(layer1 [d; o] + bias1) + bias2)
struct DweNetwork {
  Matrix layer1;  // hidden x 2*k_max
  std::vector<double> bias1;
  Matrix layer2;  // |R_s| x hidden
  std::vector<double> bias2;

  static DweNetwork zeros(std::size_t k_max, std::size_t num_candidates,
                          std::size_t hidden = kHiddenSize);
  // Xavier-uniform layer1, zero layer2 and biases: uniform initial weights.
  static DweNetwork initialize(std::size_t k_max, std::size_t num_candidates, Rng& rng,
                               std::size_t hidden = kHiddenSize);

  std::size_t k_max() const noexcept { return layer1.cols() / 2; }
  std::size_t hidden() const noexcept { return layer1.rows(); }
  std::size_t num_candidates() const noexcept { return layer2.rows(); }
  void validate() const;

  friend bool operator==(const DweNetwork&, const DweNetwork&) = default;
};

struct Hyperparameters {
  double tau = 5.0;
  std::size_t k_max = 16;
  std::vector<std::size_t> candidate_sizes;  // R_s, starts with 0
  std::size_t input_dim = 0;                 // H
  std::size_t shaped_dim = 0;                // Z, 0 when retrieval uses raw embeddings
  std::vector<std::string> classes;
  std::uint64_t seed = 1;
  std::size_t hidden = kHiddenSize;
  double distance_scale = 1.0;  // divides distances fed to T and the DWE

  friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

struct N2C2Model {
  Hyperparameters hyper;
  std::optional<ShapingLayer> shaping;  // absent: retrieve with raw embeddings
  ConfidenceModule confidence;
  DweNetwork dwe;
  std::vector<std::string> retrieval_ids;  // train ids that form the datastore

  std::size_t num_classes() const noexcept { return hyper.classes.size(); }
  // Throws DimInconsistency when the pieces disagree.
  void validate() const;

  friend bool operator==(const N2C2Model&, const N2C2Model&) = default;
};

// R_s = {0, 4, 8, ..., k_max}, dropping sizes beyond the datastore.
std::vector<std::size_t> candidate_sizes(std::size_t k_max, std::size_t store_size);

void save_model(const N2C2Model& model, const std::filesystem::path& path);
N2C2Model load_model(const std::filesystem::path& path);
std::string model_to_json(const N2C2Model& model);
N2C2Model model_from_json(const std::string& text);

}  // namespace n2c2
