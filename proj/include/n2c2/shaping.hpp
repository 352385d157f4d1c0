#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "n2c2/datastore.hpp"
#include "n2c2/matrix.hpp"
#include "n2c2/rng.hpp"

namespace n2c2 {

// Affine projection h' = W^T h + b from H to Z dimensions. Keys and queries
// share one layer.
class ShapingLayer {
 public:
  ShapingLayer() = default;
  ShapingLayer(Matrix weight, std::vector<double> bias);

  // Xavier-uniform W in +-sqrt(6 / (H + Z)), zero bias.
  static ShapingLayer xavier(std::size_t input_dim, std::size_t output_dim, Rng& rng);

  std::size_t input_dim() const noexcept { return weight_.rows(); }
  std::size_t output_dim() const noexcept { return weight_.cols(); }

  const Matrix& weight() const noexcept { return weight_; }
  const std::vector<double>& bias() const noexcept { return bias_; }
  Matrix& weight() noexcept { return weight_; }
  std::vector<double>& bias() noexcept { return bias_; }

  std::vector<double> apply(std::span<const double> h) const;

  friend bool operator==(const ShapingLayer&, const ShapingLayer&) = default;

 private:
  Matrix weight_;  // H x Z
  std::vector<double> bias_;
};

struct LabeledQuery {
  std::vector<double> embedding;
  std::size_t label = 0;
};

struct ShapingLossResult {
  double loss = 0.0;
  Matrix grad_weight;
  std::vector<double> grad_bias;
  std::size_t floored = 0;  // queries whose gold probability hit the floor
};

inline constexpr double kProbabilityFloor = 1e-12;

// Mean cross-entropy of the kNN distribution over `queries`, retrieving the
// top-k from `raw_store` after shaping both queries and keys with `layer`.
// Gradients flow through both sides; the neighbor set is held fixed at the
// current parameters.
ShapingLossResult shaping_loss(const ShapingLayer& layer, std::span<const LabeledQuery> queries,
                               const Datastore& raw_store, double tau, std::size_t k);

// Shaped copy of an unshaped store.
Datastore shape_datastore(const Datastore& raw_store, const ShapingLayer& layer);

}  // namespace n2c2
