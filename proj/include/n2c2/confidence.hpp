#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "n2c2/core.hpp"
#include "n2c2/matrix.hpp"
#include "n2c2/retrieval.hpp"
#include "n2c2/rng.hpp"

namespace n2c2 {

inline constexpr std::size_t kHiddenSize = 32;
inline constexpr double kTemperatureFloor = 0.1;

// Per-query temperature T and per-neighbor bias C that reshape the kNN
// distribution:
//   T = softplus(W1 tanh(W2 [d_1..d_K; o_1..o_K])) + 0.1
//   C_i = W3 tanh(W4 [p(y_i | query); p(y_i | x_i)])
// No bias vectors.
struct ConfidenceModule {
  Matrix w1;  // 1 x hidden
  Matrix w2;  // hidden x 2*k_max
  Matrix w3;  // 1 x hidden
  Matrix w4;  // hidden x 2

  static ConfidenceModule zeros(std::size_t k_max, std::size_t hidden = kHiddenSize);
  // Xavier-uniform W2 and W4, zero W1 and W3: starts as the plain kNN vote at
  // temperature tau * (softplus(0) + 0.1).
  static ConfidenceModule initialize(std::size_t k_max, Rng& rng, std::size_t hidden = kHiddenSize);

  std::size_t k_max() const noexcept { return w2.cols() / 2; }
  std::size_t hidden() const noexcept { return w2.rows(); }
  void validate() const;

  friend bool operator==(const ConfidenceModule&, const ConfidenceModule&) = default;
};

struct NeighborFeatures {
  std::vector<double> distance;       // d_i
  std::vector<double> distinct;       // o_i: distinct labels among the top i
  std::vector<double> p_query_label;  // base model probability of y_i on the query
  std::vector<double> self_prob;      // base model probability of y_i on neighbor i

  std::size_t size() const noexcept { return distance.size(); }
};

NeighborFeatures neighbor_features(const NeighborSet& ns, std::size_t m,
                                   const Distribution& p_base_query);

// [d_1..d_m, d_m, ..., o_1..o_m, o_m, ...] of width 2*k_max. Slots past m
// repeat the last observed value. Distances are divided by `distance_scale`.
std::vector<double> padded_features(const NeighborFeatures& f, std::size_t m, std::size_t k_max,
                                    double distance_scale = 1.0);

double softplus(double x);
double sigmoid(double x);

// Pre-positivity output W1 tanh(W2 x).
double temperature_raw(std::span<const double> padded, const ConfidenceModule& module);
double temperature_T(const NeighborFeatures& f, std::size_t m, const ConfidenceModule& module,
                     double distance_scale = 1.0);

double bias_C(double p_query_label, double self_prob, const ConfidenceModule& module);

// p(y) proportional to sum over the top-m neighbors labelled y of
// exp(-d_i / (tau * T) + C_i).
Distribution cd_distribution(const NeighborSet& ns, std::size_t m, const NeighborFeatures& f,
                             const ConfidenceModule& module, double tau, std::size_t num_classes,
                             double distance_scale = 1.0);

}  // namespace n2c2
