#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "n2c2/core.hpp"
#include "n2c2/datastore.hpp"

namespace n2c2 {

struct RetrievalConfig {
  double tau = 5.0;
  std::size_t k_max = 16;
  double lambda = 0.5;

  void validate() const;
};

struct Neighbor {
  double distance = 0.0;
  std::size_t label = 0;
  std::string id;
  double self_prob = 0.0;
  std::size_t entry_index = 0;  // position in the datastore
};

// Nearest entries in ascending distance order.
struct NeighborSet {
  std::vector<Neighbor> neighbors;

  std::size_t size() const noexcept { return neighbors.size(); }
  bool empty() const noexcept { return neighbors.empty(); }
  const Neighbor& operator[](std::size_t i) const { return neighbors[i]; }
};

// Exact Euclidean (not squared) k-nearest search; ties keep insertion order.
NeighborSet search(std::span<const double> query, const Datastore& store, std::size_t k);

// p(y) proportional to the sum of exp(-d_i / tau) over the top-m neighbors
// labelled y.
Distribution knn_distribution(const NeighborSet& ns, std::size_t num_classes, double tau,
                              std::size_t m);

// (1 - lambda) * p_knn + lambda * p_base
Distribution interpolate(const Distribution& p_knn, const Distribution& p_base, double lambda);

Distribution ensemble_average(std::span<const Distribution> dists);

}  // namespace n2c2
