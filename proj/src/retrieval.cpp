#include "n2c2/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "n2c2/error.hpp"

namespace n2c2 {

void RetrievalConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw Error(ErrorCode::InvalidArgument, "tau must be positive");
  if (k_max < 1) throw Error(ErrorCode::InvalidArgument, "k_max must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "lambda must lie in [0, 1]");
}

NeighborSet search(std::span<const double> query, const Datastore& store, std::size_t k) {
  if (store.empty()) throw Error(ErrorCode::EmptyStore, "cannot search an empty datastore");
  if (query.size() != store.dim())
    throw Error(ErrorCode::DimMismatch, "query dimension " + std::to_string(query.size()) +
                                            " vs datastore " + std::to_string(store.dim()));
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");

  const auto& entries = store.entries();
  std::vector<std::pair<double, std::size_t>> scored(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i)
    scored[i] = {euclidean_distance(query, entries[i].key), i};

  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end());

  NeighborSet ns;
  ns.neighbors.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const auto& e = entries[scored[i].second];
    ns.neighbors.push_back({scored[i].first, e.label, e.id, e.self_prob, scored[i].second});
  }
  return ns;
}

Distribution knn_distribution(const NeighborSet& ns, std::size_t num_classes, double tau,
                              std::size_t m) {
  if (ns.empty() || m < 1) throw Error(ErrorCode::EmptyNeighborSet, "no neighbors to vote");
  if (m > ns.size()) throw Error(ErrorCode::InvalidArgument, "m exceeds neighbor count");
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "tau must be positive");

  std::vector<double> exponents(m);
  for (std::size_t i = 0; i < m; ++i) exponents[i] = -ns[i].distance / tau;
  const auto w = log_sum_exp_weights(exponents);

  std::vector<double> per_class(num_classes, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (ns[i].label >= num_classes) throw Error(ErrorCode::InvalidArgument, "label out of range");
    per_class[ns[i].label] += w[i];
  }
  return normalize(per_class);
}

Distribution interpolate(const Distribution& p_knn, const Distribution& p_base, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "lambda must lie in [0, 1]");
  if (p_knn.size() != p_base.size())
    throw Error(ErrorCode::LengthMismatch, "distributions have different lengths");
  if (lambda == 0.0) return p_knn;
  if (lambda == 1.0) return p_base;
  std::vector<double> p(p_knn.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    p[i] = (1.0 - lambda) * p_knn[i] + lambda * p_base[i];
  return Distribution(std::move(p));
}

Distribution ensemble_average(std::span<const Distribution> dists) {
  if (dists.empty()) throw Error(ErrorCode::EmptyList, "empty ensemble");
  if (dists.size() == 1) return dists.front();
  const std::size_t n = dists.front().size();
  std::vector<double> p(n, 0.0);
  for (const auto& d : dists) {
    if (d.size() != n) throw Error(ErrorCode::LengthMismatch, "ensemble members differ in length");
    for (std::size_t i = 0; i < n; ++i) p[i] += d[i];
  }
  const double scale = 1.0 / static_cast<double>(dists.size());
  for (double& x : p) x *= scale;
  return Distribution(std::move(p));
}

}  // namespace n2c2
