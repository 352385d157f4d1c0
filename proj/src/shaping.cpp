#include "n2c2/shaping.hpp"

#include <cmath>

#include "n2c2/error.hpp"
#include "n2c2/retrieval.hpp"

namespace n2c2 {

ShapingLayer::ShapingLayer(Matrix weight, std::vector<double> bias)
    : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.cols() != bias_.size())
    throw Error(ErrorCode::DimInconsistency, "shaping bias length must equal output dimension");
  if (!weight_.all_finite()) throw Error(ErrorCode::NonFinite, "shaping weight");
  for (double x : bias_)
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFinite, "shaping bias");
}

ShapingLayer ShapingLayer::xavier(std::size_t input_dim, std::size_t output_dim, Rng& rng) {
  if (input_dim == 0 || output_dim == 0)
    throw Error(ErrorCode::InvalidArgument, "shaping dimensions must be positive");
  const double limit = std::sqrt(6.0 / static_cast<double>(input_dim + output_dim));
  Matrix w(input_dim, output_dim);
  for (double& x : w.values()) x = rng.uniform(-limit, limit);
  return ShapingLayer(std::move(w), std::vector<double>(output_dim, 0.0));
}

std::vector<double> ShapingLayer::apply(std::span<const double> h) const {
  if (h.size() != input_dim())
    throw Error(ErrorCode::DimMismatch, "shaping expects dimension " + std::to_string(input_dim()) +
                                            ", got " + std::to_string(h.size()));
  auto out = weight_.multiply_transposed(h);
  for (std::size_t z = 0; z < out.size(); ++z) out[z] += bias_[z];
  return out;
}

Datastore shape_datastore(const Datastore& raw_store, const ShapingLayer& layer) {
  if (raw_store.shaped()) throw Error(ErrorCode::InvalidArgument, "datastore is already shaped");
  std::vector<DatastoreEntry> entries = raw_store.entries();
  for (auto& e : entries) e.key = layer.apply(e.key);
  return Datastore(raw_store.labels(), layer.output_dim(), std::move(entries), true);
}

ShapingLossResult shaping_loss(const ShapingLayer& layer, std::span<const LabeledQuery> queries,
                               const Datastore& raw_store, double tau, std::size_t k) {
  if (queries.empty()) throw Error(ErrorCode::InvalidArgument, "empty query batch");
  if (raw_store.dim() != layer.input_dim())
    throw Error(ErrorCode::DimMismatch, "datastore dimension does not match shaping input");
  const Datastore shaped = shape_datastore(raw_store, layer);
  const std::size_t num_classes = raw_store.num_classes();

  ShapingLossResult result;
  result.grad_weight = Matrix(layer.input_dim(), layer.output_dim());
  // b cancels in every query-key difference, so its gradient is exactly zero.
  result.grad_bias.assign(layer.output_dim(), 0.0);

  const double inv_batch = 1.0 / static_cast<double>(queries.size());
  std::vector<double> delta(layer.input_dim());
  std::vector<double> diff(layer.output_dim());

  for (const auto& q : queries) {
    if (q.label >= num_classes) throw Error(ErrorCode::InvalidArgument, "query label out of range");
    const auto shaped_query = layer.apply(q.embedding);
    const NeighborSet ns = search(shaped_query, shaped, k);

    std::vector<double> exponents(ns.size());
    for (std::size_t i = 0; i < ns.size(); ++i) exponents[i] = -ns[i].distance / tau;
    auto share = log_sum_exp_weights(exponents);
    double total = 0.0;
    for (double w : share) total += w;
    double gold = 0.0;
    for (std::size_t i = 0; i < ns.size(); ++i) {
      share[i] /= total;
      if (ns[i].label == q.label) gold += share[i];
    }

    if (gold < kProbabilityFloor) {
      result.loss -= std::log(kProbabilityFloor) * inv_batch;
      ++result.floored;
      continue;
    }
    result.loss -= std::log(gold) * inv_batch;

    for (std::size_t i = 0; i < ns.size(); ++i) {
      const double dl_dexp = share[i] - (ns[i].label == q.label ? share[i] / gold : 0.0);
      const double d = ns[i].distance;
      if (d == 0.0) continue;  // distance is not differentiable at coincident points
      const double dl_dd = -dl_dexp / tau;
      const auto& raw_key = raw_store.entries()[ns[i].entry_index].key;
      const auto& shaped_key = shaped.entries()[ns[i].entry_index].key;
      for (std::size_t h = 0; h < delta.size(); ++h) delta[h] = q.embedding[h] - raw_key[h];
      for (std::size_t z = 0; z < diff.size(); ++z) diff[z] = shaped_query[z] - shaped_key[z];
      // d = ||W^T delta||  =>  dd/dW = delta diff^T / d
      result.grad_weight.add_outer(delta, diff, dl_dd * inv_batch / d);
    }
  }
  if (!std::isfinite(result.loss)) throw Error(ErrorCode::NonFinite, "shaping loss");
  return result;
}

}  // namespace n2c2
