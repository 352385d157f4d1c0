#include "n2c2/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "n2c2/error.hpp"

namespace n2c2 {

std::vector<double> dwe_input(const NeighborSet& ns, std::size_t k_max, double distance_scale) {
  if (ns.empty()) throw Error(ErrorCode::EmptyNeighborSet, "DWE needs at least one neighbor");
  const std::size_t n = std::min(ns.size(), k_max);
  std::vector<double> x(2 * k_max);
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < k_max; ++i) {
    if (i < n) {
      seen.insert(ns[i].label);
      x[i] = ns[i].distance / distance_scale;
      x[k_max + i] = static_cast<double>(seen.size());
    } else {
      x[i] = x[i - 1];
      x[k_max + i] = x[k_max + i - 1];
    }
  }
  return x;
}

std::vector<double> dwe_logits(std::span<const double> input, const DweNetwork& net) {
  if (input.size() != net.layer1.cols())
    throw Error(ErrorCode::DimMismatch, "DWE input has the wrong width");
  auto hidden = net.layer1.multiply(input);
  for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] = std::tanh(hidden[i] + net.bias1[i]);
  auto logits = net.layer2.multiply(hidden);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    logits[i] += net.bias2[i];
    if (!std::isfinite(logits[i])) throw Error(ErrorCode::NonFinite, "DWE logit");
  }
  return logits;
}

Distribution dwe_weights(const NeighborSet& ns, const DweNetwork& net, double distance_scale) {
  const auto x = dwe_input(ns, net.k_max(), distance_scale);
  return Distribution(softmax(dwe_logits(x, net)));
}

Distribution combine(const Distribution& weights, std::span<const Distribution> per_m,
                     const Distribution& p_base) {
  if (per_m.size() + 1 != weights.size())
    throw Error(ErrorCode::LengthMismatch, "need one distribution per nonzero candidate size");
  std::vector<double> p(p_base.size());
  for (std::size_t y = 0; y < p.size(); ++y) p[y] = weights[0] * p_base[y];
  for (std::size_t j = 0; j < per_m.size(); ++j) {
    if (per_m[j].size() != p_base.size())
      throw Error(ErrorCode::LengthMismatch, "distributions differ in length");
    for (std::size_t y = 0; y < p.size(); ++y) p[y] += weights[j + 1] * per_m[j][y];
  }
  return Distribution(std::move(p));
}

PreparedView prepare_view(const View& view, const N2C2Model& model, const Datastore& store) {
  const std::size_t num_classes = model.num_classes();
  if (store.num_classes() != num_classes || view.base_dist.size() != num_classes)
    throw Error(ErrorCode::LabelSpaceMismatch, "model, datastore and record disagree on classes");
  if (store.shaped() != model.shaping.has_value())
    throw Error(ErrorCode::InvalidArgument, "datastore shaping does not match the model");

  const auto query = model.shaping ? model.shaping->apply(view.embedding) : view.embedding;
  const std::size_t k_max = model.hyper.k_max;
  const NeighborSet ns = search(query, store, k_max);
  const double scale = model.hyper.distance_scale;

  PreparedView prep;
  prep.base = view.base_dist;
  const auto f = neighbor_features(ns, ns.size(), view.base_dist);
  prep.distance = f.distance;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    prep.label.push_back(ns[i].label);
    prep.c_input.push_back({f.p_query_label[i], f.self_prob[i]});
  }
  const auto& sizes = model.hyper.candidate_sizes;
  for (std::size_t j = 1; j < sizes.size(); ++j) {
    // Stores smaller than the trained candidate sizes fall back to what exists.
    const std::size_t m = std::min(sizes[j], ns.size());
    prep.m_values.push_back(m);
    prep.t_input.push_back(padded_features(f, m, k_max, scale));
  }
  prep.dwe_input = dwe_input(ns, k_max, scale);
  return prep;
}

ViewForward forward_view(const PreparedView& prep, const N2C2Model& model) {
  const auto& cd = model.confidence;
  const auto& dwe = model.dwe;
  const double tau = model.hyper.tau;
  const std::size_t num_classes = model.num_classes();
  ViewForward fw;

  fw.dwe_hidden = dwe.layer1.multiply(prep.dwe_input);
  for (std::size_t i = 0; i < fw.dwe_hidden.size(); ++i)
    fw.dwe_hidden[i] = std::tanh(fw.dwe_hidden[i] + dwe.bias1[i]);
  auto logits = dwe.layer2.multiply(fw.dwe_hidden);
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += dwe.bias2[i];
  fw.weights = softmax(logits);

  const std::size_t n = prep.distance.size();
  fw.c_hidden.resize(n);
  fw.c_value.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    fw.c_hidden[i] = cd.w4.multiply(prep.c_input[i]);
    for (double& h : fw.c_hidden[i]) h = std::tanh(h);
    fw.c_value[i] = cd.w3.multiply(fw.c_hidden[i])[0];
  }

  const std::size_t candidates = prep.m_values.size();
  fw.t_hidden.resize(candidates);
  fw.t_raw.resize(candidates);
  fw.t_value.resize(candidates);
  fw.share.resize(candidates);
  fw.per_m.resize(candidates);
  fw.combined.assign(num_classes, 0.0);
  for (std::size_t y = 0; y < num_classes; ++y) fw.combined[y] = fw.weights[0] * prep.base[y];

  for (std::size_t j = 0; j < candidates; ++j) {
    fw.t_hidden[j] = cd.w2.multiply(prep.t_input[j]);
    for (double& h : fw.t_hidden[j]) h = std::tanh(h);
    fw.t_raw[j] = cd.w1.multiply(fw.t_hidden[j])[0];
    fw.t_value[j] = softplus(fw.t_raw[j]) + kTemperatureFloor;

    const std::size_t m = prep.m_values[j];
    std::vector<double> exponents(m);
    for (std::size_t i = 0; i < m; ++i)
      exponents[i] = -prep.distance[i] / (tau * fw.t_value[j]) + fw.c_value[i];
    fw.share[j] = softmax(exponents);
    fw.per_m[j].assign(num_classes, 0.0);
    for (std::size_t i = 0; i < m; ++i) fw.per_m[j][prep.label[i]] += fw.share[j][i];
    for (std::size_t y = 0; y < num_classes; ++y)
      fw.combined[y] += fw.weights[j + 1] * fw.per_m[j][y];
  }
  for (double p : fw.combined)
    if (!std::isfinite(p)) throw Error(ErrorCode::NonFinite, "combined distribution");
  return fw;
}

Distribution n2c2_predict(const EmbeddingRecord& record, const N2C2Model& model,
                          const Datastore& store, const PredictOptions& options) {
  if (record.views.empty()) throw Error(ErrorCode::InvalidArgument, "record has no views");
  std::vector<Distribution> per_view;
  per_view.reserve(record.views.size());
  for (const auto& view : record.views) {
    if (options.fixed_k) {
      const auto query = model.shaping ? model.shaping->apply(view.embedding) : view.embedding;
      const NeighborSet ns = search(query, store, std::min(options.fixed_m, model.hyper.k_max));
      const auto f = neighbor_features(ns, ns.size(), view.base_dist);
      const auto cd = cd_distribution(ns, ns.size(), f, model.confidence, model.hyper.tau,
                                      model.num_classes(), model.hyper.distance_scale);
      per_view.push_back(interpolate(cd, view.base_dist, options.lambda));
    } else {
      const auto fw = forward_view(prepare_view(view, model, store), model);
      per_view.push_back(Distribution(fw.combined));
    }
  }
  return ensemble_average(per_view);
}

Datastore model_datastore(const N2C2Model& model, const std::vector<EmbeddingRecord>& train,
                          const LabelSpace& labels) {
  if (labels.names() != model.hyper.classes)
    throw Error(ErrorCode::LabelSpaceMismatch, "dataset classes differ from the model's");
  return build_datastore(train, model.retrieval_ids, labels,
                         model.shaping ? &*model.shaping : nullptr);
}

}  // namespace n2c2
