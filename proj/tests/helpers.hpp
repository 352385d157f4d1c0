#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "n2c2/adaptive.hpp"
#include "n2c2/core.hpp"
#include "n2c2/datastore.hpp"
#include "n2c2/error.hpp"
#include "n2c2/model.hpp"
#include "n2c2/rng.hpp"
#include "oracles.hpp"

namespace testing {

using namespace n2c2;

template <typename F>
std::optional<ErrorCode> error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline LabelSpace labels_of(std::size_t c) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < c; ++i) names.push_back("c" + std::to_string(i));
  return LabelSpace(names);
}

inline Distribution random_dist(Rng& rng, std::size_t c) {
  std::vector<double> w(c);
  for (double& x : w) x = rng.uniform(0.05, 1.0);
  return normalize(w);
}

inline std::vector<double> random_vec(Rng& rng, std::size_t n, double sigma = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal(0.0, sigma);
  return v;
}

inline std::vector<EmbeddingRecord> random_records(Rng& rng, std::size_t n, std::size_t dim,
                                                   std::size_t c, std::size_t views = 1,
                                                   const std::string& prefix = "r",
                                                   Split split = Split::Train) {
  std::vector<EmbeddingRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    EmbeddingRecord r;
    r.id = prefix + std::to_string(i);
    r.language = "en";
    r.split = split;
    r.label = i % c;
    for (std::size_t v = 0; v < views; ++v) r.views.push_back({random_vec(rng, dim), random_dist(rng, c), {}});
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<std::string> ids_of(const std::vector<EmbeddingRecord>& records) {
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.id);
  return ids;
}

inline void fill_normal(std::span<double> values, Rng& rng, double sigma) {
  for (double& x : values) x = rng.normal(0.0, sigma);
}

// A model with every parameter random (nonzero), suitable for oracle and
// gradient comparisons.
inline N2C2Model random_model(Rng& rng, std::size_t dim, std::size_t shaped, std::size_t c,
                              std::size_t k_max, const std::vector<EmbeddingRecord>& store_records,
                              double sigma = 0.5) {
  N2C2Model m;
  m.hyper.tau = rng.uniform(0.5, 5.0);
  m.hyper.k_max = k_max;
  m.hyper.candidate_sizes = candidate_sizes(k_max, store_records.size());
  m.hyper.input_dim = dim;
  m.hyper.shaped_dim = shaped;
  m.hyper.classes = labels_of(c).names();
  m.hyper.hidden = 5;
  if (shaped > 0) {
    ShapingLayer layer(Matrix(dim, shaped), random_vec(rng, shaped, 0.3));
    fill_normal(layer.weight().values(), rng, 0.5);
    m.shaping = layer;
  }
  m.confidence = ConfidenceModule::zeros(k_max, 5);
  for (auto* w : {&m.confidence.w1, &m.confidence.w2, &m.confidence.w3, &m.confidence.w4})
    fill_normal(w->values(), rng, sigma);
  m.dwe = DweNetwork::zeros(k_max, m.hyper.candidate_sizes.size(), 5);
  fill_normal(m.dwe.layer1.values(), rng, sigma);
  fill_normal(m.dwe.layer2.values(), rng, sigma);
  fill_normal(m.dwe.bias1, rng, sigma);
  fill_normal(m.dwe.bias2, rng, sigma);
  m.retrieval_ids = ids_of(store_records);
  return m;
}

inline oracle::CdWeights cd_weights(const ConfidenceModule& m) {
  return {oracle::rows_of(m.w1), oracle::rows_of(m.w2), oracle::rows_of(m.w3),
          oracle::rows_of(m.w4)};
}

inline oracle::DweWeights dwe_weights_of(const DweNetwork& n) {
  return {oracle::rows_of(n.layer1), n.bias1, oracle::rows_of(n.layer2), n.bias2};
}

inline oracle::Pipeline pipeline_of(const N2C2Model& m,
                                    const std::vector<EmbeddingRecord>& store_records) {
  oracle::Pipeline p;
  if (m.shaping) p.shaping = std::make_pair(oracle::rows_of(m.shaping->weight()), m.shaping->bias());
  p.cd = cd_weights(m.confidence);
  p.dwe = dwe_weights_of(m.dwe);
  p.tau = m.hyper.tau;
  p.k_max = m.hyper.k_max;
  p.sizes = m.hyper.candidate_sizes;
  p.scale = m.hyper.distance_scale;
  for (const auto& r : store_records)
    for (const auto& v : r.views) {
      p.raw_keys.push_back(v.embedding);
      p.labels.push_back(*r.label);
      p.self_probs.push_back(v.base_dist[*r.label]);
    }
  return p;
}

inline std::vector<oracle::ViewInput> views_of(const EmbeddingRecord& r) {
  std::vector<oracle::ViewInput> out;
  for (const auto& v : r.views)
    out.push_back({v.embedding, std::vector<double>(v.base_dist.probs().begin(), v.base_dist.probs().end())});
  return out;
}

inline std::vector<double> vec(const Distribution& d) {
  return {d.probs().begin(), d.probs().end()};
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Fresh directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("n2c2_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
