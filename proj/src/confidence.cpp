#include "n2c2/confidence.hpp"

#include <cmath>
#include <set>

#include "n2c2/error.hpp"

namespace n2c2 {

namespace {

void fill_xavier(Matrix& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (double& x : m.values()) x = rng.uniform(-limit, limit);
}

}  // namespace

ConfidenceModule ConfidenceModule::zeros(std::size_t k_max, std::size_t hidden) {
  if (k_max == 0 || hidden == 0) throw Error(ErrorCode::InvalidArgument, "empty confidence module");
  return {Matrix(1, hidden), Matrix(hidden, 2 * k_max), Matrix(1, hidden), Matrix(hidden, 2)};
}

ConfidenceModule ConfidenceModule::initialize(std::size_t k_max, Rng& rng, std::size_t hidden) {
  auto module = zeros(k_max, hidden);
  fill_xavier(module.w2, rng);
  fill_xavier(module.w4, rng);
  return module;
}

void ConfidenceModule::validate() const {
  const std::size_t h = w2.rows();
  if (h == 0 || w2.cols() == 0 || w2.cols() % 2 != 0 || w1.rows() != 1 || w1.cols() != h ||
      w3.rows() != 1 || w3.cols() != h || w4.rows() != h || w4.cols() != 2)
    throw Error(ErrorCode::DimInconsistency, "confidence module matrices have inconsistent shapes");
  if (!w1.all_finite() || !w2.all_finite() || !w3.all_finite() || !w4.all_finite())
    throw Error(ErrorCode::NonFinite, "confidence module weights");
}

NeighborFeatures neighbor_features(const NeighborSet& ns, std::size_t m,
                                   const Distribution& p_base_query) {
  if (m > ns.size()) throw Error(ErrorCode::InvalidArgument, "m exceeds neighbor count");
  NeighborFeatures f;
  f.distance.reserve(m);
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& n = ns[i];
    if (n.label >= p_base_query.size())
      throw Error(ErrorCode::LabelSpaceMismatch, "neighbor label outside the query distribution");
    seen.insert(n.label);
    f.distance.push_back(n.distance);
    f.distinct.push_back(static_cast<double>(seen.size()));
    f.p_query_label.push_back(p_base_query[n.label]);
    f.self_prob.push_back(n.self_prob);
  }
  return f;
}

std::vector<double> padded_features(const NeighborFeatures& f, std::size_t m, std::size_t k_max,
                                    double distance_scale) {
  if (m < 1 || m > f.size()) throw Error(ErrorCode::EmptyNeighborSet, "bad feature prefix length");
  if (m > k_max) throw Error(ErrorCode::InvalidArgument, "m exceeds k_max");
  std::vector<double> x(2 * k_max);
  for (std::size_t i = 0; i < k_max; ++i) {
    const std::size_t src = i < m ? i : m - 1;
    x[i] = f.distance[src] / distance_scale;
    x[k_max + i] = f.distinct[src];
  }
  return x;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double temperature_raw(std::span<const double> padded, const ConfidenceModule& module) {
  if (padded.size() != module.w2.cols())
    throw Error(ErrorCode::DimMismatch, "temperature features have the wrong width");
  auto hidden = module.w2.multiply(padded);
  for (double& h : hidden) h = std::tanh(h);
  const double raw = module.w1.multiply(hidden)[0];
  if (!std::isfinite(raw)) throw Error(ErrorCode::NonFinite, "temperature output");
  return raw;
}

double temperature_T(const NeighborFeatures& f, std::size_t m, const ConfidenceModule& module,
                     double distance_scale) {
  const auto x = padded_features(f, m, module.k_max(), distance_scale);
  return softplus(temperature_raw(x, module)) + kTemperatureFloor;
}

double bias_C(double p_query_label, double self_prob, const ConfidenceModule& module) {
  const double in[2] = {p_query_label, self_prob};
  auto hidden = module.w4.multiply(in);
  for (double& h : hidden) h = std::tanh(h);
  return module.w3.multiply(hidden)[0];
}

Distribution cd_distribution(const NeighborSet& ns, std::size_t m, const NeighborFeatures& f,
                             const ConfidenceModule& module, double tau, std::size_t num_classes,
                             double distance_scale) {
  if (ns.empty() || m < 1) throw Error(ErrorCode::EmptyNeighborSet, "no neighbors to vote");
  if (m > ns.size() || m > f.size()) throw Error(ErrorCode::InvalidArgument, "m exceeds neighbors");
  const double temperature = temperature_T(f, m, module, distance_scale);
  std::vector<double> exponents(m);
  for (std::size_t i = 0; i < m; ++i)
    exponents[i] = -ns[i].distance / (tau * temperature) +
                   bias_C(f.p_query_label[i], f.self_prob[i], module);
  const auto w = log_sum_exp_weights(exponents);
  std::vector<double> per_class(num_classes, 0.0);
  for (std::size_t i = 0; i < m; ++i) per_class[ns[i].label] += w[i];
  return normalize(per_class);
}

}  // namespace n2c2
