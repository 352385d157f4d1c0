#include "n2c2/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "n2c2/error.hpp"

namespace n2c2 {

LabelSpace::LabelSpace(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() < 2)
    throw Error(ErrorCode::InvalidArgument, "label space needs at least 2 classes");
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw Error(ErrorCode::InvalidArgument, "empty class name");
    if (!seen.insert(n).second)
      throw Error(ErrorCode::InvalidArgument, "duplicate class name '" + n + "'");
  }
}

Distribution::Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw Error(ErrorCode::InvalidArgument, "empty distribution");
  double sum = 0.0;
  for (double p : probs_) {
    if (!std::isfinite(p)) throw Error(ErrorCode::NonFinite, "non-finite probability");
    if (p < 0.0) throw Error(ErrorCode::InvalidArgument, "negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kDistributionTolerance)
    throw Error(ErrorCode::InvalidArgument,
                "probabilities sum to " + std::to_string(sum) + ", expected 1");
}

Distribution Distribution::uniform(std::size_t num_classes) {
  return Distribution(std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes)));
}

Distribution Distribution::one_hot(std::size_t num_classes, std::size_t index) {
  if (index >= num_classes) throw Error(ErrorCode::InvalidArgument, "one-hot index out of range");
  std::vector<double> p(num_classes, 0.0);
  p[index] = 1.0;
  return Distribution(std::move(p));
}

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "test";
}

Split split_from_string(const std::string& text) {
  if (text == "train") return Split::Train;
  if (text == "dev") return Split::Dev;
  if (text == "test") return Split::Test;
  throw Error(ErrorCode::ParseError, "unknown split '" + text + "'");
}

Distribution normalize(std::span<const double> weights) {
  if (weights.empty()) throw Error(ErrorCode::InvalidArgument, "empty weight vector");
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w)) throw Error(ErrorCode::NonFinite, "non-finite weight");
    if (w < 0.0) throw Error(ErrorCode::InvalidArgument, "negative weight");
    sum += w;
  }
  if (sum == 0.0) throw Error(ErrorCode::AllZero, "all weights are zero");
  std::vector<double> p(weights.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = weights[i] / sum;
  return Distribution(std::move(p));
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

std::vector<double> log_sum_exp_weights(std::span<const double> exponents) {
  if (exponents.empty()) throw Error(ErrorCode::InvalidArgument, "empty exponent vector");
  double top = exponents[0];
  for (double x : exponents) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFinite, "non-finite exponent");
    top = std::max(top, x);
  }
  std::vector<double> w(exponents.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(exponents[i] - top);
  return w;
}

std::vector<double> softmax(std::span<const double> logits) {
  auto w = log_sum_exp_weights(logits);
  double sum = 0.0;
  for (double x : w) sum += x;
  for (double& x : w) x /= sum;
  return w;
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimMismatch, "vector dimensions differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace n2c2
