#include "n2c2/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <boost/math/tools/minima.hpp>

#include "n2c2/error.hpp"

namespace n2c2 {

std::size_t bin_index(double confidence, std::size_t num_bins) {
  const double b = static_cast<double>(num_bins);
  auto upper = [&](std::size_t i) { return static_cast<double>(i + 1) / b; };
  auto idx = static_cast<std::size_t>(std::max(0.0, std::ceil(confidence * b) - 1.0));
  idx = std::min(idx, num_bins - 1);
  // ceil(c * B) can be off by one when c * B rounds; settle against the edges.
  while (idx > 0 && confidence <= upper(idx - 1)) --idx;
  while (idx + 1 < num_bins && confidence > upper(idx)) ++idx;
  return idx;
}

double ece_from_bins(std::span<const CalibrationBin> bins, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::EmptyPreds, "no predictions");
  double ece = 0.0;
  for (const auto& bin : bins)
    ece += static_cast<double>(bin.count) / static_cast<double>(n) *
           std::abs(bin.accuracy - bin.mean_confidence);
  return ece;
}

EvalResult evaluate(std::span<const Prediction> preds, std::size_t num_bins) {
  if (preds.empty()) throw Error(ErrorCode::EmptyPreds, "no predictions to evaluate");
  if (num_bins < 1) throw Error(ErrorCode::InvalidArgument, "num_bins must be at least 1");

  std::vector<double> conf_sum(num_bins, 0.0);
  std::vector<std::size_t> correct(num_bins, 0);
  std::vector<std::size_t> count(num_bins, 0);
  std::size_t total_correct = 0;
  for (const auto& p : preds) {
    if (p.gold >= p.dist.size()) throw Error(ErrorCode::InvalidArgument, "gold label out of range");
    const std::size_t guess = argmax(p.dist);
    const double confidence = p.dist[guess];
    const std::size_t b = bin_index(confidence, num_bins);
    ++count[b];
    conf_sum[b] += confidence;
    if (guess == p.gold) {
      ++correct[b];
      ++total_correct;
    }
  }

  EvalResult r;
  r.n = preds.size();
  r.num_bins = num_bins;
  r.accuracy = static_cast<double>(total_correct) / static_cast<double>(r.n);
  for (std::size_t b = 0; b < num_bins; ++b) {
    CalibrationBin bin;
    bin.lower = static_cast<double>(b) / static_cast<double>(num_bins);
    bin.upper = static_cast<double>(b + 1) / static_cast<double>(num_bins);
    bin.count = count[b];
    if (count[b] > 0) {
      bin.mean_confidence = conf_sum[b] / static_cast<double>(count[b]);
      bin.accuracy = static_cast<double>(correct[b]) / static_cast<double>(count[b]);
    }
    r.bins.push_back(bin);
  }
  r.ece = ece_from_bins(r.bins, r.n);
  return r;
}

Distribution temperature_scale(const Distribution& dist, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
  if (temperature == 1.0) return dist;
  const double inv = 1.0 / temperature;
  double top = -std::numeric_limits<double>::infinity();
  for (double p : dist.probs())
    if (p > 0.0) top = std::max(top, std::log(p) * inv);
  std::vector<double> w(dist.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (dist[i] > 0.0) w[i] = std::exp(std::log(dist[i]) * inv - top);
    sum += w[i];
  }
  for (double& x : w) x /= sum;
  return Distribution(std::move(w));
}

double scaled_nll(std::span<const Prediction> preds, double temperature) {
  if (preds.empty()) throw Error(ErrorCode::EmptyDev, "no predictions");
  double nll = 0.0;
  for (const auto& p : preds) {
    const auto scaled = temperature_scale(p.dist, temperature);
    nll -= std::log(std::max(scaled[p.gold], 1e-12));
  }
  return nll / static_cast<double>(preds.size());
}

double temperature_scale_fit(std::span<const Prediction> dev) {
  if (dev.empty()) throw Error(ErrorCode::EmptyDev, "temperature scaling needs a dev set");
  // The NLL is convex in 1/T, hence unimodal in log T.
  auto objective = [&](double log_t) { return scaled_nll(dev, std::exp(log_t)); };
  const auto [log_t, nll] = boost::math::tools::brent_find_minima(
      objective, std::log(0.01), std::log(100.0), std::numeric_limits<double>::digits / 2);
  (void)nll;
  return std::exp(log_t);
}

Distribution label_smooth(std::size_t gold, std::size_t num_classes, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 1.0))
    throw Error(ErrorCode::InvalidArgument, "label smoothing epsilon must lie in [0, 1)");
  if (gold >= num_classes) throw Error(ErrorCode::InvalidArgument, "gold label out of range");
  const double spread = epsilon / static_cast<double>(num_classes);
  std::vector<double> t(num_classes, spread);
  t[gold] = 1.0 - epsilon + spread;
  return Distribution(std::move(t));
}

Distribution contextual_calibrate(const Distribution& pred, const Distribution& cf) {
  if (pred.size() != cf.size()) throw Error(ErrorCode::LengthMismatch, "distribution lengths differ");
  std::vector<double> w(pred.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(cf[i] > 0.0))
      throw Error(ErrorCode::ZeroContentFreeProb, "content-free probability is zero");
    w[i] = pred[i] / cf[i];
  }
  return normalize(w);
}

nlohmann::json eval_result_json(const EvalResult& result) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : result.bins)
    bins.push_back({{"bin_lower", b.lower},
                    {"bin_upper", b.upper},
                    {"count", b.count},
                    {"mean_conf", b.mean_confidence},
                    {"acc", b.accuracy}});
  return {{"accuracy", result.accuracy},
          {"ece", result.ece},
          {"n", result.n},
          {"num_bins", result.num_bins},
          {"bins", std::move(bins)}};
}

std::string reliability_csv(const EvalResult& result) {
  std::ostringstream out;
  out << "bin_lower,bin_upper,count,mean_conf,acc\n";
  char line[160];
  for (const auto& b : result.bins) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%zu,%.17g,%.17g\n", b.lower, b.upper, b.count,
                  b.mean_confidence, b.accuracy);
    out << line;
  }
  return out.str();
}

}  // namespace n2c2
