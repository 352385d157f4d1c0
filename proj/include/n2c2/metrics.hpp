#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "n2c2/core.hpp"

namespace n2c2 {

inline constexpr std::size_t kDefaultBins = 10;

struct Prediction {
  Distribution dist;
  std::size_t gold = 0;
};

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
};

struct EvalResult {
  double accuracy = 0.0;
  double ece = 0.0;
  std::size_t n = 0;
  std::size_t num_bins = 0;
  std::vector<CalibrationBin> bins;
};

// Accuracy and expected calibration error. Confidence is the max
// probability; bins split (0, 1] into equal right-inclusive intervals.
EvalResult evaluate(std::span<const Prediction> preds, std::size_t num_bins = kDefaultBins);

// sum_b (count_b / n) * |accuracy_b - mean_confidence_b|
double ece_from_bins(std::span<const CalibrationBin> bins, std::size_t n);

std::size_t bin_index(double confidence, std::size_t num_bins);

// softmax(log p / T); zero-probability classes stay at zero.
Distribution temperature_scale(const Distribution& dist, double temperature);

// Mean negative log-likelihood of the gold labels after scaling by T.
double scaled_nll(std::span<const Prediction> preds, double temperature);

// Temperature minimizing dev NLL, searched over T in [0.01, 100].
double temperature_scale_fit(std::span<const Prediction> dev);

// Gold gets 1 - eps + eps / C, every other class eps / C.
Distribution label_smooth(std::size_t gold, std::size_t num_classes, double epsilon);

// normalize(pred / cf)
Distribution contextual_calibrate(const Distribution& pred, const Distribution& cf);

nlohmann::json eval_result_json(const EvalResult& result);
// bin_lower,bin_upper,count,mean_conf,acc
std::string reliability_csv(const EvalResult& result);

}  // namespace n2c2
