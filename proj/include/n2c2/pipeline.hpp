#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "n2c2/adaptive.hpp"
#include "n2c2/metrics.hpp"
#include "n2c2/model.hpp"

namespace n2c2 {

// Ablation variants: without the confidence module, without shaping, and
// with a fixed neighbor count in place of the DWE mixture.
enum class Variant { Full, NoCd, RawRepr, NoDwe };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& text);

// Copy of `model` with the confidence module zeroed, i.e. the plain kNN vote
// at temperature tau * (softplus(0) + 0.1).
N2C2Model without_cd(const N2C2Model& model);

// Full-pipeline predictions for every record, fanned out over `threads`
// workers. Output order matches `records`.
std::vector<Distribution> predict_all(const std::vector<EmbeddingRecord>& records,
                                      const N2C2Model& model, const Datastore& store,
                                      const PredictOptions& options = {}, std::size_t threads = 1);

// The base model alone: per-view base distributions averaged over views,
// optionally divided by the content-free prediction first.
std::vector<Distribution> predict_base(const std::vector<EmbeddingRecord>& records,
                                       bool contextual_calibration = false);

std::vector<Prediction> with_gold(const std::vector<EmbeddingRecord>& records,
                                  const std::vector<Distribution>& dists);

// Per-language results, their unweighted mean, and the pooled result.
struct LanguageReport {
  std::map<std::string, EvalResult> per_language;
  double mean_accuracy = 0.0;
  double mean_ece = 0.0;
  EvalResult pooled;
};

LanguageReport evaluate_by_language(const std::vector<EmbeddingRecord>& records,
                                    const std::vector<Distribution>& dists, std::size_t num_bins);

// {accuracy, ece, n, num_bins, bins} of the pooled result, plus "average"
// (unweighted mean over languages) and "languages".
nlohmann::json report_json(const LanguageReport& report);

}  // namespace n2c2
