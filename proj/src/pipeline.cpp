#include "n2c2/pipeline.hpp"

#include <algorithm>
#include <exception>
#include <thread>

#include "n2c2/error.hpp"

namespace n2c2 {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoCd: return "no-cd";
    case Variant::RawRepr: return "raw-repr";
    case Variant::NoDwe: return "no-dwe";
  }
  return "full";
}

Variant variant_from_string(const std::string& text) {
  if (text == "full") return Variant::Full;
  if (text == "no-cd") return Variant::NoCd;
  if (text == "raw-repr") return Variant::RawRepr;
  if (text == "no-dwe") return Variant::NoDwe;
  throw Error(ErrorCode::InvalidArgument, "unknown ablation variant '" + text + "'");
}

N2C2Model without_cd(const N2C2Model& model) {
  N2C2Model out = model;
  out.confidence = ConfidenceModule::zeros(model.confidence.k_max(), model.confidence.hidden());
  return out;
}

std::vector<Distribution> predict_all(const std::vector<EmbeddingRecord>& records,
                                      const N2C2Model& model, const Datastore& store,
                                      const PredictOptions& options, std::size_t threads) {
  std::vector<Distribution> out(records.size());
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, records.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < records.size(); ++i)
      out[i] = n2c2_predict(records[i], model, store, options);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> workers;
    for (std::size_t t = 0; t < threads; ++t)
      workers.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < records.size(); i += threads)
            out[i] = n2c2_predict(records[i], model, store, options);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::vector<Distribution> predict_base(const std::vector<EmbeddingRecord>& records,
                                       bool contextual_calibration) {
  std::vector<Distribution> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    std::vector<Distribution> views;
    for (const auto& v : rec.views) {
      if (!contextual_calibration) {
        views.push_back(v.base_dist);
      } else {
        if (!v.cf_dist)
          throw Error(ErrorCode::InvalidArgument,
                      "record '" + rec.id + "' has no content-free distribution");
        views.push_back(contextual_calibrate(v.base_dist, *v.cf_dist));
      }
    }
    out.push_back(ensemble_average(views));
  }
  return out;
}

std::vector<Prediction> with_gold(const std::vector<EmbeddingRecord>& records,
                                  const std::vector<Distribution>& dists) {
  if (records.size() != dists.size())
    throw Error(ErrorCode::LengthMismatch, "one distribution per record expected");
  std::vector<Prediction> preds;
  preds.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].label)
      throw Error(ErrorCode::MissingLabel, "record '" + records[i].id + "' has no gold label");
    preds.push_back({dists[i], *records[i].label});
  }
  return preds;
}

LanguageReport evaluate_by_language(const std::vector<EmbeddingRecord>& records,
                                    const std::vector<Distribution>& dists, std::size_t num_bins) {
  const auto preds = with_gold(records, dists);
  std::map<std::string, std::vector<Prediction>> grouped;
  for (std::size_t i = 0; i < records.size(); ++i) grouped[records[i].language].push_back(preds[i]);
  LanguageReport report;
  for (const auto& [lang, group] : grouped) {
    auto r = evaluate(group, num_bins);
    report.mean_accuracy += r.accuracy;
    report.mean_ece += r.ece;
    report.per_language.emplace(lang, std::move(r));
  }
  report.mean_accuracy /= static_cast<double>(grouped.size());
  report.mean_ece /= static_cast<double>(grouped.size());
  report.pooled = evaluate(preds, num_bins);
  return report;
}

nlohmann::json report_json(const LanguageReport& report) {
  auto j = eval_result_json(report.pooled);
  j["average"] = {{"accuracy", report.mean_accuracy}, {"ece", report.mean_ece}};
  nlohmann::json langs = nlohmann::json::object();
  for (const auto& [lang, r] : report.per_language) langs[lang] = eval_result_json(r);
  j["languages"] = std::move(langs);
  return j;
}

}  // namespace n2c2
