#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "n2c2/metrics.hpp"

using namespace n2c2;

namespace {

Prediction pred(double conf, bool correct) {
  // Two-class prediction whose max probability is `conf`, gold chosen to match `correct`.
  const double c = std::max(conf, 1.0 - conf);
  return {Distribution({c, 1.0 - c}), correct ? 0u : 1u};
}

std::vector<Prediction> random_preds(Rng& rng, std::size_t n, std::size_t c) {
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({testing::random_dist(rng, c), rng.uniform_index(c)});
  return out;
}

}  // namespace

TEST_CASE("ECE hand fixtures") {
  std::vector<Prediction> perfect{{Distribution({1, 0}), 0}, {Distribution({0, 1}), 1}};
  const auto p = evaluate(perfect);
  CHECK(p.accuracy == 1.0);
  CHECK(p.ece == 0.0);

  // Confidences 0.9, 0.8, 0.6, 0.2 with correctness 1, 1, 0, 0. The last is
  // a five-class uniform prediction (argmax 0 by the tie rule, gold 1).
  std::vector<Prediction> four{{Distribution({0.9, 0.1}), 0},
                               {Distribution({0.8, 0.2}), 0},
                               {Distribution({0.6, 0.4}), 1},
                               {Distribution::uniform(5), 1}};
  const auto r = evaluate(four, 2);
  CHECK(r.ece == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(r.bins[0].count == 1);
  CHECK(r.bins[1].count == 3);
  CHECK(r.accuracy == 0.5);

  std::vector<Prediction> one{pred(0.7, false)};
  CHECK(evaluate(one).ece == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(testing::error_code([] { evaluate(std::vector<Prediction>{}); }) == ErrorCode::EmptyPreds);
  CHECK(testing::error_code([&] { evaluate(one, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("bin edges are right-inclusive") {
  CHECK(bin_index(0.1, 10) == 0);
  CHECK(bin_index(0.1000001, 10) == 1);
  CHECK(bin_index(0.3, 10) == 2);
  CHECK(bin_index(0.7, 10) == 6);
  CHECK(bin_index(1.0, 10) == 9);
  CHECK(bin_index(0.5, 2) == 0);
  CHECK(bin_index(1e-9, 10) == 0);
  for (std::size_t b = 1; b <= 10; ++b) {
    const double edge = static_cast<double>(b) / 10.0;
    CHECK(bin_index(edge, 10) == b - 1);
  }
}

TEST_CASE("ECE matches the membership oracle and its invariants") {
  Rng rng(137);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 2 + rng.uniform_index(4), n = 1 + rng.uniform_index(60);
    const std::size_t bins = 1 + rng.uniform_index(15);
    auto preds = random_preds(rng, n, c);
    std::vector<std::vector<double>> dists;
    std::vector<std::size_t> gold;
    for (const auto& p : preds) {
      dists.push_back(testing::vec(p.dist));
      gold.push_back(p.gold);
    }
    const auto r = evaluate(preds, bins);
    CHECK(std::abs(r.ece - oracle::ece(dists, gold, bins)) <= 1e-12);
    CHECK(r.ece >= 0.0);
    CHECK(r.ece <= 1.0);
    std::size_t total = 0;
    for (const auto& b : r.bins) total += b.count;
    CHECK(total == n);
    CHECK(ece_from_bins(r.bins, n) == r.ece);
    rng.shuffle(preds);
    const auto s = evaluate(preds, bins);
    CHECK(std::abs(s.ece - r.ece) <= 1e-12);
    CHECK(s.accuracy == r.accuracy);
  }
}

TEST_CASE("a calibrated-by-construction predictor has zero ECE") {
  // Every occupied bin's accuracy equals its confidence: 3 of 4 right at
  // 0.75, 1 of 2 right at 0.5, 1 of 1 right at 1.0.
  std::vector<Prediction> preds;
  for (int i = 0; i < 4; ++i) preds.push_back(pred(0.75, i < 3));
  for (int i = 0; i < 2; ++i) preds.push_back(pred(0.5, i < 1));
  preds.push_back(pred(1.0, true));
  CHECK(evaluate(preds).ece <= 1e-12);
}

TEST_CASE("temperature scaling") {
  const Distribution d({0.7, 0.2, 0.1});
  CHECK(temperature_scale(d, 1.0) == d);
  const auto sharp = temperature_scale(d, 0.5);
  CHECK(sharp[0] > d[0]);
  CHECK(temperature_scale(Distribution({0.5, 0.5, 0.0}), 2.0)[2] == 0.0);
  CHECK(testing::error_code([&] { temperature_scale(d, 0.0); }) == ErrorCode::InvalidArgument);

  Rng rng(139);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = testing::random_dist(rng, 2 + rng.uniform_index(5));
    CHECK(argmax(temperature_scale(p, std::exp(rng.uniform(-4.0, 4.0)))) == argmax(p));
  }
}

TEST_CASE("temperature fitting") {
  // Calibrated predictor: gold drawn from the predicted distribution.
  Rng rng(149);
  std::vector<Prediction> calibrated, over;
  for (int i = 0; i < 4000; ++i) {
    std::vector<double> logits{rng.normal(0, 1.5), rng.normal(0, 1.5), rng.normal(0, 1.5)};
    const Distribution p(softmax(logits));
    const double u = rng.uniform();
    std::size_t gold = 0;
    for (double acc = p[0]; gold < 2 && u >= acc; acc += p[++gold]) {
    }
    calibrated.push_back({p, gold});
    for (double& l : logits) l *= 3.0;
    over.push_back({Distribution(softmax(logits)), gold});
  }
  const double t_cal = temperature_scale_fit(calibrated);
  CHECK(t_cal >= 0.9);
  CHECK(t_cal <= 1.1);
  const double t_over = temperature_scale_fit(over);
  CHECK(t_over >= 2.5);
  CHECK(t_over <= 3.5);
  std::vector<Prediction> fixed;
  for (const auto& p : over) fixed.push_back({temperature_scale(p.dist, t_over), p.gold});
  CHECK(evaluate(fixed).ece < evaluate(over).ece);
  CHECK(evaluate(fixed).accuracy == evaluate(over).accuracy);
  CHECK(scaled_nll(over, t_over) <= scaled_nll(over, 1.0));
  CHECK(testing::error_code([] { temperature_scale_fit(std::vector<Prediction>{}); }) ==
        ErrorCode::EmptyDev);
}

TEST_CASE("label smoothing") {
  CHECK(label_smooth(1, 3, 0.0) == Distribution::one_hot(3, 1));
  const auto s = label_smooth(0, 2, 0.2);
  CHECK(s[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(0.1).epsilon(1e-15));
  Rng rng(151);
  for (int t = 0; t < 50; ++t) {
    const std::size_t c = 2 + rng.uniform_index(6);
    const auto d = label_smooth(rng.uniform_index(c), c, rng.uniform(0.0, 0.99));
    double sum = 0.0;
    for (double x : d.probs()) sum += x;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK(testing::error_code([] { label_smooth(0, 2, 1.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("contextual calibration") {
  Rng rng(157);
  for (int t = 0; t < 100; ++t) {
    const auto p = testing::random_dist(rng, 4);
    CHECK(testing::max_abs_diff(contextual_calibrate(p, Distribution::uniform(4)).probs(), p.probs()) <= 1e-12);
    const auto u = contextual_calibrate(p, p);
    for (double x : u.probs()) CHECK(x == doctest::Approx(0.25).epsilon(1e-12));
  }
  const auto r = contextual_calibrate(Distribution({0.6, 0.4}), Distribution({0.75, 0.25}));
  CHECK(r[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(r[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(testing::error_code([] {
          contextual_calibrate(Distribution({0.5, 0.5}), Distribution({1.0, 0.0}));
        }) == ErrorCode::ZeroContentFreeProb);
}

TEST_CASE("JSON and CSV exports agree") {
  Rng rng(163);
  const auto r = evaluate(random_preds(rng, 40, 3), 10);
  const auto j = eval_result_json(r);
  CHECK(j["n"] == 40);
  CHECK(j["bins"].size() == 10);
  std::istringstream csv(reliability_csv(r));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "bin_lower,bin_upper,count,mean_conf,acc");
  std::vector<CalibrationBin> parsed;
  while (std::getline(csv, line)) {
    CalibrationBin b;
    char comma;
    std::istringstream row(line);
    row >> b.lower >> comma >> b.upper >> comma >> b.count >> comma >> b.mean_confidence >> comma >>
        b.accuracy;
    parsed.push_back(b);
  }
  REQUIRE(parsed.size() == 10);
  CHECK(ece_from_bins(parsed, r.n) == j["ece"].get<double>());
}
