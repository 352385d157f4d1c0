#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "n2c2/metrics.hpp"
#include "n2c2/retrieval.hpp"
#include "n2c2/shaping.hpp"
#include "n2c2/synthgen.hpp"
#include "n2c2/training.hpp"

using namespace n2c2;

namespace {

std::vector<EmbeddingRecord> synth_records(const SynthConfig& cfg, LabelSpace& labels) {
  auto data = generate(cfg);
  labels = data.train.labels;
  auto records = data.train.records;
  records.insert(records.end(), data.dev.records.begin(), data.dev.records.end());
  return records;
}

double retrieval_accuracy(const std::vector<EmbeddingRecord>& records, const LabelSpace& labels,
                          const SplitPlan& split, const ShapingLayer& layer, std::size_t k) {
  const auto store = build_datastore(records, split.retrieval_ids, labels, &layer);
  std::vector<Prediction> preds;
  for (const auto& r : records_with_split(records, Split::Dev)) {
    const auto ns = search(layer.apply(r.views[0].embedding), store, k);
    preds.push_back({knn_distribution(ns, labels.num_classes(), 5.0, ns.size()), *r.label});
  }
  return evaluate(preds).accuracy;
}

}  // namespace

TEST_CASE("adam step") {
  std::vector<double> x{0.0};
  const std::vector<double> g{1.0};
  AdamState state;
  const std::span<double> p[] = {x};
  const std::span<const double> gr[] = {g};
  adam_step(p, gr, state, {});
  CHECK(x[0] == doctest::Approx(-0.001).epsilon(1e-9));
  CHECK(state.step == 1);

  std::vector<double> y{0.5, -2.0};
  const std::vector<double> zero{0.0, 0.0};
  AdamState s2;
  const std::span<double> py[] = {y};
  const std::span<const double> pz[] = {zero};
  for (int i = 0; i < 5; ++i) adam_step(py, pz, s2, {});
  CHECK(y == std::vector<double>{0.5, -2.0});

  auto run = [] {
    std::vector<double> w{1.0, 2.0};
    AdamState s;
    Rng rng(9);
    for (int i = 0; i < 50; ++i) {
      std::vector<double> grad{rng.normal(), rng.normal()};
      const std::span<double> pw[] = {w};
      const std::span<const double> pg[] = {grad};
      adam_step(pw, pg, s, {});
    }
    return w;
  };
  CHECK(run() == run());

  const std::vector<double> short_grad{1.0};
  std::vector<double> two{0.0, 0.0};
  AdamState s3;
  const std::span<double> p2[] = {two};
  const std::span<const double> g1[] = {short_grad};
  CHECK(testing::error_code([&] { adam_step(p2, g1, s3, {}); }) == ErrorCode::ShapeMismatch);
  const std::vector<double> nan_grad{std::nan(""), 0.0};
  const std::span<const double> gn[] = {nan_grad};
  CHECK(testing::error_code([&] { adam_step(p2, gn, s3, {}); }) == ErrorCode::NonFinite);
}

TEST_CASE("stage-2 gradients match central differences") {
  Rng rng(109);
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t dim = 3 + rng.uniform_index(4), c = 2 + rng.uniform_index(3);
    auto store_records = testing::random_records(rng, 6 + rng.uniform_index(6), dim, c, 1 + trial % 2);
    auto model = testing::random_model(rng, dim, trial % 2 ? 3 : 0, c, 8, store_records);
    model.hyper.distance_scale = rng.uniform(0.5, 2.0);
    const auto store = model_datastore(model, store_records, testing::labels_of(c));
    std::vector<PreparedRecord> batch;
    for (const auto& q : testing::random_records(rng, 6, dim, c, 1 + trial % 2, "q"))
      batch.push_back(prepare_record(q, model, store, trial % 3 == 0 ? 0.1 : 0.0));
    const auto res = stage2_loss(model, batch);
    auto loss = [&] { return stage2_loss(model, batch).loss; };
    auto& g = res.grads;
    CHECK(oracle::gradient_error(model.confidence.w1.values(), g.confidence.w1.values(), loss) < 1e-4);
    CHECK(oracle::gradient_error(model.confidence.w2.values(), g.confidence.w2.values(), loss) < 1e-4);
    CHECK(oracle::gradient_error(model.confidence.w3.values(), g.confidence.w3.values(), loss) < 1e-4);
    CHECK(oracle::gradient_error(model.confidence.w4.values(), g.confidence.w4.values(), loss) < 1e-4);
    CHECK(oracle::gradient_error(model.dwe.layer1.values(), g.dwe.layer1.values(), loss) < 1e-4);
    CHECK(oracle::gradient_error(model.dwe.bias1, g.dwe.bias1, loss) < 1e-4);
    CHECK(oracle::gradient_error(model.dwe.layer2.values(), g.dwe.layer2.values(), loss) < 1e-4);
    CHECK(oracle::gradient_error(model.dwe.bias2, g.dwe.bias2, loss) < 1e-4);
  }
}

TEST_CASE("every stage-2 parameter influences the loss") {
  Rng rng(113);
  auto store_records = testing::random_records(rng, 10, 4, 3);
  auto model = testing::random_model(rng, 4, 0, 3, 8, store_records);
  const auto store = model_datastore(model, store_records, testing::labels_of(3));
  std::vector<PreparedRecord> batch;
  for (const auto& q : testing::random_records(rng, 6, 4, 3, 1, "q"))
    batch.push_back(prepare_record(q, model, store));
  const double base = stage2_loss(model, batch).loss;
  auto probe = [&](std::span<double> values) {
    for (int t = 0; t < 5; ++t) {
      const std::size_t i = rng.uniform_index(values.size());
      const double keep = values[i];
      values[i] += 1e-3;
      const double moved = stage2_loss(model, batch).loss;
      values[i] = keep;
      CHECK(moved != base);
    }
  };
  probe(model.confidence.w1.values());
  probe(model.confidence.w2.values());
  probe(model.confidence.w3.values());
  probe(model.confidence.w4.values());
  probe(model.dwe.layer1.values());
  probe(model.dwe.bias1);
  probe(model.dwe.layer2.values());
  probe(model.dwe.bias2);
}

TEST_CASE("train_shaping") {
  SynthConfig sc;
  sc.seed = 1;
  sc.dim = 32;
  sc.noise_sigma = 1.0;
  LabelSpace labels;
  const auto records = synth_records(sc, labels);
  const auto train = records_with_split(records, Split::Train);
  TrainConfig cfg;
  cfg.shaped_dim = 2;
  cfg.lr = 1e-2;
  cfg.epochs = 30;
  RetrievalConfig rcfg;
  Rng split_rng(1);
  const auto split = make_split(train, labels.num_classes(), split_rng);

  Rng r0(5), r1(5), r2(5);
  TrainConfig zero = cfg;
  zero.epochs = 0;
  const auto init = train_shaping(records, labels, split, zero, rcfg, r0);
  std::vector<EpochLog> logs;
  const auto trained = train_shaping(records, labels, split, cfg, rcfg, r1,
                                     [&](const EpochLog& l) { logs.push_back(l); });
  const auto again = train_shaping(records, labels, split, cfg, rcfg, r2);
  CHECK(trained == again);
  CHECK(logs.size() == 30);

  Rng check(5);
  CHECK(init == ShapingLayer::xavier(32, 2, check));
  const double before = retrieval_accuracy(records, labels, split, init, 16);
  const double after = retrieval_accuracy(records, labels, split, trained, 16);
  MESSAGE("dev retrieval accuracy " << before << " -> " << after);
  CHECK(after >= before + 0.10);
  double best = 0.0;
  for (const auto& l : logs) {
    CHECK(std::isfinite(l.train_loss));
    best = std::max(best, l.dev_acc);
  }
  CHECK(after == doctest::Approx(std::max(best, before)));
}

TEST_CASE("train_n2c2 end to end") {
  SynthConfig sc;
  LabelSpace labels;
  const auto records = synth_records(sc, labels);
  TrainConfig cfg;
  RetrievalConfig rcfg;
  std::vector<EpochLog> logs;
  const auto model = train_n2c2(records, labels, cfg, rcfg, [&](const EpochLog& l) { logs.push_back(l); });
  CHECK(logs.size() == 20);
  CHECK(logs.front().stage == "shaping");
  CHECK(logs.back().stage == "cd_dwe");
  CHECK(model.hyper.k_max == 16);
  CHECK(model.hyper.candidate_sizes == std::vector<std::size_t>{0, 4, 8, 12, 16});
  CHECK(model.retrieval_ids.size() == 32);
  CHECK(model == train_n2c2(records, labels, cfg, rcfg));
  CHECK(format_epoch_log(logs[0]).rfind("1,shaping,", 0) == 0);

  // Zero epochs return the initialization: zero W1/W3, uniform DWE weights.
  TrainConfig none = cfg;
  none.epochs = 0;
  const auto init = train_n2c2(records, labels, none, rcfg);
  for (double x : init.confidence.w1.values()) CHECK(x == 0.0);
  for (double x : init.confidence.w3.values()) CHECK(x == 0.0);
  for (double x : init.dwe.layer2.values()) CHECK(x == 0.0);

  // Checkpoint selection never loses dev accuracy against the initialization.
  TrainConfig strong = cfg;
  strong.lr = 1e-2;
  strong.epochs = 30;
  std::vector<EpochLog> stage2;
  const auto trained = train_n2c2(records, labels, strong, rcfg, [&](const EpochLog& l) {
    if (l.stage == "cd_dwe") stage2.push_back(l);
  });
  CHECK(stage2.size() == 30);
  for (const auto& l : stage2) CHECK(std::isfinite(l.train_loss));

  auto dev_eval = [&](const N2C2Model& m) {
    const auto store = model_datastore(m, records, labels);
    std::vector<Prediction> preds;
    for (const auto& r : records_with_split(records, Split::Dev))
      preds.push_back({n2c2_predict(r, m, store), *r.label});
    return evaluate(preds);
  };
  double best = 0.0;
  for (const auto& l : stage2) best = std::max(best, l.dev_acc);
  const auto final_eval = dev_eval(trained);
  CHECK(final_eval.accuracy >= best - 1e-12);
}

TEST_CASE("small stores cap K_max") {
  SynthConfig sc;
  sc.shots = 4;
  LabelSpace labels;
  const auto records = synth_records(sc, labels);
  TrainConfig cfg;
  cfg.epochs = 1;
  RetrievalConfig rcfg;
  const auto model = train_n2c2(records, labels, cfg, rcfg);
  CHECK(model.hyper.k_max == 8);
  CHECK(model.dwe.num_candidates() == 3);
}

TEST_CASE("training configuration validation") {
  TrainConfig cfg;
  cfg.lr = 0.0;
  CHECK(testing::error_code([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
  cfg = {};
  cfg.batch_size = 0;
  CHECK(testing::error_code([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
  cfg = {};
  cfg.label_smoothing = 1.0;
  CHECK(testing::error_code([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
  RetrievalConfig rcfg;
  rcfg.k_max = 6;
  SynthConfig sc;
  LabelSpace labels;
  const auto records = synth_records(sc, labels);
  CHECK(testing::error_code([&] { train_n2c2(records, labels, {}, rcfg); }) ==
        ErrorCode::InvalidArgument);
}
