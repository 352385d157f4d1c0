#include "n2c2/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "n2c2/error.hpp"
#include "n2c2/metrics.hpp"

namespace n2c2 {

void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size())
    throw Error(ErrorCode::ShapeMismatch, "parameter and gradient lists differ in length");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match parameters");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grads[t].size() || state.m[t].size() != params[t].size())
      throw Error(ErrorCode::ShapeMismatch, "tensor " + std::to_string(t) + " shape mismatch");
    for (double g : grads[t])
      if (!std::isfinite(g)) throw Error(ErrorCode::NonFinite, "gradient");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double g = grads[k][i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      params[k][i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
  if (shaped_dim < 1) throw Error(ErrorCode::InvalidArgument, "Z must be positive");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0))
    throw Error(ErrorCode::InvalidArgument, "label smoothing must lie in [0, 1)");
  if (num_bins < 1) throw Error(ErrorCode::InvalidArgument, "num_bins must be positive");
}

std::string format_epoch_log(const EpochLog& log) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%zu,%s,%.6f,%.6f,%.6f", log.epoch, log.stage.c_str(),
                log.train_loss, log.dev_acc, log.dev_ece);
  return buf;
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  return batches;
}

std::vector<EmbeddingRecord> dev_records(const std::vector<EmbeddingRecord>& records) {
  auto dev = records_with_split(records, Split::Dev);
  if (dev.empty()) throw Error(ErrorCode::EmptyDev, "checkpoint selection needs dev records");
  for (const auto& r : dev)
    if (!r.label) throw Error(ErrorCode::MissingLabel, "dev record '" + r.id + "'");
  return dev;
}

EvalResult knn_dev_eval(const std::vector<EmbeddingRecord>& dev, const Datastore& shaped_store,
                        const ShapingLayer& layer, double tau, std::size_t k, std::size_t bins) {
  std::vector<Prediction> preds;
  preds.reserve(dev.size());
  for (const auto& rec : dev) {
    std::vector<Distribution> per_view;
    for (const auto& view : rec.views) {
      const auto ns = search(layer.apply(view.embedding), shaped_store, k);
      per_view.push_back(knn_distribution(ns, shaped_store.num_classes(), tau, ns.size()));
    }
    preds.push_back({ensemble_average(per_view), *rec.label});
  }
  return evaluate(preds, bins);
}

std::vector<std::span<double>> stage2_params(N2C2Model& model, bool freeze_cd, bool freeze_dwe) {
  std::vector<std::span<double>> out;
  if (!freeze_cd) {
    auto& cd = model.confidence;
    out.insert(out.end(), {cd.w1.values(), cd.w2.values(), cd.w3.values(), cd.w4.values()});
  }
  if (!freeze_dwe) {
    auto& d = model.dwe;
    out.insert(out.end(), {d.layer1.values(), std::span<double>(d.bias1), d.layer2.values(),
                           std::span<double>(d.bias2)});
  }
  return out;
}

std::vector<std::span<const double>> stage2_grads(const Stage2Gradients& g, bool freeze_cd,
                                                  bool freeze_dwe) {
  std::vector<std::span<const double>> out;
  if (!freeze_cd) {
    const auto& cd = g.confidence;
    out.insert(out.end(), {cd.w1.values(), cd.w2.values(), cd.w3.values(), cd.w4.values()});
  }
  if (!freeze_dwe) {
    const auto& d = g.dwe;
    out.insert(out.end(), {d.layer1.values(), std::span<const double>(d.bias1), d.layer2.values(),
                           std::span<const double>(d.bias2)});
  }
  return out;
}

// Backpropagates dL/d(combined) of one view into `grads`.
void backward_view(const PreparedView& prep, const ViewForward& fw, const N2C2Model& model,
                   std::span<const double> d_combined, Stage2Gradients& grads) {
  const auto& cd = model.confidence;
  const auto& dwe = model.dwe;
  const double tau = model.hyper.tau;
  const std::size_t num_classes = d_combined.size();
  const std::size_t candidates = prep.m_values.size();

  // Mixture weights and their softmax.
  std::vector<double> d_weight(candidates + 1, 0.0);
  for (std::size_t y = 0; y < num_classes; ++y) d_weight[0] += d_combined[y] * prep.base[y];
  for (std::size_t j = 0; j < candidates; ++j)
    for (std::size_t y = 0; y < num_classes; ++y) d_weight[j + 1] += d_combined[y] * fw.per_m[j][y];
  double mean = 0.0;
  for (std::size_t k = 0; k <= candidates; ++k) mean += fw.weights[k] * d_weight[k];
  std::vector<double> d_logit(candidates + 1);
  for (std::size_t k = 0; k <= candidates; ++k) d_logit[k] = fw.weights[k] * (d_weight[k] - mean);

  grads.dwe.layer2.add_outer(d_logit, fw.dwe_hidden);
  for (std::size_t k = 0; k <= candidates; ++k) grads.dwe.bias2[k] += d_logit[k];
  auto d_hidden = dwe.layer2.multiply_transposed(d_logit);
  for (std::size_t h = 0; h < d_hidden.size(); ++h) {
    d_hidden[h] *= 1.0 - fw.dwe_hidden[h] * fw.dwe_hidden[h];
    grads.dwe.bias1[h] += d_hidden[h];
  }
  grads.dwe.layer1.add_outer(d_hidden, prep.dwe_input);

  // Per-candidate kNN terms.
  std::vector<double> d_bias(prep.distance.size(), 0.0);
  for (std::size_t j = 0; j < candidates; ++j) {
    const std::size_t m = prep.m_values[j];
    const double w = fw.weights[j + 1];
    double expected = 0.0;
    for (std::size_t y = 0; y < num_classes; ++y) expected += d_combined[y] * w * fw.per_m[j][y];
    const double temperature = fw.t_value[j];
    double d_temperature = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double d_exponent = fw.share[j][i] * (d_combined[prep.label[i]] * w - expected);
      d_bias[i] += d_exponent;
      d_temperature += d_exponent * prep.distance[i] / (tau * temperature * temperature);
    }
    const double d_raw = d_temperature * sigmoid(fw.t_raw[j]);
    if (d_raw == 0.0) continue;
    const double d_raw_arr[1] = {d_raw};
    grads.confidence.w1.add_outer(d_raw_arr, fw.t_hidden[j]);
    std::vector<double> d_pre(cd.hidden());
    for (std::size_t h = 0; h < d_pre.size(); ++h)
      d_pre[h] = d_raw * cd.w1(0, h) * (1.0 - fw.t_hidden[j][h] * fw.t_hidden[j][h]);
    grads.confidence.w2.add_outer(d_pre, prep.t_input[j]);
  }

  // Per-neighbor biases.
  std::vector<double> d_pre(cd.hidden());
  for (std::size_t i = 0; i < d_bias.size(); ++i) {
    if (d_bias[i] == 0.0) continue;
    const double d_bias_arr[1] = {d_bias[i]};
    grads.confidence.w3.add_outer(d_bias_arr, fw.c_hidden[i]);
    for (std::size_t h = 0; h < d_pre.size(); ++h)
      d_pre[h] = d_bias[i] * cd.w3(0, h) * (1.0 - fw.c_hidden[i][h] * fw.c_hidden[i][h]);
    grads.confidence.w4.add_outer(d_pre, prep.c_input[i]);
  }
}

EvalResult stage2_dev_eval(const N2C2Model& model, std::span<const PreparedRecord> dev,
                           std::size_t bins) {
  std::vector<Prediction> preds;
  preds.reserve(dev.size());
  for (const auto& rec : dev) {
    std::vector<Distribution> per_view;
    for (const auto& v : rec.views) per_view.emplace_back(forward_view(v, model).combined);
    preds.push_back({ensemble_average(per_view), rec.gold});
  }
  return evaluate(preds, bins);
}

}  // namespace

ShapingLayer train_shaping(const std::vector<EmbeddingRecord>& records, const LabelSpace& labels,
                           const SplitPlan& split, const TrainConfig& cfg,
                           const RetrievalConfig& rcfg, Rng& rng, const EpochCallback& on_epoch) {
  cfg.validate();
  rcfg.validate();
  const auto dev = dev_records(records);
  const Datastore raw_store = build_datastore(records, split.retrieval_ids, labels);
  if (raw_store.empty()) throw Error(ErrorCode::Degenerate, "retrieval half is empty");
  const std::size_t k = std::min(rcfg.k_max, raw_store.size());

  std::vector<LabeledQuery> queries;
  for (const auto& rec : select_records(records, split.update_ids))
    for (const auto& view : rec.views) queries.push_back({view.embedding, *rec.label});
  if (queries.empty()) throw Error(ErrorCode::Degenerate, "update half is empty");

  ShapingLayer layer = ShapingLayer::xavier(raw_store.dim(), cfg.shaped_dim, rng);
  ShapingLayer best = layer;
  double best_acc =
      knn_dev_eval(dev, shape_datastore(raw_store, layer), layer, rcfg.tau, k, cfg.num_bins).accuracy;

  AdamState state;
  const auto adam = cfg.adam();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (const auto& batch_idx : make_batches(queries.size(), cfg.batch_size, rng)) {
      std::vector<LabeledQuery> batch;
      batch.reserve(batch_idx.size());
      for (auto i : batch_idx) batch.push_back(queries[i]);
      const auto res = shaping_loss(layer, batch, raw_store, rcfg.tau, k);
      epoch_loss += res.loss * static_cast<double>(batch.size());
      const std::span<double> params[] = {layer.weight().values(), std::span<double>(layer.bias())};
      const std::span<const double> grads[] = {res.grad_weight.values(),
                                               std::span<const double>(res.grad_bias)};
      adam_step(params, grads, state, adam);
    }
    epoch_loss /= static_cast<double>(queries.size());
    if (!std::isfinite(epoch_loss))
      throw Error(ErrorCode::NonFinite, "shaping loss diverged at epoch " + std::to_string(epoch));

    const auto eval = knn_dev_eval(dev, shape_datastore(raw_store, layer), layer, rcfg.tau, k,
                                   cfg.num_bins);
    if (on_epoch) on_epoch({epoch, "shaping", epoch_loss, eval.accuracy, eval.ece});
    if (eval.accuracy > best_acc) {
      best_acc = eval.accuracy;
      best = layer;
    }
  }
  return best;
}

PreparedRecord prepare_record(const EmbeddingRecord& record, const N2C2Model& model,
                              const Datastore& store, double label_smoothing) {
  if (!record.label) throw Error(ErrorCode::MissingLabel, "record '" + record.id + "'");
  PreparedRecord out;
  out.gold = *record.label;
  out.target = label_smooth(out.gold, model.num_classes(), label_smoothing);
  for (const auto& view : record.views) out.views.push_back(prepare_view(view, model, store));
  return out;
}

Stage2Result stage2_loss(const N2C2Model& model, std::span<const PreparedRecord> batch) {
  if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "empty batch");
  Stage2Result result;
  result.grads.confidence =
      ConfidenceModule::zeros(model.confidence.k_max(), model.confidence.hidden());
  result.grads.dwe =
      DweNetwork::zeros(model.dwe.k_max(), model.dwe.num_candidates(), model.dwe.hidden());
  const std::size_t num_classes = model.num_classes();
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  for (const auto& rec : batch) {
    std::vector<ViewForward> forwards;
    std::vector<double> p(num_classes, 0.0);
    const double inv_views = 1.0 / static_cast<double>(rec.views.size());
    for (const auto& v : rec.views) {
      forwards.push_back(forward_view(v, model));
      for (std::size_t y = 0; y < num_classes; ++y) p[y] += forwards.back().combined[y] * inv_views;
    }
    std::vector<double> d_combined(num_classes, 0.0);
    for (std::size_t y = 0; y < num_classes; ++y) {
      const double t = rec.target[y];
      if (t == 0.0) continue;
      if (p[y] < kProbabilityFloor) {
        result.loss -= t * std::log(kProbabilityFloor) * inv_batch;
      } else {
        result.loss -= t * std::log(p[y]) * inv_batch;
        d_combined[y] = -t / p[y] * inv_views * inv_batch;
      }
    }
    for (std::size_t v = 0; v < rec.views.size(); ++v)
      backward_view(rec.views[v], forwards[v], model, d_combined, result.grads);
  }
  if (!std::isfinite(result.loss)) throw Error(ErrorCode::NonFinite, "stage-2 loss");
  return result;
}

N2C2Model train_cd_dwe(const std::vector<EmbeddingRecord>& records, const LabelSpace& labels,
                       N2C2Model model, const TrainConfig& cfg, Rng& rng,
                       const EpochCallback& on_epoch) {
  cfg.validate();
  model.validate();
  const auto dev = dev_records(records);
  const Datastore store = model_datastore(model, records, labels);

  std::vector<std::string> update_ids;
  {
    std::vector<std::string> sorted_retrieval = model.retrieval_ids;
    std::sort(sorted_retrieval.begin(), sorted_retrieval.end());
    for (const auto& r : records)
      if (r.split == Split::Train &&
          !std::binary_search(sorted_retrieval.begin(), sorted_retrieval.end(), r.id))
        update_ids.push_back(r.id);
  }
  if (update_ids.empty()) throw Error(ErrorCode::Degenerate, "update half is empty");
  const auto update = select_records(records, update_ids);

  if (cfg.normalize_distances) {
    model.hyper.distance_scale = 1.0;
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& rec : update)
      for (const auto& view : rec.views) {
        const auto prep = prepare_view(view, model, store);
        for (double d : prep.distance) sum += d;
        count += prep.distance.size();
      }
    if (count > 0 && sum > 0.0) model.hyper.distance_scale = sum / static_cast<double>(count);
  }

  std::vector<PreparedRecord> train_set;
  for (const auto& rec : update)
    train_set.push_back(prepare_record(rec, model, store, cfg.label_smoothing));
  std::vector<PreparedRecord> dev_set;
  for (const auto& rec : dev) dev_set.push_back(prepare_record(rec, model, store));

  N2C2Model best = model;
  double best_acc = stage2_dev_eval(model, dev_set, cfg.num_bins).accuracy;
  AdamState state;
  const auto adam = cfg.adam();
  const bool frozen = cfg.freeze_cd && cfg.freeze_dwe;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (const auto& batch_idx : make_batches(train_set.size(), cfg.batch_size, rng)) {
      std::vector<PreparedRecord> batch;
      batch.reserve(batch_idx.size());
      for (auto i : batch_idx) batch.push_back(train_set[i]);
      const auto res = stage2_loss(model, batch);
      epoch_loss += res.loss * static_cast<double>(batch.size());
      if (frozen) continue;
      const auto params = stage2_params(model, cfg.freeze_cd, cfg.freeze_dwe);
      const auto grads = stage2_grads(res.grads, cfg.freeze_cd, cfg.freeze_dwe);
      adam_step(params, grads, state, adam);
    }
    epoch_loss /= static_cast<double>(train_set.size());
    if (!std::isfinite(epoch_loss))
      throw Error(ErrorCode::NonFinite, "stage-2 loss diverged at epoch " + std::to_string(epoch));

    const auto eval = stage2_dev_eval(model, dev_set, cfg.num_bins);
    if (on_epoch) on_epoch({epoch, "cd_dwe", epoch_loss, eval.accuracy, eval.ece});
    if (eval.accuracy > best_acc) {
      best_acc = eval.accuracy;
      best = model;
    }
  }
  return best;
}

N2C2Model initial_model(const LabelSpace& labels, std::size_t input_dim,
                        std::optional<ShapingLayer> shaping, const SplitPlan& split,
                        std::size_t retrieval_entries, const RetrievalConfig& rcfg,
                        std::uint64_t seed, Rng& rng) {
  N2C2Model model;
  auto& h = model.hyper;
  h.tau = rcfg.tau;
  h.candidate_sizes = candidate_sizes(rcfg.k_max, retrieval_entries);
  // k_max beyond the datastore is capped to the largest usable candidate size.
  h.k_max = h.candidate_sizes.back();
  h.input_dim = input_dim;
  h.shaped_dim = shaping ? shaping->output_dim() : 0;
  h.classes = labels.names();
  h.seed = seed;
  h.hidden = kHiddenSize;
  model.shaping = std::move(shaping);
  model.confidence = ConfidenceModule::initialize(h.k_max, rng, h.hidden);
  model.dwe = DweNetwork::initialize(h.k_max, h.candidate_sizes.size(), rng, h.hidden);
  model.retrieval_ids = split.retrieval_ids;
  model.validate();
  return model;
}

N2C2Model train_n2c2(const std::vector<EmbeddingRecord>& records, const LabelSpace& labels,
                     const TrainConfig& cfg, const RetrievalConfig& rcfg,
                     const EpochCallback& on_epoch) {
  cfg.validate();
  rcfg.validate();
  Rng rng(cfg.seed);
  const auto train = records_with_split(records, Split::Train);
  if (train.empty()) throw Error(ErrorCode::EmptyDataset, "no train records");
  const SplitPlan split = make_split(train, labels.num_classes(), rng);
  const std::size_t input_dim = train.front().views.front().embedding.size();

  std::optional<ShapingLayer> shaping;
  if (cfg.shape) shaping = train_shaping(records, labels, split, cfg, rcfg, rng, on_epoch);

  std::size_t entries = 0;
  for (const auto& r : select_records(train, split.retrieval_ids)) entries += r.views.size();
  N2C2Model model =
      initial_model(labels, input_dim, std::move(shaping), split, entries, rcfg, cfg.seed, rng);
  return train_cd_dwe(records, labels, std::move(model), cfg, rng, on_epoch);
}

}  // namespace n2c2
