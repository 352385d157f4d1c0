#include "n2c2/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "n2c2/error.hpp"
#include "n2c2/pipeline.hpp"
#include "n2c2/synthgen.hpp"
#include "n2c2/training.hpp"

namespace fs = std::filesystem;

namespace n2c2 {

namespace {

struct TrainFlags {
  TrainConfig train;
  RetrievalConfig retrieval;
  bool no_shaping = false;
};

void add_train_flags(CLI::App& cmd, TrainFlags& f, bool with_k_max = true) {
  cmd.add_option("--tau", f.retrieval.tau, "kNN temperature")->capture_default_str();
  if (with_k_max)
    cmd.add_option("--k-max", f.retrieval.k_max, "largest retrieval size (multiple of 4)")
        ->capture_default_str();
  cmd.add_option("--z", f.train.shaped_dim, "shaped representation size")->capture_default_str();
  cmd.add_option("--lr", f.train.lr, "Adam learning rate")->capture_default_str();
  cmd.add_option("--batch-size", f.train.batch_size)->capture_default_str();
  cmd.add_option("--epochs", f.train.epochs, "epochs per stage")->capture_default_str();
  cmd.add_option("--seed", f.train.seed)->capture_default_str();
  cmd.add_option("--label-smoothing", f.train.label_smoothing, "stage-2 target smoothing")
      ->capture_default_str();
  cmd.add_flag("--no-shaping", f.no_shaping, "retrieve with raw embeddings");
  cmd.add_flag("--freeze-cd", f.train.freeze_cd, "keep the confidence module at initialization");
  cmd.add_flag("--freeze-dwe", f.train.freeze_dwe, "keep the DWE network at initialization");
  cmd.add_flag("--normalize-distances", f.train.normalize_distances,
               "divide T/DWE distance features by the mean update-half distance");
}

TrainConfig resolved(const TrainFlags& f, std::size_t bins) {
  TrainConfig cfg = f.train;
  cfg.shape = !f.no_shaping;
  cfg.num_bins = bins;
  return cfg;
}

// Train and dev files merged into one record list.
struct Corpus {
  LabelSpace labels;
  std::vector<EmbeddingRecord> records;
};

Corpus load_corpus(const std::vector<std::string>& paths) {
  Corpus c;
  bool first = true;
  for (const auto& p : paths) {
    auto ds = load_dataset(p);
    if (first) {
      c.labels = ds.labels;
      first = false;
    } else if (!(ds.labels == c.labels)) {
      throw Error(ErrorCode::LabelSpaceMismatch, p + " uses a different label space");
    }
    std::move(ds.records.begin(), ds.records.end(), std::back_inserter(c.records));
  }
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

// Expands `--config file.json` into flags placed before the explicit ones;
// flags given on the command line win.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  auto it = std::find(args.begin(), args.end(), "--config");
  if (it == args.end()) return args;
  if (it + 1 == args.end()) throw Error(ErrorCode::InvalidArgument, "--config needs a path");
  const std::string path = *(it + 1);
  args.erase(it, it + 2);

  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::ParseError, path + ": config must be a JSON object");

  auto given = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
  };
  auto scalar = [](const nlohmann::json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
  };
  std::vector<std::string> injected;
  for (const auto& [key, value] : j.items()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    if (given(flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) injected.push_back(flag);
    } else if (value.is_array()) {
      injected.push_back(flag);
      for (const auto& v : value) injected.push_back(scalar(v));
    } else {
      injected.push_back(flag);
      injected.push_back(scalar(value));
    }
  }
  const auto insert_at = args.empty() ? args.begin() : args.begin() + 1;  // after the subcommand
  args.insert(insert_at, injected.begin(), injected.end());
  return args;
}

N2C2Model train_logged(const Corpus& corpus, const TrainConfig& cfg, const RetrievalConfig& rcfg,
                       std::ostream& out) {
  return train_n2c2(corpus.records, corpus.labels, cfg, rcfg,
                    [&](const EpochLog& log) { out << format_epoch_log(log) << '\n'; });
}

N2C2Model ablated(const N2C2Model& model, Variant v) {
  switch (v) {
    case Variant::NoCd: return without_cd(model);
    case Variant::RawRepr: {
      N2C2Model raw = model;
      raw.shaping.reset();
      raw.hyper.shaped_dim = 0;
      return raw;
    }
    default: return model;
  }
}

std::string fmt_pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * x);
  return buf;
}

void print_report_line(std::ostream& out, const std::string& name, const LanguageReport& r) {
  out << name << ": accuracy " << fmt_pct(r.mean_accuracy) << "% / ECE " << fmt_pct(r.mean_ece)
      << "%";
  for (const auto& [lang, e] : r.per_language)
    out << "  [" << lang << " " << fmt_pct(e.accuracy) << "/" << fmt_pct(e.ece) << "]";
  out << '\n';
}

}  // namespace

int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"N2C2: kNN-augmented calibration for few-shot cross-lingual classification", "n2c2"};
  app.require_subcommand(1);
  app.footer(
      "Every subcommand also accepts --config FILE.json: a flat JSON object of flag names to "
      "values. Flags given on the command line override the file.");

  // synth
  SynthConfig synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "write a seeded synthetic benchmark");
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--shots", synth.shots, "train records per class")->capture_default_str();
  synth_cmd->add_option("--classes", synth.num_classes)->capture_default_str();
  synth_cmd->add_option("--dim", synth.dim)->capture_default_str();
  synth_cmd->add_option("--langs", synth.languages, "languages, source first")
      ->delimiter(',')
      ->capture_default_str();
  synth_cmd->add_option("--noise-sigma", synth.noise_sigma)->capture_default_str();
  synth_cmd->add_option("--shift-sigma", synth.shift_sigma)->capture_default_str();
  synth_cmd->add_option("--miscalib-temp", synth.miscalib_temp)->capture_default_str();
  synth_cmd->add_option("--base-noise", synth.base_noise_sigma)->capture_default_str();
  synth_cmd->add_option("--views", synth.views_per_record)->capture_default_str();
  synth_cmd->add_option("--dev-per-class", synth.dev_per_class)->capture_default_str();
  synth_cmd->add_option("--test-per-class", synth.test_per_class)->capture_default_str();
  synth_cmd->add_option("--out-dir", synth_out)->required();

  // train
  TrainFlags train_flags;
  std::string train_path, dev_path, train_out, model_name = "model.json";
  std::size_t train_bins = kDefaultBins;
  auto* train_cmd = app.add_subcommand("train", "two-stage training");
  train_cmd->add_option("--train", train_path)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--dev", dev_path)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out-dir", train_out)->required();
  train_cmd->add_option("--model-name", model_name)->capture_default_str();
  train_cmd->add_option("--bins", train_bins)->capture_default_str();
  add_train_flags(*train_cmd, train_flags);

  // predict / evaluate share model + data flags
  std::string model_path, eval_train, eval_dev, eval_out, method = "n2c2", calibration = "none";
  std::vector<std::string> test_paths;
  std::size_t bins = kDefaultBins, threads = 1;

  auto* predict_cmd = app.add_subcommand("predict", "write per-record predictions");
  auto* eval_cmd = app.add_subcommand("evaluate", "accuracy/ECE per language");
  for (auto* cmd : {predict_cmd, eval_cmd}) {
    cmd->add_option("--model", model_path, "model file (method n2c2)");
    cmd->add_option("--train", eval_train, "train file holding the datastore records");
    cmd->add_option("--test", test_paths, "test files")->required();
    cmd->add_option("--out-dir", eval_out)->required();
    cmd->add_option("--method", method, "n2c2 or base")
        ->check(CLI::IsMember({"n2c2", "base"}))
        ->capture_default_str();
    cmd->add_option("--threads", threads)->capture_default_str();
  }
  eval_cmd->add_option("--calibration", calibration, "none, ts (temperature scaling) or cc")
      ->check(CLI::IsMember({"none", "ts", "cc"}))
      ->capture_default_str();
  eval_cmd->add_option("--dev", eval_dev, "dev file for temperature scaling");
  eval_cmd->add_option("--bins", bins)->capture_default_str();

  // ablate
  TrainFlags ablate_flags;
  std::string abl_model, abl_train, abl_dev, abl_out;
  std::vector<std::string> abl_tests;
  bool no_cd = false, raw_repr = false, no_dwe = false, retrain = false;
  double lambda = 0.5;
  std::size_t fixed_m = 8, abl_bins = kDefaultBins, abl_threads = 1;
  auto* ablate_cmd = app.add_subcommand("ablate", "component ablations");
  ablate_cmd->add_option("--model", abl_model, "trained model (not needed with --retrain)");
  ablate_cmd->add_option("--train", abl_train)->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--dev", abl_dev, "dev file (needed with --retrain)");
  ablate_cmd->add_option("--test", abl_tests)->required();
  ablate_cmd->add_option("--out-dir", abl_out)->required();
  ablate_cmd->add_flag("--no-cd", no_cd, "without the confidence module");
  ablate_cmd->add_flag("--raw-repr", raw_repr, "without representation shaping");
  ablate_cmd->add_flag("--no-dwe", no_dwe, "fixed top-m interpolated with the base model");
  ablate_cmd->add_flag("--retrain", retrain, "train a separate model per variant");
  ablate_cmd->add_option("--lambda", lambda, "interpolation weight of the base model (no-dwe)")
      ->capture_default_str();
  ablate_cmd->add_option("--fixed-m", fixed_m, "neighbors used by no-dwe")->capture_default_str();
  ablate_cmd->add_option("--bins", abl_bins)->capture_default_str();
  ablate_cmd->add_option("--threads", abl_threads)->capture_default_str();
  add_train_flags(*ablate_cmd, ablate_flags);

  // sweep
  TrainFlags sweep_flags;
  std::string sw_train, sw_dev, sw_out;
  std::vector<std::string> sw_tests;
  std::vector<std::size_t> sw_kmax;
  std::size_t sw_bins = kDefaultBins;
  auto* sweep_cmd = app.add_subcommand("sweep", "retrain and evaluate over K_max values");
  sweep_cmd->add_option("--values", sw_kmax, "K_max values, e.g. 4,8,12,16")
      ->required()
      ->delimiter(',');
  sweep_cmd->add_option("--train", sw_train)->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--dev", sw_dev)->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--test", sw_tests)->required();
  sweep_cmd->add_option("--out-dir", sw_out)->required();
  sweep_cmd->add_option("--bins", sw_bins)->capture_default_str();
  add_train_flags(*sweep_cmd, sweep_flags, false);

  try {
    args = expand_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*synth_cmd) {
      const auto paths = write_synth(generate(synth), synth_out);
      for (const auto& p : paths) out << "wrote " << p.string() << '\n';
      return 0;
    }

    if (*train_cmd) {
      fs::create_directories(train_out);
      const auto corpus = load_corpus({train_path, dev_path});
      const auto model =
          train_logged(corpus, resolved(train_flags, train_bins), train_flags.retrieval, out);
      save_model(model, fs::path(train_out) / model_name);
      return 0;
    }

    if (*predict_cmd || *eval_cmd) {
      fs::create_directories(eval_out);
      const auto tests = load_corpus(test_paths);
      std::optional<N2C2Model> model;
      std::optional<Datastore> store;
      if (method == "n2c2") {
        if (model_path.empty() || eval_train.empty())
          throw Error(ErrorCode::InvalidArgument, "method n2c2 needs --model and --train");
        model = load_model(model_path);
        const auto train = load_corpus({eval_train});
        store = model_datastore(*model, train.records, train.labels);
        if (!(tests.labels == train.labels))
          throw Error(ErrorCode::LabelSpaceMismatch, "test and train label spaces differ");
      }
      const bool cc = *eval_cmd && calibration == "cc";
      if (cc && method != "base")
        throw Error(ErrorCode::InvalidArgument, "contextual calibration applies to --method base");
      auto run = [&](const std::vector<EmbeddingRecord>& recs) {
        return model ? predict_all(recs, *model, *store, {}, threads) : predict_base(recs, cc);
      };
      auto dists = run(tests.records);

      if (*predict_cmd) {
        std::ostringstream lines;
        for (std::size_t i = 0; i < dists.size(); ++i) {
          const auto& r = tests.records[i];
          nlohmann::json j = {{"id", r.id},
                              {"lang", r.language},
                              {"probs", std::vector<double>(dists[i].probs().begin(),
                                                            dists[i].probs().end())},
                              {"pred", argmax(dists[i])},
                              {"label", r.label ? nlohmann::json(*r.label) : nlohmann::json()}};
          lines << j.dump() << '\n';
        }
        write_text(fs::path(eval_out) / "predictions.jsonl", lines.str());
        out << "wrote " << (fs::path(eval_out) / "predictions.jsonl").string() << '\n';
        return 0;
      }

      std::optional<double> fitted_t;
      if (calibration == "ts") {
        if (eval_dev.empty()) throw Error(ErrorCode::EmptyDev, "--calibration ts needs --dev");
        const auto dev = load_corpus({eval_dev});
        fitted_t = temperature_scale_fit(with_gold(dev.records, run(dev.records)));
        for (auto& d : dists) d = temperature_scale(d, *fitted_t);
      }
      const auto report = evaluate_by_language(tests.records, dists, bins);
      auto j = report_json(report);
      j["method"] = method;
      j["calibration"] = calibration;
      if (fitted_t) j["temperature"] = *fitted_t;
      write_text(fs::path(eval_out) / "metrics.json", j.dump(1) + "\n");
      write_text(fs::path(eval_out) / "reliability.csv", reliability_csv(report.pooled));
      for (const auto& [lang, r] : report.per_language)
        write_text(fs::path(eval_out) / ("reliability_" + lang + ".csv"), reliability_csv(r));
      print_report_line(out, method, report);
      return 0;
    }

    if (*ablate_cmd) {
      fs::create_directories(abl_out);
      std::vector<Variant> variants;
      if (no_cd) variants.push_back(Variant::NoCd);
      if (raw_repr) variants.push_back(Variant::RawRepr);
      if (no_dwe) variants.push_back(Variant::NoDwe);
      if (variants.empty()) variants = {Variant::NoCd, Variant::RawRepr, Variant::NoDwe};
      const auto tests = load_corpus(abl_tests);
      const auto train_only = load_corpus({abl_train});

      std::optional<Corpus> corpus;
      if (retrain) {
        if (abl_dev.empty()) throw Error(ErrorCode::EmptyDev, "--retrain needs --dev");
        corpus = load_corpus({abl_train, abl_dev});
      } else if (abl_model.empty()) {
        throw Error(ErrorCode::InvalidArgument, "ablate needs --model or --retrain");
      }
      const TrainConfig base_cfg = resolved(ablate_flags, abl_bins);
      std::ostringstream quiet;
      auto model_for = [&](Variant v) -> N2C2Model {
        if (!retrain) return ablated(load_model(abl_model), v);
        TrainConfig cfg = base_cfg;
        if (v == Variant::NoCd) cfg.freeze_cd = true;
        if (v == Variant::RawRepr) cfg.shape = false;
        if (v == Variant::NoDwe) cfg.freeze_dwe = true;
        auto m = train_logged(*corpus, cfg, ablate_flags.retrieval, quiet);
        return v == Variant::NoCd ? without_cd(m) : m;
      };

      nlohmann::json result = nlohmann::json::object();
      variants.insert(variants.begin(), Variant::Full);
      for (Variant v : variants) {
        const auto model = model_for(v);
        const auto store = model_datastore(model, train_only.records, train_only.labels);
        PredictOptions opts;
        if (v == Variant::NoDwe) {
          opts.fixed_k = true;
          opts.fixed_m = fixed_m;
          opts.lambda = lambda;
        }
        const auto report = evaluate_by_language(
            tests.records, predict_all(tests.records, model, store, opts, abl_threads), abl_bins);
        result[to_string(v)] = report_json(report);
        print_report_line(out, to_string(v), report);
      }
      write_text(fs::path(abl_out) / "ablation.json", result.dump(1) + "\n");
      return 0;
    }

    if (*sweep_cmd) {
      fs::create_directories(sw_out);
      const auto corpus = load_corpus({sw_train, sw_dev});
      const auto train_only = load_corpus({sw_train});
      const auto tests = load_corpus(sw_tests);
      std::ostringstream csv;
      csv << "k_max,effective_k_max,accuracy,ece,train_seconds,infer_ms_per_example\n";
      std::ostringstream quiet;
      for (std::size_t k : sw_kmax) {
        if (k < 4) throw Error(ErrorCode::InvalidArgument, "K_max values must be at least 4");
        RetrievalConfig rcfg = sweep_flags.retrieval;
        rcfg.k_max = k;
        const auto t0 = std::chrono::steady_clock::now();
        const auto model = train_logged(corpus, resolved(sweep_flags, sw_bins), rcfg, quiet);
        const auto t1 = std::chrono::steady_clock::now();
        if (model.hyper.k_max != k)
          err << "warning: K_max " << k << " capped to " << model.hyper.k_max
              << " by the datastore size\n";
        const auto store = model_datastore(model, train_only.records, train_only.labels);
        const auto dists = predict_all(tests.records, model, store);
        const auto t2 = std::chrono::steady_clock::now();
        const auto report = evaluate_by_language(tests.records, dists, sw_bins);
        const double train_s = std::chrono::duration<double>(t1 - t0).count();
        const double infer_ms = std::chrono::duration<double, std::milli>(t2 - t1).count() /
                                static_cast<double>(tests.records.size());
        char row[200];
        std::snprintf(row, sizeof row, "%zu,%zu,%.17g,%.17g,%.6f,%.6f\n", k, model.hyper.k_max,
                      report.mean_accuracy, report.mean_ece, train_s, infer_ms);
        csv << row;
        out << "k_max " << k << ": accuracy " << fmt_pct(report.mean_accuracy) << "% / ECE "
            << fmt_pct(report.mean_ece) << "%, train " << train_s << " s, inference " << infer_ms
            << " ms/example\n";
      }
      write_text(fs::path(sw_out) / "sweep.csv", csv.str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: " << msg << '\n';
    return 1;
  }
  return 1;
}

}  // namespace n2c2
