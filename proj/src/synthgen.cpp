#include "n2c2/synthgen.hpp"

#include <cmath>
#include <set>

#include "n2c2/error.hpp"
#include "n2c2/rng.hpp"

namespace n2c2 {

void SynthConfig::validate() const {
  if (dim < 1) throw Error(ErrorCode::InvalidArgument, "dim must be positive");
  if (num_classes < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 classes");
  if (shots < 2) throw Error(ErrorCode::InvalidArgument, "shots must be at least 2 to split the train set");
  if (dev_per_class < 1 || test_per_class < 1)
    throw Error(ErrorCode::InvalidArgument, "dev and test sizes must be positive");
  if (languages.empty()) throw Error(ErrorCode::InvalidArgument, "need at least one language");
  if (std::set<std::string>(languages.begin(), languages.end()).size() != languages.size())
    throw Error(ErrorCode::InvalidArgument, "language names must be unique");
  for (const auto& lang : languages)
    if (lang.empty()) throw Error(ErrorCode::InvalidArgument, "empty language name");
  if (!(noise_sigma > 0.0) || !(shift_sigma > 0.0) || !(miscalib_temp > 0.0) ||
      !(base_noise_sigma > 0.0))
    throw Error(ErrorCode::InvalidArgument, "noise, shift, temperature and base noise must be positive");
  if (views_per_record < 1) throw Error(ErrorCode::InvalidArgument, "need at least one view");
}

namespace {

struct World {
  std::vector<std::vector<double>> centroids;
  std::vector<std::vector<double>> offsets;  // per language
  std::vector<double> center;                // mean centroid
};

Distribution base_distribution(const std::vector<double>& x, const World& w, double temp,
                               double base_noise, Rng* rng) {
  std::vector<double> logits(w.centroids.size());
  for (std::size_t c = 0; c < logits.size(); ++c) {
    const double noise = rng ? rng->normal(0.0, base_noise) : 0.0;
    logits[c] = -temp * (euclidean_distance(x, w.centroids[c]) + noise);
  }
  return Distribution(softmax(logits));
}

EmbeddingRecord make_record(const SynthConfig& cfg, const World& w, std::size_t lang,
                            std::size_t label, Split split, std::size_t index, Rng& rng) {
  EmbeddingRecord rec;
  rec.language = cfg.languages[lang];
  rec.split = split;
  rec.id = rec.language + "-" + to_string(split) + "-" + std::to_string(index);
  rec.label = label;

  std::vector<double> latent(cfg.dim);
  for (std::size_t d = 0; d < cfg.dim; ++d)
    latent[d] = w.centroids[label][d] + w.offsets[lang][d] + rng.normal(0.0, cfg.noise_sigma);

  std::vector<double> content_free(cfg.dim);
  for (std::size_t d = 0; d < cfg.dim; ++d) content_free[d] = w.center[d] + w.offsets[lang][d];
  const auto cf = base_distribution(content_free, w, cfg.miscalib_temp, 0.0, nullptr);

  for (std::size_t v = 0; v < cfg.views_per_record; ++v) {
    View view;
    view.embedding = latent;
    // Extra views are jittered copies: each demonstration context moves the
    // representation a little.
    if (cfg.views_per_record > 1)
      for (double& x : view.embedding) x += rng.normal(0.0, 0.5 * cfg.noise_sigma);
    view.base_dist =
        base_distribution(view.embedding, w, cfg.miscalib_temp, cfg.base_noise_sigma, &rng);
    view.cf_dist = cf;
    rec.views.push_back(std::move(view));
  }
  return rec;
}

}  // namespace

SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  World w;
  w.centroids.assign(cfg.num_classes, std::vector<double>(cfg.dim));
  for (auto& c : w.centroids)
    for (double& x : c) x = rng.normal();
  w.center.assign(cfg.dim, 0.0);
  for (const auto& c : w.centroids)
    for (std::size_t d = 0; d < cfg.dim; ++d)
      w.center[d] += c[d] / static_cast<double>(cfg.num_classes);
  w.offsets.assign(cfg.languages.size(), std::vector<double>(cfg.dim, 0.0));
  for (std::size_t l = 1; l < cfg.languages.size(); ++l)
    for (double& x : w.offsets[l]) x = rng.normal(0.0, cfg.shift_sigma);

  std::vector<std::string> names;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) names.push_back("class_" + std::to_string(c));
  const LabelSpace labels(names);

  auto make_set = [&](std::size_t lang, Split split, std::size_t per_class) {
    Dataset ds{labels, cfg.dim, {}};
    std::size_t index = 0;
    for (std::size_t c = 0; c < cfg.num_classes; ++c)
      for (std::size_t s = 0; s < per_class; ++s)
        ds.records.push_back(make_record(cfg, w, lang, c, split, index++, rng));
    return ds;
  };

  SynthData out;
  out.train = make_set(0, Split::Train, cfg.shots);
  out.dev = make_set(0, Split::Dev, cfg.dev_per_class);
  const std::size_t first_target = cfg.languages.size() > 1 ? 1 : 0;
  for (std::size_t l = first_target; l < cfg.languages.size(); ++l)
    out.tests.emplace_back(cfg.languages[l], make_set(l, Split::Test, cfg.test_per_class));
  return out;
}

std::vector<std::filesystem::path> write_synth(const SynthData& data,
                                               const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> paths;
  auto write = [&](const Dataset& ds, const std::string& name) {
    paths.push_back(out_dir / name);
    save_dataset(ds, paths.back());
  };
  write(data.train, "train.jsonl");
  write(data.dev, "dev.jsonl");
  for (const auto& [lang, ds] : data.tests) write(ds, "test_" + lang + ".jsonl");
  return paths;
}

}  // namespace n2c2
