#include "n2c2/datastore.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "n2c2/error.hpp"
#include "n2c2/shaping.hpp"

namespace n2c2 {

using nlohmann::json;

namespace {

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

std::vector<double> parse_vector(const json& j, std::size_t line, const char* what) {
  if (!j.is_array()) throw Error(ErrorCode::ParseError, at_line(line) + what + " is not an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw Error(ErrorCode::ParseError, at_line(line) + what + " has a non-number");
    out.push_back(x.get<double>());
  }
  return out;
}

Distribution parse_distribution(const json& j, std::size_t num_classes, std::size_t line,
                                const char* what) {
  auto probs = parse_vector(j, line, what);
  if (probs.size() != num_classes)
    throw Error(ErrorCode::DimMismatch, at_line(line) + what + " has " +
                                            std::to_string(probs.size()) + " entries, expected " +
                                            std::to_string(num_classes));
  try {
    return Distribution(std::move(probs));
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, at_line(line) + what + ": " + e.what());
  }
}

EmbeddingRecord parse_record(const json& j, const Dataset& ds, std::size_t line) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, at_line(line) + "record is not an object");
  EmbeddingRecord rec;
  try {
    rec.id = j.at("id").get<std::string>();
    rec.language = j.at("lang").get<std::string>();
    rec.split = split_from_string(j.at("split").get<std::string>());
    const auto& label = j.at("label");
    if (!label.is_null()) {
      if (!label.is_number_integer() || label.get<long long>() < 0)
        throw Error(ErrorCode::ParseError, at_line(line) + "label must be a non-negative integer");
      rec.label = label.get<std::size_t>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, at_line(line) + e.what());
  }
  const std::size_t num_classes = ds.labels.num_classes();
  if (rec.label && *rec.label >= num_classes)
    throw Error(ErrorCode::ParseError, at_line(line) + "label out of range");
  if (!rec.label && rec.split != Split::Test)
    throw Error(ErrorCode::MissingLabel, at_line(line) + "record '" + rec.id + "' has no label");

  const auto views = j.find("views");
  if (views == j.end() || !views->is_array() || views->empty())
    throw Error(ErrorCode::ParseError, at_line(line) + "record needs a non-empty views array");
  for (const auto& v : *views) {
    if (!v.is_object()) throw Error(ErrorCode::ParseError, at_line(line) + "view is not an object");
    View view;
    if (!v.contains("embedding") || !v.contains("base_dist"))
      throw Error(ErrorCode::ParseError, at_line(line) + "view needs embedding and base_dist");
    view.embedding = parse_vector(v.at("embedding"), line, "embedding");
    if (view.embedding.size() != ds.dim)
      throw Error(ErrorCode::DimMismatch, at_line(line) + "embedding has dimension " +
                                              std::to_string(view.embedding.size()) +
                                              ", header says " + std::to_string(ds.dim));
    for (double x : view.embedding)
      if (!std::isfinite(x)) throw Error(ErrorCode::NonFinite, at_line(line) + "embedding value");
    view.base_dist = parse_distribution(v.at("base_dist"), num_classes, line, "base_dist");
    if (auto cf = v.find("cf_dist"); cf != v.end() && !cf->is_null())
      view.cf_dist = parse_distribution(*cf, num_classes, line, "cf_dist");
    rec.views.push_back(std::move(view));
  }
  return rec;
}

}  // namespace

Dataset read_dataset(std::istream& in) {
  Dataset ds;
  std::string text;
  std::size_t line = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::ParseError, at_line(line) + e.what());
    }
    if (!have_header) {
      try {
        if (j.at("type").get<std::string>() != "header")
          throw Error(ErrorCode::ParseError, at_line(line) + "first line must be the header");
        const int version = j.at("format_version").get<int>();
        if (version != kDatasetFormatVersion)
          throw Error(ErrorCode::VersionMismatch,
                      "dataset format_version " + std::to_string(version) + " is not supported");
        ds.dim = j.at("dim").get<std::size_t>();
        ds.labels = LabelSpace(j.at("classes").get<std::vector<std::string>>());
      } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, at_line(line) + e.what());
      }
      if (ds.dim == 0) throw Error(ErrorCode::ParseError, at_line(line) + "dim must be positive");
      have_header = true;
      continue;
    }
    ds.records.push_back(parse_record(j, ds, line));
  }
  if (!have_header) throw Error(ErrorCode::EmptyDataset, "missing header line");
  if (ds.records.empty()) throw Error(ErrorCode::EmptyDataset, "dataset has no records");
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  try {
    return read_dataset(in);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_dataset(const Dataset& dataset, std::ostream& out) {
  json header = {{"type", "header"},
                 {"dim", dataset.dim},
                 {"classes", dataset.labels.names()},
                 {"format_version", kDatasetFormatVersion}};
  out << header.dump() << '\n';
  for (const auto& rec : dataset.records) {
    json views = json::array();
    for (const auto& v : rec.views) {
      json jv = {{"embedding", v.embedding},
                 {"base_dist", std::vector<double>(v.base_dist.probs().begin(),
                                                   v.base_dist.probs().end())}};
      if (v.cf_dist)
        jv["cf_dist"] = std::vector<double>(v.cf_dist->probs().begin(), v.cf_dist->probs().end());
      else
        jv["cf_dist"] = nullptr;
      views.push_back(std::move(jv));
    }
    json j = {{"id", rec.id},
              {"lang", rec.language},
              {"split", to_string(rec.split)},
              {"label", rec.label ? json(*rec.label) : json(nullptr)},
              {"views", std::move(views)}};
    out << j.dump() << '\n';
  }
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_dataset(dataset, out);
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

Datastore::Datastore(LabelSpace labels, std::size_t dim, std::vector<DatastoreEntry> entries,
                     bool shaped)
    : labels_(std::move(labels)), dim_(dim), entries_(std::move(entries)), shaped_(shaped) {
  for (const auto& e : entries_) {
    if (e.key.size() != dim_)
      throw Error(ErrorCode::DimMismatch, "datastore entry '" + e.id + "' has wrong key dimension");
    if (e.label >= labels_.num_classes())
      throw Error(ErrorCode::InvalidArgument, "datastore entry '" + e.id + "' label out of range");
    for (double x : e.key)
      if (!std::isfinite(x)) throw Error(ErrorCode::NonFinite, "datastore key '" + e.id + "'");
  }
}

SplitPlan make_split(const std::vector<EmbeddingRecord>& records, std::size_t num_classes, Rng& rng) {
  std::vector<std::vector<std::string>> by_class(num_classes);
  for (const auto& rec : records) {
    if (rec.split != Split::Train) continue;
    if (!rec.label) throw Error(ErrorCode::MissingLabel, "train record '" + rec.id + "'");
    if (*rec.label >= num_classes) throw Error(ErrorCode::InvalidArgument, "label out of range");
    by_class[*rec.label].push_back(rec.id);
  }
  SplitPlan plan;
  bool extra_to_retrieval = true;
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& ids = by_class[c];
    if (ids.size() < 2)
      throw Error(ErrorCode::Degenerate, "class " + std::to_string(c) + " has " +
                                             std::to_string(ids.size()) +
                                             " train records, need at least 2");
    rng.shuffle(ids);
    std::size_t half = ids.size() / 2;
    if (ids.size() % 2 == 1) {
      if (extra_to_retrieval) ++half;
      extra_to_retrieval = !extra_to_retrieval;
    }
    plan.retrieval_ids.insert(plan.retrieval_ids.end(), ids.begin(), ids.begin() + half);
    plan.update_ids.insert(plan.update_ids.end(), ids.begin() + half, ids.end());
  }
  return plan;
}

std::vector<EmbeddingRecord> select_records(const std::vector<EmbeddingRecord>& records,
                                            const std::vector<std::string>& ids) {
  std::unordered_map<std::string, const EmbeddingRecord*> index;
  for (const auto& r : records) index.emplace(r.id, &r);
  std::vector<EmbeddingRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw Error(ErrorCode::UnknownId, "no record with id '" + id + "'");
    out.push_back(*it->second);
  }
  return out;
}

std::vector<EmbeddingRecord> records_with_split(const std::vector<EmbeddingRecord>& records,
                                                Split split) {
  std::vector<EmbeddingRecord> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(r);
  return out;
}

Datastore build_datastore(const std::vector<EmbeddingRecord>& records,
                          const std::vector<std::string>& ids, const LabelSpace& labels,
                          const ShapingLayer* shaper) {
  std::vector<DatastoreEntry> entries;
  std::size_t dim = shaper ? shaper->output_dim() : 0;
  for (const auto& rec : select_records(records, ids)) {
    if (!rec.label) throw Error(ErrorCode::MissingLabel, "record '" + rec.id + "' has no label");
    for (const auto& view : rec.views) {
      DatastoreEntry e;
      e.key = shaper ? shaper->apply(view.embedding) : view.embedding;
      if (!shaper) {
        if (dim == 0) dim = e.key.size();
        if (e.key.size() != dim) throw Error(ErrorCode::DimMismatch, "record '" + rec.id + "'");
      }
      e.label = *rec.label;
      if (e.label >= labels.num_classes() || view.base_dist.size() != labels.num_classes())
        throw Error(ErrorCode::LabelSpaceMismatch, "record '" + rec.id + "'");
      e.self_prob = view.base_dist[e.label];
      e.id = rec.id;
      entries.push_back(std::move(e));
    }
  }
  return Datastore(labels, dim, std::move(entries), shaper != nullptr);
}

}  // namespace n2c2
