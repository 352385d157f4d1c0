#include "n2c2/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "n2c2/error.hpp"

namespace n2c2 {

using nlohmann::json;

namespace {

void fill_xavier(Matrix& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (double& x : m.values()) x = rng.uniform(-limit, limit);
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const char* name) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw Error(ErrorCode::ParseError, std::string(name) + " must be a non-empty nested array");
  const std::size_t cols = j.front().size();
  Matrix m(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      throw Error(ErrorCode::DimInconsistency, std::string(name) + " has ragged rows");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

std::vector<std::size_t> candidate_sizes(std::size_t k_max, std::size_t store_size) {
  if (k_max < 4 || k_max % 4 != 0)
    throw Error(ErrorCode::InvalidArgument, "k_max must be a positive multiple of 4");
  std::vector<std::size_t> sizes{0};
  for (std::size_t m = 4; m <= k_max && m <= store_size; m += 4) sizes.push_back(m);
  if (sizes.size() < 2)
    throw Error(ErrorCode::Degenerate, "datastore holds fewer than 4 entries");
  return sizes;
}

DweNetwork DweNetwork::zeros(std::size_t k_max, std::size_t num_candidates, std::size_t hidden) {
  if (k_max == 0 || num_candidates == 0 || hidden == 0)
    throw Error(ErrorCode::InvalidArgument, "empty DWE network");
  return {Matrix(hidden, 2 * k_max), std::vector<double>(hidden, 0.0),
          Matrix(num_candidates, hidden), std::vector<double>(num_candidates, 0.0)};
}

DweNetwork DweNetwork::initialize(std::size_t k_max, std::size_t num_candidates, Rng& rng,
                                  std::size_t hidden) {
  auto net = zeros(k_max, num_candidates, hidden);
  fill_xavier(net.layer1, rng);
  return net;
}

void DweNetwork::validate() const {
  const std::size_t h = layer1.rows();
  if (h == 0 || layer1.cols() == 0 || layer1.cols() % 2 != 0 || bias1.size() != h ||
      layer2.cols() != h || layer2.rows() == 0 || bias2.size() != layer2.rows())
    throw Error(ErrorCode::DimInconsistency, "DWE matrices have inconsistent shapes");
  if (!layer1.all_finite() || !layer2.all_finite())
    throw Error(ErrorCode::NonFinite, "DWE weights");
}

void N2C2Model::validate() const {
  const auto& h = hyper;
  if (h.classes.size() < 2) throw Error(ErrorCode::DimInconsistency, "model needs >= 2 classes");
  if (!(h.tau > 0.0)) throw Error(ErrorCode::DimInconsistency, "tau must be positive");
  if (!(h.distance_scale > 0.0))
    throw Error(ErrorCode::DimInconsistency, "distance_scale must be positive");
  if (h.candidate_sizes.size() < 2 || h.candidate_sizes.front() != 0)
    throw Error(ErrorCode::DimInconsistency, "candidate sizes must start at 0 and include a k > 0");
  for (std::size_t i = 1; i < h.candidate_sizes.size(); ++i)
    if (h.candidate_sizes[i] != 4 * i || h.candidate_sizes[i] > h.k_max)
      throw Error(ErrorCode::DimInconsistency, "candidate sizes must be 0, 4, 8, ... <= k_max");
  confidence.validate();
  dwe.validate();
  if (confidence.k_max() != h.k_max || confidence.hidden() != h.hidden)
    throw Error(ErrorCode::DimInconsistency, "confidence module does not match k_max/hidden");
  if (dwe.k_max() != h.k_max || dwe.hidden() != h.hidden ||
      dwe.num_candidates() != h.candidate_sizes.size())
    throw Error(ErrorCode::DimInconsistency, "DWE network does not match k_max/hidden/R_s");
  if (shaping) {
    if (shaping->input_dim() != h.input_dim || shaping->output_dim() != h.shaped_dim)
      throw Error(ErrorCode::DimInconsistency, "shaping layer does not match H/Z");
  } else if (h.shaped_dim != 0) {
    throw Error(ErrorCode::DimInconsistency, "Z given but no shaping layer");
  }
}

std::string model_to_json(const N2C2Model& model) {
  model.validate();
  const auto& h = model.hyper;
  json j;
  j["format_version"] = kModelFormatVersion;
  j["hyper"] = {{"tau", h.tau},
                {"k_max", h.k_max},
                {"r_s", h.candidate_sizes},
                {"H", h.input_dim},
                {"Z", h.shaped_dim},
                {"num_classes", h.classes.size()},
                {"classes", h.classes},
                {"seed", h.seed},
                {"hidden", h.hidden},
                {"distance_scale", h.distance_scale}};
  if (model.shaping)
    j["shaping"] = {{"W", matrix_to_json(model.shaping->weight())}, {"b", model.shaping->bias()}};
  else
    j["shaping"] = nullptr;
  const auto& cd = model.confidence;
  j["confidence"] = {{"W1", matrix_to_json(cd.w1)},
                     {"W2", matrix_to_json(cd.w2)},
                     {"W3", matrix_to_json(cd.w3)},
                     {"W4", matrix_to_json(cd.w4)}};
  j["dwe"] = {{"layer1", matrix_to_json(model.dwe.layer1)},
              {"bias1", model.dwe.bias1},
              {"layer2", matrix_to_json(model.dwe.layer2)},
              {"bias2", model.dwe.bias2}};
  j["retrieval_ids"] = model.retrieval_ids;
  return j.dump(1) + "\n";
}

N2C2Model model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  N2C2Model model;
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw Error(ErrorCode::VersionMismatch,
                  "model format_version " + std::to_string(version) + " is not supported");
    const auto& h = j.at("hyper");
    auto& hp = model.hyper;
    hp.tau = h.at("tau").get<double>();
    hp.k_max = h.at("k_max").get<std::size_t>();
    hp.candidate_sizes = h.at("r_s").get<std::vector<std::size_t>>();
    hp.input_dim = h.at("H").get<std::size_t>();
    hp.shaped_dim = h.at("Z").get<std::size_t>();
    hp.classes = h.at("classes").get<std::vector<std::string>>();
    hp.seed = h.at("seed").get<std::uint64_t>();
    hp.hidden = h.at("hidden").get<std::size_t>();
    hp.distance_scale = h.at("distance_scale").get<double>();
    if (h.at("num_classes").get<std::size_t>() != hp.classes.size())
      throw Error(ErrorCode::DimInconsistency, "num_classes disagrees with classes");

    const auto& s = j.at("shaping");
    if (!s.is_null())
      model.shaping = ShapingLayer(matrix_from_json(s.at("W"), "W"),
                                   s.at("b").get<std::vector<double>>());
    const auto& c = j.at("confidence");
    model.confidence = {matrix_from_json(c.at("W1"), "W1"), matrix_from_json(c.at("W2"), "W2"),
                        matrix_from_json(c.at("W3"), "W3"), matrix_from_json(c.at("W4"), "W4")};
    const auto& d = j.at("dwe");
    model.dwe = {matrix_from_json(d.at("layer1"), "layer1"),
                 d.at("bias1").get<std::vector<double>>(),
                 matrix_from_json(d.at("layer2"), "layer2"),
                 d.at("bias2").get<std::vector<double>>()};
    model.retrieval_ids = j.at("retrieval_ids").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  model.validate();
  return model;
}

void save_model(const N2C2Model& model, const std::filesystem::path& path) {
  const auto text = model_to_json(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

N2C2Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open model file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return model_from_json(buffer.str());
}

}  // namespace n2c2
