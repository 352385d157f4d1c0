#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "n2c2/confidence.hpp"
#include "n2c2/core.hpp"
#include "n2c2/datastore.hpp"
#include "n2c2/model.hpp"
#include "n2c2/retrieval.hpp"

namespace n2c2 {

// [d_1..d_K; o_1..o_K] for the DWE, padded to 2*k_max like the T features.
std::vector<double> dwe_input(const NeighborSet& ns, std::size_t k_max, double distance_scale = 1.0);

std::vector<double> dwe_logits(std::span<const double> input, const DweNetwork& net);
Distribution dwe_weights(const NeighborSet& ns, const DweNetwork& net, double distance_scale = 1.0);

// weights[0] * p_base + sum_j weights[j] * per_m[j - 1]
Distribution combine(const Distribution& weights, std::span<const Distribution> per_m,
                     const Distribution& p_base);

// Everything about one view that does not depend on CD/DWE parameters.
struct PreparedView {
  std::vector<double> distance;
  std::vector<std::size_t> label;
  std::vector<std::array<double, 2>> c_input;  // [p(y_i | query), p(y_i | x_i)]
  std::vector<std::size_t> m_values;           // top-m used for each nonzero candidate
  std::vector<std::vector<double>> t_input;    // padded T features per nonzero candidate
  std::vector<double> dwe_input;
  Distribution base;
};

// Intermediate values of one forward pass, kept for backpropagation.
struct ViewForward {
  std::vector<double> dwe_hidden;  // tanh activations
  std::vector<double> weights;     // softmax over R_s
  std::vector<std::vector<double>> c_hidden;
  std::vector<double> c_value;
  std::vector<std::vector<double>> t_hidden;
  std::vector<double> t_raw;
  std::vector<double> t_value;
  std::vector<std::vector<double>> share;   // per candidate: normalized exp weight per neighbor
  std::vector<std::vector<double>> per_m;   // per candidate: class distribution
  std::vector<double> combined;
};

// Shapes the view's embedding (when the model has a shaping layer), retrieves
// k_max neighbors and assembles the feature vectors.
PreparedView prepare_view(const View& view, const N2C2Model& model, const Datastore& store);
ViewForward forward_view(const PreparedView& prep, const N2C2Model& model);

struct PredictOptions {
  // Replaces the DWE with a fixed top-m kNN term interpolated with the base
  // distribution.
  bool fixed_k = false;
  std::size_t fixed_m = 8;
  double lambda = 0.5;
};

// Full pipeline for one record, averaged over its views.
Distribution n2c2_predict(const EmbeddingRecord& record, const N2C2Model& model,
                          const Datastore& store, const PredictOptions& options = {});

// Datastore the model retrieves from: its retrieval ids taken from `train`,
// keyed through the model's shaping layer when present.
Datastore model_datastore(const N2C2Model& model, const std::vector<EmbeddingRecord>& train,
                          const LabelSpace& labels);

}  // namespace n2c2
