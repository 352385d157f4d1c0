#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace n2c2 {

inline constexpr double kDistributionTolerance = 1e-6;

class LabelSpace {
 public:
  LabelSpace() = default;
  explicit LabelSpace(std::vector<std::string> names);

  std::size_t num_classes() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  friend bool operator==(const LabelSpace&, const LabelSpace&) = default;

 private:
  std::vector<std::string> names_;
};

// Probability vector over the label space. Construction validates that the
// entries are finite, non-negative and sum to one within 1e-6.
class Distribution {
 public:
  Distribution() = default;
  explicit Distribution(std::vector<double> probs);

  static Distribution uniform(std::size_t num_classes);
  static Distribution one_hot(std::size_t num_classes, std::size_t index);

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }

  friend bool operator==(const Distribution&, const Distribution&) = default;

 private:
  std::vector<double> probs_;
};

enum class Split { Train, Dev, Test };

std::string to_string(Split split);
Split split_from_string(const std::string& text);

struct View {
  std::vector<double> embedding;
  Distribution base_dist;
  std::optional<Distribution> cf_dist;

  friend bool operator==(const View&, const View&) = default;
};

struct EmbeddingRecord {
  std::string id;
  std::string language;
  Split split = Split::Train;
  std::optional<std::size_t> label;
  std::vector<View> views;

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

// Rescales non-negative weights to sum to one.
Distribution normalize(std::span<const double> weights);

// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> values);
inline std::size_t argmax(const Distribution& dist) { return argmax(dist.probs()); }

// exp(x_i - max x): proportional to exp(x_i) without overflow.
std::vector<double> log_sum_exp_weights(std::span<const double> exponents);

// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

double euclidean_distance(std::span<const double> a, std::span<const double> b);

}  // namespace n2c2
