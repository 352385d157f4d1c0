#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace n2c2 {

// Seeded random stream built on MT19937-64, whose output sequence is fixed by
// the C++ standard. The uniform/normal/shuffle transforms are coded here
// instead of using <random> distributions, which differ between standard
// library implementations. Changing any of this is a file-format-level
// change: bump the model format_version.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n), unbiased.
  std::uint64_t uniform_index(std::uint64_t n);
  // Standard normal via Box-Muller; one variate per call.
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace n2c2
