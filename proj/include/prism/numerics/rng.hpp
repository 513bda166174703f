#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace prism::num {

/// Seeded random stream. Named substreams derived from one root seed are
/// independent, so drawing more from one never shifts another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  static Rng substream(std::uint64_t root_seed, std::string_view name);
  static std::uint64_t derive_seed(std::uint64_t root_seed, std::string_view name);

  double uniform();
  double uniform(double lo, double hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  void fill_normal(std::span<double> out, double mean = 0.0, double stddev = 1.0);
  void fill_uniform(std::span<double> out, double lo, double hi);
  bool bernoulli(double p);
  std::size_t below(std::size_t n);
  void shuffle(std::vector<std::size_t>& items);

  /// Textual engine state for checkpoints.
  std::string state() const;
  void restore(const std::string& state);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace prism::num
