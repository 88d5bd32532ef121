#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace lenatten {

// Seeded generator with platform-independent draws. std:: distributions are
// implementation-defined, so all sampling is done by hand on the raw engine.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Independent stream for `label`, stable across runs and unaffected by
  // other labels.
  static Rng derive(std::uint64_t seed, std::string_view label);

  std::uint64_t next() { return engine_(); }
  double uniform();                          // [0, 1)
  double uniform(double lo, double hi);      // [lo, hi)
  std::uint64_t below(std::uint64_t n);      // [0, n)
  std::int64_t between(std::int64_t lo, std::int64_t hi);  // [lo, hi] inclusive
  bool bernoulli(double p);

  std::string state() const;
  void set_state(const std::string& state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::string_view label);

}  // namespace lenatten
