#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lenatten/decoding.hpp"
#include "lenatten/rng.hpp"

namespace testing_support {

using namespace lenatten;

// Next-token log-probabilities are a pseudo-random function of the prefix.
// The prefix hash lives in the decoder state so the decoder has to carry it.
inline std::vector<double> toy_log_probs(std::uint64_t hash, std::size_t vocab, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, std::to_string(hash));
  std::vector<double> z(vocab);
  for (auto& x : z) x = rng.uniform(-3, 3);
  const double mx = *std::max_element(z.begin(), z.end());
  double acc = 0;
  for (double x : z) acc += std::exp(x - mx);
  for (auto& x : z) x -= mx + std::log(acc);
  return z;
}

inline std::uint64_t extend_hash(std::uint64_t hash, int token) { return (hash * 31 + static_cast<std::uint64_t>(token) + 1) % 1000003; }

class ToyModel : public StepModel {
 public:
  ToyModel(std::size_t vocab, std::uint64_t seed) : vocab_(vocab), seed_(seed) {}

  DecoderStepState start(RemainingLength r1) override {
    DecoderStepState s;
    s.hidden = tape_.constant({1}, {0.0});
    s.remaining = r1;
    return s;
  }

  StepScores step(const DecoderStepState& state, int prev_id, DecoderStepState& next) override {
    const auto hash = static_cast<std::uint64_t>(state.hidden.item());
    next = state;
    next.step = state.step + 1;
    const auto h = state.step == 1 ? 0 : extend_hash(hash, prev_id);
    next.hidden = tape_.constant({1}, {static_cast<double>(h)});
    return {toy_log_probs(h, vocab_, seed_), {}};
  }

  std::string token(int id) const override { return std::string(static_cast<std::size_t>(id), 'x'); }
  bool count_separator() const override { return true; }

 private:
  std::size_t vocab_;
  std::uint64_t seed_;
  Tape tape_{false};
};

// Prefix-indexed view of the toy model for the exhaustive oracle.
inline std::vector<double> toy_prefix_log_probs(const std::vector<int>& prefix, std::size_t vocab, std::uint64_t seed) {
  std::uint64_t h = 0;
  for (int t : prefix) h = extend_hash(h, t);
  return toy_log_probs(h, vocab, seed);
}

}  // namespace testing_support
