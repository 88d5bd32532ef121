#pragma once

// Length attention unit: a fixed table of length embeddings, attention over
// that table driven by the decoder state and the remaining character budget,
// and the budget recurrence applied after every emitted word.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "lenatten/rng.hpp"
#include "lenatten/tensor.hpp"

namespace lenatten {

// Fixed length embeddings l_1..l_aleph. Row 0 is the zero vector; row j >= 1
// is the sinusoidal position encoding of position j at width `dim`.
class LengthEmbeddingTable {
 public:
  LengthEmbeddingTable(std::size_t aleph, std::size_t dim);

  std::size_t aleph() const noexcept { return rows_.rows(); }
  std::size_t dim() const noexcept { return rows_.cols(); }
  const Tensor& rows() const noexcept { return rows_; }
  double at(std::size_t row, std::size_t col) const { return rows_.at(row, col); }

 private:
  Tensor rows_;
};

LengthEmbeddingTable build_length_embeddings(std::size_t aleph, std::size_t dim);

// Names of the four trainable tensors inside a ParameterSet.
struct LenAttenParams {
  static constexpr const char* kScoreProjection = "lenatten.V";  // [d_attn x aleph]
  static constexpr const char* kStateProjection = "lenatten.W";  // [d_attn x d_hidden]
  static constexpr const char* kLengthWeight = "lenatten.w_r";   // [d_attn]
  static constexpr const char* kBias = "lenatten.b";             // [d_attn]

  static void add_to(ParameterSet& params, std::size_t d_attn, std::size_t d_hidden, std::size_t aleph,
                     Rng& rng, double init_range = 0.08);
};

// The same four tensors bound to one tape.
struct LenAttenVars {
  Var score_projection;
  Var state_projection;
  Var length_weight;
  Var bias;
};

class RemainingLength {
 public:
  constexpr RemainingLength() = default;
  explicit RemainingLength(std::int64_t chars);

  std::int64_t chars() const noexcept { return chars_; }
  bool exhausted() const noexcept { return chars_ == 0; }
  friend bool operator==(RemainingLength, RemainingLength) = default;

 private:
  std::int64_t chars_ = 0;
};

struct LengthAttention {
  Var context;  // c_l, width dim
  Var weights;  // alpha, width aleph
};

// e = V^T tanh(W h + w_r (r * r_scale) + b); alpha = softmax(e); c = sum_j alpha_j l_j.
// `table` must be a constant node holding LengthEmbeddingTable::rows().
LengthAttention length_attention(Var decoder_state, RemainingLength r, double r_scale, Var table,
                                 const LenAttenVars& params);

RemainingLength init_remaining(std::int64_t desired_length);

// Number of Unicode code points in a UTF-8 string.
std::size_t char_length(std::string_view utf8);

// Character cost of emitting `token`: its length, plus one separator unless it
// is the first word of the output.
std::int64_t token_cost(std::string_view token, bool count_separator, bool first_token);

RemainingLength update_remaining(RemainingLength r, std::string_view token, bool count_separator,
                                 bool first_token);

}  // namespace lenatten
