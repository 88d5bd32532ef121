#include "lenatten/length_control.hpp"

#include <algorithm>
#include <cmath>

#include "lenatten/error.hpp"

namespace lenatten {

LengthEmbeddingTable::LengthEmbeddingTable(std::size_t aleph, std::size_t dim) {
  if (aleph < 1) throw ConfigError("aleph must be >= 1");
  if (dim < 2 || dim % 2 != 0) throw ConfigError("length embedding width must be even and >= 2, got " + std::to_string(dim));
  std::vector<double> data(aleph * dim, 0.0);
  for (std::size_t j = 1; j < aleph; ++j) {
    const double pos = static_cast<double>(j);
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double angle = pos / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
      data[j * dim + 2 * i] = std::sin(angle);
      data[j * dim + 2 * i + 1] = std::cos(angle);
    }
  }
  rows_ = Tensor::matrix(aleph, dim, std::move(data));
}

LengthEmbeddingTable build_length_embeddings(std::size_t aleph, std::size_t dim) {
  return LengthEmbeddingTable(aleph, dim);
}

void LenAttenParams::add_to(ParameterSet& params, std::size_t d_attn, std::size_t d_hidden, std::size_t aleph,
                            Rng& rng, double init_range) {
  params.add(kScoreProjection, {d_attn, aleph});
  params.add(kStateProjection, {d_attn, d_hidden});
  params.add(kLengthWeight, {d_attn});
  params.add(kBias, {d_attn});
  for (auto name : {kScoreProjection, kStateProjection, kLengthWeight, kBias}) {
    for (auto& x : params.get(name).data()) x = rng.uniform(-init_range, init_range);
  }
}

RemainingLength::RemainingLength(std::int64_t chars) : chars_(chars) {
  if (chars < 0) throw ConfigError("remaining length must be non-negative, got " + std::to_string(chars));
}

LengthAttention length_attention(Var decoder_state, RemainingLength r, double r_scale, Var table,
                                 const LenAttenVars& p) {
  const double scaled = static_cast<double>(r.chars()) * r_scale;
  if (!std::isfinite(scaled)) throw ContractError("remaining length scale is not finite");
  Var hidden = add(add(matvec(p.state_projection, decoder_state), scale(p.length_weight, scaled)), p.bias);
  Var scores = matvec_t(p.score_projection, tanh(hidden));
  if (scores.size() != table.shape()[0]) {
    throw ShapeError("length scores " + shape_str(scores.shape()) + " vs table " + shape_str(table.shape()));
  }
  Var alpha = softmax(scores);
  return {matvec_t(table, alpha), alpha};
}

RemainingLength init_remaining(std::int64_t desired_length) {
  if (desired_length < 0) throw ConfigError("desired length must be non-negative, got " + std::to_string(desired_length));
  return RemainingLength(desired_length);
}

std::size_t char_length(std::string_view utf8) {
  std::size_t n = 0;
  for (unsigned char c : utf8) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::int64_t token_cost(std::string_view token, bool count_separator, bool first_token) {
  auto cost = static_cast<std::int64_t>(char_length(token));
  if (count_separator && !first_token) ++cost;
  return cost;
}

RemainingLength update_remaining(RemainingLength r, std::string_view token, bool count_separator, bool first_token) {
  const auto next = r.chars() - token_cost(token, count_separator, first_token);
  return RemainingLength(std::max<std::int64_t>(0, next));
}

}  // namespace lenatten
