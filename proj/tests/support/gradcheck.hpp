#pragma once

#include <functional>
#include <string>

#include "lenatten/tensor.hpp"
#include "oracles.hpp"

namespace testing_support {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst;  // "param[index]"
  std::size_t checked = 0;
};

// Builds the loss on a fresh tape via `loss_of`, backpropagates once, then
// compares every parameter entry against a central difference of the same
// loss recomputed on non-recording tapes.
inline GradCheckResult check_gradients(lenatten::ParameterSet& params,
                                       const std::function<lenatten::Var(lenatten::Tape&)>& loss_of,
                                       double h = 1e-5) {
  params.zero_grad();
  {
    lenatten::Tape tape;
    tape.backward(loss_of(tape));
  }
  GradCheckResult result;
  const auto value = [&] {
    lenatten::Tape tape(false);
    return loss_of(tape).item();
  };
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& tensor = params.at(p);
    auto data = tensor.data();
    const auto grad = tensor.grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double numeric = oracle::central_difference(value, data[i], h);
      const double err = oracle::relative_error(grad[i], numeric);
      ++result.checked;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst = params.name(p) + "[" + std::to_string(i) + "] analytic " + std::to_string(grad[i]) +
                       " numeric " + std::to_string(numeric);
      }
    }
  }
  return result;
}

}  // namespace testing_support
