#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cap/tensor.hpp"

namespace cap {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  bool passed = false;
  bool expected_failure = false;  // negative-control fixtures
};

/// Central finite-difference gradient check. `forward` must rebuild the full
/// graph from the current values of `inputs` and return the scalar loss.
/// Analytic gradients come from one backward sweep; the numeric side uses
/// (f(x+eps) - f(x-eps)) / (2 eps) on each coordinate (or a subsample).
GradCheckResult check_gradients(const std::string& name, std::vector<Tensor> inputs,
                                const std::function<Tensor()>& forward, double eps = 1e-5,
                                double tol = 1e-4, int max_coords_per_input = 0,
                                std::uint64_t subsample_seed = 0);

/// Registry of named gradient checks covering every differentiable op plus
/// the composite blocks. Includes one deliberately corrupted fixture that the
/// checker is expected to flag (negative control).
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed);

}  // namespace cap
