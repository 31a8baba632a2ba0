#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dgcount/tensor.hpp"

namespace dgcount::gradcheck {

struct Tolerance {
  double eps = 1e-5;        // central difference step
  double rel_tol = 1e-3;
  double abs_floor = 1e-8;  // differences below this pass regardless of scale
};

// Relative error of one analytic/numeric pair, or 0 when the absolute
// difference is under the floor.
double element_error(double analytic, double numeric, const Tolerance& tol);

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Compares analytic gradients of fn at `inputs` (leaves with requires_grad)
// against central differences. Returns the largest element error.
double max_gradient_error(const ScalarFn& fn, const std::vector<Tensor>& inputs,
                          const Tolerance& tol = {});

struct SuiteResult {
  std::string name;
  int instances = 0;
  double max_error = 0.0;
  bool passed = false;
};

// Every primitive op plus the end-to-end objective, each on `instances`
// seeded random inputs.
std::vector<SuiteResult> run_all(int instances = 20, std::uint64_t seed = 2024,
                                 const Tolerance& tol = {});

}  // namespace dgcount::gradcheck
