#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "dgcount/gradcheck.hpp"
#include "dgcount/ops.hpp"

using namespace dgcount;
using namespace dgcount::gradcheck;

TEST_CASE("element error rule") {
  Tolerance t;
  CHECK(element_error(1.0, 1.0 + 1e-9, t) == 0.0);
  CHECK(element_error(1.0, 1.001, t) == doctest::Approx(0.001 / 1.001));
  CHECK(element_error(0.0, 1e-6, t) == 1.0);
}

TEST_CASE("detects a wrong gradient") {
  auto x = Tensor::from_data({3}, {0.5, -1.0, 2.0}, true);
  ScalarFn f = [](const std::vector<Tensor>& in) { return ops::sum(ops::square(in[0])); };
  CHECK(max_gradient_error(f, {x}) < 1e-6);
  testing::set_backward_fault("square", 1.01);
  CHECK(max_gradient_error(f, {x}) > 1e-3);
  testing::set_backward_fault("");
}

TEST_CASE("every suite passes on a clean build") {
  auto results = run_all(20, 2024);
  std::set<std::string> names;
  for (auto& r : results) {
    INFO(r.name << " max error " << r.max_error);
    CHECK(r.passed);
    CHECK(r.instances == 20);
    names.insert(r.name);
  }
  for (const char* op : {"add", "mul", "matmul", "softmax", "conv2d", "reencode", "rec_loss", "orth_loss",
                         "full_objective"})
    CHECK(names.count(op) == 1);
}

TEST_CASE("fault injection in a backward rule fails its suite") {
  for (const char* op : {"matmul", "conv2d", "softmax", "l2_normalize_rows"}) {
    testing::set_backward_fault(op, 1.01);
    auto results = run_all(3, 1);
    testing::set_backward_fault("");
    bool failed = false;
    for (auto& r : results)
      if (r.name == op) failed = !r.passed;
    CHECK_MESSAGE(failed, op);
  }
}
