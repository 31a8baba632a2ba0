#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dgcount/errors.hpp"

namespace dgcount {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the differentiation graph. Ids grow monotonically with
// creation, so every parent has a smaller id than its children and a
// descending-id sweep is a valid reverse topological order.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return parents.empty(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

struct Init {
  enum class Kind { kZeros, kConstant, kUniform };
  Kind kind = Kind::kZeros;
  double value = 0.0;  // constant value, or half-width of the uniform range
  std::uint64_t seed = 0;

  static Init zeros() { return {}; }
  static Init constant(double c) { return {Kind::kConstant, c, 0}; }
  static Init uniform(double half_width, std::uint64_t seed) {
    return {Kind::kUniform, half_width, seed};
  }
};

// Dense row-major float64 array with an optional place in a reverse-mode
// graph. Copies are shallow handles to the same node; use clone() for a
// detached deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor create(const Shape& shape, Init init = Init::zeros(),
                       bool requires_grad = false);
  static Tensor from_data(const Shape& shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double item() const;

  // Leaf tensors only; interior values are fixed once computed.
  std::span<double> mutable_data();

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  // Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();
  // Frees the gradient buffer; has_grad() is false afterwards.
  void release_grad();

  bool is_leaf() const { return node_->is_leaf(); }
  std::uint64_t node_id() const { return node_->id; }
  const char* op_name() const { return node_->op; }

  // Deep copy with no graph history.
  Tensor clone(bool requires_grad) const;
  Tensor detach() const { return clone(false); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // Used by operation implementations.
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                            std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// Accumulates d(loss)/d(leaf) into every requires_grad leaf reachable from
// loss. Gradients add to whatever is already stored.
void backward(const Tensor& loss);

// RAII switch that stops graph recording on the current thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

namespace testing {
// Fault injection for the gradient checker: nodes whose op name equals `op`
// see their upstream gradient scaled by `factor` before their backward rule
// runs. An empty name disables the fault.
void set_backward_fault(const std::string& op, double factor = 1.01);
}  // namespace testing

}  // namespace dgcount
