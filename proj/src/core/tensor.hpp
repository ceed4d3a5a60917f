#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "error.hpp"

namespace udm {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One value in the reverse-mode graph. backward_fn reads this node's grad and
// accumulates into the parents' grads; it receives the node itself so closures
// never capture their own node (that would leak the whole graph).
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

// Value handle over a shared graph node. Copies alias the same storage.
// Rank is at most 4; shape extents are positive. All math is double precision.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return check().shape; }
  int rank() const { return static_cast<int>(check().shape.size()); }
  int64_t extent(int axis) const;
  int64_t numel() const { return check().numel(); }

  double* data() { return check().data.data(); }
  const double* data() const { return check().data.data(); }
  std::vector<double>& vec() { return check().data; }
  const std::vector<double>& vec() const { return check().data; }

  bool requires_grad() const { return check().requires_grad; }
  Tensor& set_requires_grad(bool v);

  bool has_grad() const { return !check().grad.empty(); }
  const std::vector<double>& grad() const;
  double* grad_data();
  void zero_grad();

  // Scalar readout; the tensor must hold exactly one element.
  double item() const;

  // Copy of the values with no graph history.
  Tensor detach() const;

  // Internal graph accessor used by op implementations and tests.
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  detail::Node& check() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return *node_;
  }
  std::shared_ptr<detail::Node> node_;
};

// Topological order over the ancestors of one root, inputs before consumers.
// Each reachable node appears exactly once.
struct Graph {
  std::vector<detail::Node*> order;
  static Graph build(const Tensor& root);
};

// Seeds d(loss)/d(loss) = 1 and runs every recorded backward_fn once in
// reverse topological order. Repeated tensor uses accumulate additively.
void backward(const Tensor& loss);
void backward(const Tensor& loss, const Graph& graph);

bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Integer-valued segmentation mask, row-major, values are class ids.
struct LabelMask {
  int64_t h = 0;
  int64_t w = 0;
  std::vector<uint8_t> ids;

  int64_t numel() const { return h * w; }
};

}  // namespace udm
