#include "tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace udm {

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> data) {
  if (shape.size() > 4) {
    throw ShapeError("tensor rank " + std::to_string(shape.size()) + " exceeds 4");
  }
  for (int64_t e : shape) {
    if (e <= 0) throw ShapeError("non-positive shape extent in " + shape_str(shape));
  }
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  return n;
}

}  // namespace

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> d(static_cast<size_t>(shape_numel(shape)), 0.0);
  return from_data(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> d(static_cast<size_t>(shape_numel(shape)), value);
  return from_data(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  Tensor t;
  t.node_ = new_node(std::move(shape), std::move(data));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_data({1}, {v}, requires_grad);
}

int64_t Tensor::extent(int axis) const {
  const auto& s = check().shape;
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

Tensor& Tensor::set_requires_grad(bool v) {
  check().requires_grad = v;
  return *this;
}

const std::vector<double>& Tensor::grad() const {
  auto& n = check();
  if (n.grad.empty()) throw ContractError("tensor has no gradient");
  return n.grad;
}

double* Tensor::grad_data() {
  auto& n = check();
  n.ensure_grad();
  return n.grad.data();
}

void Tensor::zero_grad() {
  auto& n = check();
  if (!n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

double Tensor::item() const {
  auto& n = check();
  if (n.numel() != 1) {
    throw ContractError("item() requires a single-element tensor, got " + shape_str(n.shape));
  }
  return n.data[0];
}

Tensor Tensor::detach() const {
  auto& n = check();
  return from_data(n.shape, n.data, false);
}

Graph Graph::build(const Tensor& root) {
  Graph g;
  if (!root.defined()) throw ContractError("graph root is undefined");
  std::unordered_set<detail::Node*> done;
  // Iterative DFS; child is emitted after all parents, so g.order is a valid
  // topological order with leaves first.
  struct Frame {
    detail::Node* n;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  detail::Node* r = root.node().get();
  if (!done.count(r)) stack.push_back({r, 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (done.count(f.n)) {
      stack.pop_back();
      continue;
    }
    if (f.next_parent < f.n->parents.size()) {
      detail::Node* p = f.n->parents[f.next_parent++].get();
      if (!done.count(p)) stack.push_back({p, 0});
    } else {
      done.insert(f.n);
      g.order.push_back(f.n);
      stack.pop_back();
    }
  }
  return g;
}

void backward(const Tensor& loss) { backward(loss, Graph::build(loss)); }

void backward(const Tensor& loss, const Graph& graph) {
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got " + shape_str(loss.shape()));
  }
  detail::Node* root = loss.node().get();
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = graph.order.rbegin(); it != graph.order.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->backward_fn) continue;
    if (n->grad.empty()) n->ensure_grad();
    n->backward_fn(*n);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

}  // namespace udm
