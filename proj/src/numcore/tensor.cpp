#include "lumos/numcore/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace lumos {

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string dtype_name(DType dtype) { return dtype == DType::f32 ? "float32" : "float64"; }

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(const Shape& shape, DType dtype) {
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->dtype = dtype;
  return node;
}

template <class T>
void check_finite(const char* op, const std::vector<T>& v) {
  for (const T x : v) {
    if (!std::isfinite(x)) {
      throw NonFiniteError(std::string("non-finite value produced by ") + op);
    }
  }
}

template <class T>
Tensor make_result_impl(const char* op, Shape shape, std::vector<T>&& values,
                        const std::vector<Tensor>& inputs, std::function<void(detail::Node&)> fn) {
  if (values.size() != numel_of(shape)) {
    throw std::logic_error(std::string(op) + ": value count does not match shape " +
                           shape_str(shape));
  }
  check_finite(op, values);
  auto node = new_node(shape, dtype_of<T>());
  node->template values<T>() = std::move(values);
  if (g_grad_enabled) {
    bool any = false;
    for (const Tensor& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (const Tensor& in : inputs) node->parents.push_back(in.node_ptr());
      node->backward = std::move(fn);
    }
  }
  return Tensor(std::move(node));
}

}  // namespace

Tensor Tensor::zeros(const Shape& shape, DType dtype) { return full(shape, 0.0, dtype); }

Tensor Tensor::full(const Shape& shape, double value, DType dtype) {
  auto node = new_node(shape, dtype);
  dispatch(dtype, [&]<class T>() { node->values<T>().assign(numel_of(shape), static_cast<T>(value)); });
  return Tensor(std::move(node));
}

Tensor Tensor::from_vector(const Shape& shape, std::vector<float> values) {
  if (values.size() != numel_of(shape)) {
    throw ShapeError("from_vector: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  }
  auto node = new_node(shape, DType::f32);
  node->f32 = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::from_vector(const Shape& shape, std::vector<double> values) {
  if (values.size() != numel_of(shape)) {
    throw ShapeError("from_vector: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  }
  auto node = new_node(shape, DType::f64);
  node->f64 = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::from_values(const Shape& shape, std::span<const double> values, DType dtype) {
  if (values.size() != numel_of(shape)) {
    throw ShapeError("from_values: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  }
  auto node = new_node(shape, dtype);
  dispatch(dtype, [&]<class T>() { node->values<T>().assign(values.begin(), values.end()); });
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, DType dtype) { return full({}, value, dtype); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape()));
  }
  return shape()[axis];
}

std::size_t Tensor::numel() const { return numel_of(shape()); }

std::vector<double> Tensor::to_vector() const {
  return dispatch(dtype(), [&]<class T>() {
    const auto& v = node().values<T>();
    return std::vector<double>(v.begin(), v.end());
  });
}

double Tensor::at(std::size_t i) const {
  if (i >= numel()) throw std::out_of_range("Tensor::at");
  return dispatch(dtype(), [&]<class T>() { return static_cast<double>(node().values<T>()[i]); });
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return at(0);
}

Tensor Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("tensor has no gradient");
  auto out = new_node(shape(), dtype());
  dispatch(dtype(), [&]<class T>() { out->values<T>() = node().grad<T>(); });
  return Tensor(std::move(out));
}

void Tensor::zero_grad() {
  detail::Node& n = node();
  n.has_grad = false;
  n.grad_f32.clear();
  n.grad_f32.shrink_to_fit();
  n.grad_f64.clear();
  n.grad_f64.shrink_to_fit();
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node().parents.empty()) throw std::logic_error("set_requires_grad on a non-leaf tensor");
  node().requires_grad = on;
  if (!on) zero_grad();
  return *this;
}

Tensor Tensor::detach() const {
  auto out = new_node(shape(), dtype());
  out->f32 = node().f32;
  out->f64 = node().f64;
  return Tensor(std::move(out));
}

Tensor Tensor::to(DType target) const {
  auto out = new_node(shape(), target);
  dispatch(dtype(), [&]<class S>() {
    const auto& src = node().values<S>();
    dispatch(target, [&]<class D>() { out->values<D>().assign(src.begin(), src.end()); });
  });
  return Tensor(std::move(out));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; reversed, it is a valid reverse-topological order.
  // `order` owns the nodes: clearing a node's parents may drop the last other
  // reference to them.
  std::vector<std::shared_ptr<detail::Node>> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(loss.node_ptr(), 0);
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      std::shared_ptr<detail::Node> parent = node->parents[next++];
      if (parent->requires_grad && seen.insert(parent.get()).second) {
        stack.emplace_back(std::move(parent), 0);
      }
    } else {
      order.push_back(std::move(node));
      stack.pop_back();
    }
  }

  dispatch(loss.dtype(), [&]<class T>() { loss.node().grad_buffer<T>()[0] += T(1); });
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = it->get();
    if (!node->backward) continue;  // leaf
    if (node->has_grad) node->backward(*node);
    // Release interior state as soon as it has been propagated.
    node->backward = nullptr;
    node->parents.clear();
    node->has_grad = false;
    node->grad_f32 = {};
    node->grad_f64 = {};
  }
}

namespace detail {

Tensor make_result(const char* op, Shape shape, std::vector<float>&& values,
                   const std::vector<Tensor>& inputs, std::function<void(Node&)> fn) {
  return make_result_impl<float>(op, std::move(shape), std::move(values), inputs, std::move(fn));
}

Tensor make_result(const char* op, Shape shape, std::vector<double>&& values,
                   const std::vector<Tensor>& inputs, std::function<void(Node&)> fn) {
  return make_result_impl<double>(op, std::move(shape), std::move(values), inputs, std::move(fn));
}

void require_same_dtype(const char* op, const Tensor& a, const Tensor& b) {
  if (a.dtype() != b.dtype()) {
    throw ShapeError(std::string(op) + ": dtype mismatch " + dtype_name(a.dtype()) + " vs " +
                     dtype_name(b.dtype()));
  }
}

}  // namespace detail
}  // namespace lumos
