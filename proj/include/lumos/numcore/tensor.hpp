#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lumos {

enum class DType { f32, f64 };

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);
std::string dtype_name(DType dtype);

/// Raised when an operation receives operands of incompatible shape or dtype.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a forward op produces NaN or Inf. Training aborts the step.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Node {
  Shape shape;
  DType dtype = DType::f32;
  std::vector<float> f32;
  std::vector<double> f64;
  std::vector<float> grad_f32;
  std::vector<double> grad_f64;
  bool requires_grad = false;
  bool has_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  template <class T>
  std::vector<T>& values() {
    if constexpr (sizeof(T) == 4) {
      return f32;
    } else {
      return f64;
    }
  }
  template <class T>
  std::vector<T>& grad() {
    if constexpr (sizeof(T) == 4) {
      return grad_f32;
    } else {
      return grad_f64;
    }
  }
  /// Zero-initialised gradient buffer, allocated on first use.
  template <class T>
  std::vector<T>& grad_buffer() {
    auto& g = grad<T>();
    if (!has_grad) {
      g.assign(values<T>().size(), T(0));
      has_grad = true;
    }
    return g;
  }
};

}  // namespace detail

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return sizeof(T) == 4 ? DType::f32 : DType::f64;
}

/// Calls f.template operator()<T>() with T matching the runtime dtype.
template <class F>
decltype(auto) dispatch(DType dtype, F&& f) {
  if (dtype == DType::f32) {
    return f.template operator()<float>();
  }
  return f.template operator()<double>();
}

/// Dense row-major tensor with optional reverse-mode gradient tracking.
///
/// A Tensor is a shared handle: copies alias the same node. Values are fixed
/// once an op has produced them; only leaves (parameters) are updated in place,
/// and only between steps.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, DType dtype = DType::f32);
  static Tensor full(const Shape& shape, double value, DType dtype = DType::f32);
  static Tensor from_vector(const Shape& shape, std::vector<float> values);
  static Tensor from_vector(const Shape& shape, std::vector<double> values);
  static Tensor from_values(const Shape& shape, std::span<const double> values,
                            DType dtype = DType::f32);
  static Tensor scalar(double value, DType dtype = DType::f32);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  DType dtype() const { return node().dtype; }
  bool requires_grad() const { return node().requires_grad; }

  template <class T>
  std::span<const T> data() const {
    check_dtype<T>();
    return node_->values<T>();
  }
  /// Mutable access to values. Only meaningful on leaves.
  template <class T>
  std::span<T> mutable_data() {
    check_dtype<T>();
    return node_->values<T>();
  }

  std::vector<double> to_vector() const;
  double at(std::size_t flat_index) const;
  double item() const;

  bool has_grad() const { return node().has_grad; }
  /// Gradient as a detached tensor. Throws if none was accumulated.
  Tensor grad() const;
  void zero_grad();

  /// Marks this tensor as a graph leaf that accumulates gradients.
  Tensor& set_requires_grad(bool on);
  /// Copy of the values with no graph history.
  Tensor detach() const;
  /// Copy converted to another dtype, detached.
  Tensor to(DType dtype) const;

  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
  detail::Node& node() const {
    if (!node_) throw std::logic_error("use of undefined Tensor");
    return *node_;
  }

 private:
  template <class T>
  void check_dtype() const {
    if (dtype() != dtype_of<T>()) {
      throw ShapeError("tensor dtype is " + dtype_name(dtype()) + ", requested " +
                       dtype_name(dtype_of<T>()));
    }
  }

  std::shared_ptr<detail::Node> node_;
};

/// Disables graph construction in the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Runs reverse-mode differentiation from a scalar loss. Every leaf with
/// requires_grad reachable from the loss receives an accumulated gradient.
/// Intermediate gradients are released as they are consumed, so a graph can be
/// differentiated once.
void backward(const Tensor& loss);

namespace detail {

/// Builds an op result. When grad mode is on and any input requires grad, the
/// result records `inputs` as parents and `fn` as its backward rule. The values
/// are checked for NaN/Inf.
Tensor make_result(const char* op, Shape shape, std::vector<float>&& values,
                   const std::vector<Tensor>& inputs, std::function<void(Node&)> fn);
Tensor make_result(const char* op, Shape shape, std::vector<double>&& values,
                   const std::vector<Tensor>& inputs, std::function<void(Node&)> fn);

void require_same_dtype(const char* op, const Tensor& a, const Tensor& b);

}  // namespace detail

}  // namespace lumos
