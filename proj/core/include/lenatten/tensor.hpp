#pragma once

// Dense double-precision tensors with tape-based reverse-mode autodiff.
//
// A Tensor is a plain value (parameters, constants). Computation happens on a
// Tape: leaves are created from Tensors, every op appends a node holding its
// result and adjoint, and Tape::backward walks the nodes in reverse. A Var is
// a cheap handle to one node.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lenatten {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor vector(std::vector<double> data);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Tensor scalar(double value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on);
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
  bool requires_grad_ = false;
};

// Named, insertion-ordered collection of trainable tensors.
class ParameterSet {
 public:
  Tensor& add(std::string name, Shape shape);
  Tensor& get(std::string_view name);
  const Tensor& get(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  std::size_t size() const noexcept { return tensors_.size(); }
  Tensor& at(std::size_t i) { return tensors_[i]; }
  const Tensor& at(std::size_t i) const { return tensors_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const noexcept { return names_; }

  std::size_t total_size() const;
  void zero_grad();

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

class Tape;

class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  std::uint32_t id() const noexcept { return id_; }

  const Shape& shape() const;
  std::size_t size() const;
  std::span<const double> value() const;
  double item() const;
  double operator[](std::size_t i) const { return value()[i]; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

class Tape {
 public:
  // Adjoint callback: reads the node's own gradient and accumulates into inputs.
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    Backward backward;
    Tensor* parameter = nullptr;
    bool needs_grad = false;
  };

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  void clear();

  Var constant(const Tensor& t);
  Var constant(Shape shape, std::vector<double> value);
  Var scalar(double value);
  // Gradients reaching this leaf are summed into `t.grad()` on backward.
  // On a non-recording tape this is equivalent to constant().
  Var parameter(Tensor& t);

  void backward(Var loss);
  // Node ids visited by the most recent backward(), in visiting order.
  const std::vector<std::uint32_t>& last_backward_order() const noexcept { return order_; }

  // Gradient accumulated on any node during the last backward (empty if none reached it).
  std::span<const double> grad_of(Var v) const;

  // Op-author interface.
  Node& node(std::uint32_t id) { return nodes_[id]; }
  const Node& node(std::uint32_t id) const { return nodes_[id]; }
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }
  std::span<double> grad_buffer(std::uint32_t id);
  Var push(Shape shape, std::vector<double> value, std::initializer_list<Var> inputs, Backward backward);
  Var push(Shape shape, std::vector<double> value, std::span<const Var> inputs, Backward backward);

 private:
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
  bool recording_;
};

// Ops. Operands must live on the same tape. Vectors are rank-1, matrices
// rank-2 row-major; the only broadcast is bias-vector-to-matrix-rows.
Var matmul(Var a, Var b);              // [m,k] x [k,n] -> [m,n]
Var matvec(Var m, Var x);              // [m,k] x [k] -> [m]
Var matvec_t(Var m, Var x);            // [m,k]^T x [m] -> [k]
Var add(Var a, Var b);
Var add_rows(Var m, Var bias);         // [m,n] + [n] broadcast over rows
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var scale_by(Var s, Var v);            // scalar Var [1] times v
Var one_minus(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var log(Var a);
Var softmax(Var v);
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
Var slice(Var v, std::size_t offset, std::size_t length);
Var gather_row(Var table, std::size_t row);
Var stack_rows(std::span<const Var> rows);
Var sum(Var a);
Var dot(Var a, Var b);
Var pick(Var v, std::size_t index);
Var pad_to(Var v, std::size_t length);
Var scatter_add(Var v, std::span<const int> targets, std::size_t length);
Var cross_entropy_from_logits(Var logits, std::size_t target);

}  // namespace lenatten
