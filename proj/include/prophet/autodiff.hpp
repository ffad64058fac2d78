#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Tensor is a value (shape + data). When any input of a primitive
// lives on a Tape, the result is recorded on that tape and carries a node id.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace prophet {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t numel() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(Shape s);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tape;
using NodeId = std::int64_t;
inline constexpr NodeId kNoNode = -1;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor scalar(double v);
  static Tensor column(std::vector<double> v);
  static Tensor row(std::vector<double> v);

  Shape shape() const { return shape_; }
  std::size_t rows() const { return shape_.rows; }
  std::size_t cols() const { return shape_.cols; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const { return data_; }
  std::span<double> mutable_data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_.cols + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_.cols + c]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double item() const;

  Tape* tape() const { return tape_; }
  NodeId node() const { return node_; }
  bool tracked() const { return tape_ != nullptr; }

  // Value copy with no tape association.
  Tensor detached() const { return Tensor(shape_, data_); }

 private:
  friend class Tape;
  Shape shape_{};
  std::vector<double> data_;
  Tape* tape_ = nullptr;
  NodeId node_ = kNoNode;
};

enum class Op {
  leaf,
  matmul,
  add,
  add_broadcast_column,
  mul,
  tanh,
  sigmoid,
  concat,
  row_softmax,
  mean_rows,
  l1_distance,
  l2_squared_distance,
  kl_divergence,
  pick_log_prob,
  sum,
  scale,
  transpose,
  gather_row,
};

const char* op_name(Op op);

// Lower clamp applied to the second argument of kl_divergence.
inline constexpr double kKlFloor = 1e-12;

class Gradients {
 public:
  Gradients() = default;
  Gradients(const Tape* tape, std::vector<std::vector<double>> grads)
      : tape_(tape), grads_(std::move(grads)) {}

  // d(root)/d(t); zeros for nodes the root does not depend on.
  Tensor of(const Tensor& t) const;
  std::span<const double> raw(NodeId id) const;
  std::size_t node_count() const { return grads_.size(); }

 private:
  const Tape* tape_ = nullptr;
  std::vector<std::vector<double>> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a copy of `value` as a differentiable input.
  Tensor leaf(const Tensor& value);

  Gradients backward(const Tensor& root) const;

  std::size_t size() const { return nodes_.size(); }
  Shape shape_of(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).shape; }

  // Appends a node for `result` computed from `inputs`; inputs that are not
  // on this tape are registered as leaves first.
  Tensor record(Op op, std::span<const Tensor* const> inputs, Tensor result, double aux);

 private:
  struct Node {
    Op op = Op::leaf;
    std::vector<NodeId> inputs;
    Shape shape;
    std::vector<double> value;
    double aux = 0.0;
  };

  NodeId push(Op op, std::vector<NodeId> inputs, const Tensor& value, double aux);

  std::vector<Node> nodes_;
};

// Generic entry point; `aux` carries the integer or real argument of
// pick_log_prob, scale and gather_row.
Tensor apply_primitive(Op op, std::span<const Tensor> inputs, double aux = 0.0);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
// Adds the column vector `v` to every column of `m`.
Tensor add_broadcast_column(const Tensor& m, const Tensor& v);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// Vertical stacking; all parts share a column count.
Tensor concat(std::initializer_list<Tensor> parts);
Tensor concat(std::span<const Tensor> parts);
Tensor row_softmax(const Tensor& x);
Tensor mean_rows(const Tensor& x);
Tensor l1_distance(const Tensor& a, const Tensor& b);
Tensor l2_squared_distance(const Tensor& a, const Tensor& b);
// KL(p || q) = sum p log(p / q), 0 log 0 = 0.
Tensor kl_divergence(const Tensor& p, const Tensor& q);
// log softmax(logits)[index] over all entries of `logits`.
Tensor pick_log_prob(const Tensor& logits, std::size_t index);
Tensor sum(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor transpose(const Tensor& x);
// Row `index` of `m` returned as a column vector.
Tensor gather_row(const Tensor& m, std::size_t index);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  bool pass = false;
};

// Compares reverse-mode gradients of scalar `f` at `point` with central
// differences. Relative error is |a - b| / max(1, |a|, |b|).
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                           double step, double tolerance);

}  // namespace prophet
