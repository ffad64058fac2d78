#include "prophet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "prophet/kernels.hpp"

namespace prophet {

std::string to_string(Shape s) {
  return std::to_string(s.rows) + "x" + std::to_string(s.cols);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (shape.rows == 0 || shape.cols == 0) {
    throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
  if (data_.size() != shape.numel()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + to_string(shape));
  }
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
  return Tensor({rows, cols}, std::vector<double>(rows * cols, 0.0));
}

Tensor Tensor::scalar(double v) { return Tensor({1, 1}, {v}); }

Tensor Tensor::column(std::vector<double> v) {
  const auto n = v.size();
  return Tensor({n, 1}, std::move(v));
}

Tensor Tensor::row(std::vector<double> v) {
  const auto n = v.size();
  return Tensor({1, n}, std::move(v));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor " + to_string(shape_));
  return data_[0];
}

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::add_broadcast_column: return "add-broadcast-column";
    case Op::mul: return "elementwise-mul";
    case Op::tanh: return "tanh";
    case Op::sigmoid: return "sigmoid";
    case Op::concat: return "concat";
    case Op::row_softmax: return "row-softmax";
    case Op::mean_rows: return "mean-over-rows";
    case Op::l1_distance: return "l1-distance";
    case Op::l2_squared_distance: return "l2-squared-distance";
    case Op::kl_divergence: return "kl-divergence";
    case Op::pick_log_prob: return "pick-log-prob";
    case Op::sum: return "sum";
    case Op::scale: return "scale";
    case Op::transpose: return "transpose";
    case Op::gather_row: return "gather-row";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Tape

NodeId Tape::push(Op op, std::vector<NodeId> inputs, const Tensor& value, double aux) {
  nodes_.push_back(Node{op, std::move(inputs), value.shape(), value.values(), aux});
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor Tape::leaf(const Tensor& value) {
  Tensor out = value.detached();
  out.node_ = push(Op::leaf, {}, out, 0.0);
  out.tape_ = this;
  return out;
}

Tensor Tape::record(Op op, std::span<const Tensor* const> inputs, Tensor result, double aux) {
  std::vector<NodeId> ids;
  ids.reserve(inputs.size());
  for (const Tensor* in : inputs) {
    if (in->tape_ == this) {
      ids.push_back(in->node_);
    } else if (in->tape_ == nullptr) {
      ids.push_back(push(Op::leaf, {}, *in, 0.0));
    } else {
      throw std::invalid_argument(std::string(op_name(op)) + ": inputs belong to different tapes");
    }
  }
  result.node_ = push(op, std::move(ids), result, aux);
  result.tape_ = this;
  return result;
}

namespace {

void accumulate(std::vector<double>& dst, std::size_t n) {
  if (dst.empty()) dst.assign(n, 0.0);
}

int sign_or_zero(double x) { return (x > 0.0) - (x < 0.0); }

double clamp_floor(double q) { return q < kKlFloor ? kKlFloor : q; }

}  // namespace

Gradients Tape::backward(const Tensor& root) const {
  if (root.tape_ != this) throw std::invalid_argument("backward: root is not recorded on this tape");
  if (root.size() != 1) throw ShapeError("backward: root must be scalar, got " + to_string(root.shape()));

  std::vector<std::vector<double>> grads(nodes_.size());
  grads[static_cast<std::size_t>(root.node_)].assign(1, 1.0);

  for (auto id = root.node_; id >= 0; --id) {
    const auto& node = nodes_[static_cast<std::size_t>(id)];
    auto& g = grads[static_cast<std::size_t>(id)];
    if (g.empty() || node.op == Op::leaf) continue;

    auto in_grad = [&](std::size_t k) -> std::vector<double>& {
      const auto src = static_cast<std::size_t>(node.inputs[k]);
      accumulate(grads[src], nodes_[src].value.size());
      return grads[src];
    };
    auto in_node = [&](std::size_t k) -> const Node& {
      return nodes_[static_cast<std::size_t>(node.inputs[k])];
    };

    const auto& y = node.value;
    switch (node.op) {
      case Op::leaf:
        break;
      case Op::matmul: {
        const auto& a = in_node(0);
        const auto& b = in_node(1);
        const auto m = a.shape.rows, k = a.shape.cols, n = b.shape.cols;
        kernels::matmul_acc_nt(g, b.value, in_grad(0), m, k, n);
        kernels::matmul_acc_tn(a.value, g, in_grad(1), m, k, n);
        break;
      }
      case Op::add: {
        for (std::size_t s = 0; s < 2; ++s) {
          auto& gi = in_grad(s);
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
        break;
      }
      case Op::add_broadcast_column: {
        auto& gm = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
        auto& gv = in_grad(1);
        const auto cols = node.shape.cols;
        for (std::size_t r = 0; r < node.shape.rows; ++r) {
          double acc = 0.0;
          for (std::size_t c = 0; c < cols; ++c) acc += g[r * cols + c];
          gv[r] += acc;
        }
        break;
      }
      case Op::mul: {
        const auto& a = in_node(0).value;
        const auto& b = in_node(1).value;
        auto& ga = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
        auto& gb = in_grad(1);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
        break;
      }
      case Op::tanh: {
        auto& gx = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::sigmoid: {
        auto& gx = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Op::concat: {
        std::size_t offset = 0;
        for (std::size_t s = 0; s < node.inputs.size(); ++s) {
          auto& gi = in_grad(s);
          for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[offset + i];
          offset += gi.size();
        }
        break;
      }
      case Op::row_softmax: {
        auto& gx = in_grad(0);
        const auto cols = node.shape.cols;
        for (std::size_t r = 0; r < node.shape.rows; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c) {
            const auto i = r * cols + c;
            gx[i] += y[i] * (g[i] - dot);
          }
        }
        break;
      }
      case Op::mean_rows: {
        auto& gx = in_grad(0);
        const auto rows = in_node(0).shape.rows;
        const auto cols = node.shape.cols;
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[c] / static_cast<double>(rows);
        break;
      }
      case Op::l1_distance: {
        const auto& a = in_node(0).value;
        const auto& b = in_node(1).value;
        auto& ga = in_grad(0);
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g[0] * sign_or_zero(a[i] - b[i]);
        auto& gb = in_grad(1);
        for (std::size_t i = 0; i < a.size(); ++i) gb[i] -= g[0] * sign_or_zero(a[i] - b[i]);
        break;
      }
      case Op::l2_squared_distance: {
        const auto& a = in_node(0).value;
        const auto& b = in_node(1).value;
        auto& ga = in_grad(0);
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += 2.0 * g[0] * (a[i] - b[i]);
        auto& gb = in_grad(1);
        for (std::size_t i = 0; i < a.size(); ++i) gb[i] -= 2.0 * g[0] * (a[i] - b[i]);
        break;
      }
      case Op::kl_divergence: {
        const auto& p = in_node(0).value;
        const auto& q = in_node(1).value;
        auto& gp = in_grad(0);
        for (std::size_t i = 0; i < p.size(); ++i) {
          if (p[i] > 0.0) gp[i] += g[0] * (std::log(p[i] / clamp_floor(q[i])) + 1.0);
        }
        auto& gq = in_grad(1);
        for (std::size_t i = 0; i < p.size(); ++i) {
          if (q[i] >= kKlFloor) gq[i] -= g[0] * p[i] / q[i];
        }
        break;
      }
      case Op::pick_log_prob: {
        const auto& z = in_node(0).value;
        const auto target = static_cast<std::size_t>(node.aux);
        const double mx = *std::max_element(z.begin(), z.end());
        double total = 0.0;
        for (double v : z) total += std::exp(v - mx);
        auto& gz = in_grad(0);
        for (std::size_t i = 0; i < z.size(); ++i) {
          const double p = std::exp(z[i] - mx) / total;
          gz[i] += g[0] * ((i == target ? 1.0 : 0.0) - p);
        }
        break;
      }
      case Op::sum: {
        auto& gx = in_grad(0);
        for (auto& v : gx) v += g[0];
        break;
      }
      case Op::scale: {
        auto& gx = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += node.aux * g[i];
        break;
      }
      case Op::transpose: {
        auto& gx = in_grad(0);
        const auto rows = node.shape.rows, cols = node.shape.cols;
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gx[c * rows + r] += g[r * cols + c];
        break;
      }
      case Op::gather_row: {
        auto& gm = in_grad(0);
        const auto row = static_cast<std::size_t>(node.aux);
        const auto cols = in_node(0).shape.cols;
        for (std::size_t c = 0; c < cols; ++c) gm[row * cols + c] += g[c];
        break;
      }
    }
  }
  return Gradients(this, std::move(grads));
}

Tensor Gradients::of(const Tensor& t) const {
  if (t.tape() != tape_ || t.node() == kNoNode) {
    throw std::invalid_argument("gradient requested for a tensor not on this tape");
  }
  const auto& g = grads_.at(static_cast<std::size_t>(t.node()));
  if (g.empty()) return Tensor::zeros(t.rows(), t.cols());
  return Tensor(t.shape(), g);
}

std::span<const double> Gradients::raw(NodeId id) const {
  return grads_.at(static_cast<std::size_t>(id));
}

// ---------------------------------------------------------------------------
// Primitives

namespace {

using Inputs = std::span<const Tensor* const>;

[[noreturn]] void shape_mismatch(Op op, Shape a, Shape b) {
  throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + to_string(a) + " vs " +
                   to_string(b));
}

void require_arity(Op op, Inputs in, std::size_t n) {
  if (in.size() != n) {
    throw std::invalid_argument(std::string(op_name(op)) + ": expected " + std::to_string(n) +
                                " inputs, got " + std::to_string(in.size()));
  }
}

void require_same(Op op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_mismatch(op, a.shape(), b.shape());
}

Tensor forward(Op op, Inputs in, double aux) {
  switch (op) {
    case Op::leaf:
      throw std::invalid_argument("leaf is not an applicable primitive");
    case Op::matmul: {
      require_arity(op, in, 2);
      const auto& a = (*in[0]);
      const auto& b = (*in[1]);
      if (a.cols() != b.rows()) shape_mismatch(op, a.shape(), b.shape());
      Tensor out = Tensor::zeros(a.rows(), b.cols());
      kernels::matmul(a.data(), b.data(), out.mutable_data(), a.rows(), a.cols(), b.cols());
      return out;
    }
    case Op::add: {
      require_arity(op, in, 2);
      require_same(op, (*in[0]), (*in[1]));
      Tensor out = (*in[0]).detached();
      auto o = out.mutable_data();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] += (*in[1])[i];
      return out;
    }
    case Op::add_broadcast_column: {
      require_arity(op, in, 2);
      const auto& m = (*in[0]);
      const auto& v = (*in[1]);
      if (v.cols() != 1 || v.rows() != m.rows()) shape_mismatch(op, m.shape(), v.shape());
      Tensor out = m.detached();
      for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) += v[r];
      return out;
    }
    case Op::mul: {
      require_arity(op, in, 2);
      require_same(op, (*in[0]), (*in[1]));
      Tensor out = (*in[0]).detached();
      auto o = out.mutable_data();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] *= (*in[1])[i];
      return out;
    }
    case Op::tanh: {
      require_arity(op, in, 1);
      Tensor out = (*in[0]).detached();
      for (auto& v : out.mutable_data()) v = std::tanh(v);
      return out;
    }
    case Op::sigmoid: {
      require_arity(op, in, 1);
      Tensor out = (*in[0]).detached();
      for (auto& v : out.mutable_data()) v = 1.0 / (1.0 + std::exp(-v));
      return out;
    }
    case Op::concat: {
      if (in.empty()) throw std::invalid_argument("concat: no inputs");
      std::size_t rows = 0;
      std::vector<double> data;
      for (const Tensor* pp : in) {
        const Tensor& part = *pp;
        if (part.cols() != (*in[0]).cols()) shape_mismatch(op, (*in[0]).shape(), part.shape());
        rows += part.rows();
        data.insert(data.end(), part.data().begin(), part.data().end());
      }
      return Tensor({rows, (*in[0]).cols()}, std::move(data));
    }
    case Op::row_softmax: {
      require_arity(op, in, 1);
      Tensor out = (*in[0]).detached();
      const auto cols = out.cols();
      auto o = out.mutable_data();
      for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = o.subspan(r * cols, cols);
        const double mx = *std::max_element(row.begin(), row.end());
        double total = 0.0;
        for (auto& v : row) {
          v = std::exp(v - mx);
          total += v;
        }
        for (auto& v : row) v /= total;
      }
      return out;
    }
    case Op::mean_rows: {
      require_arity(op, in, 1);
      const auto& x = (*in[0]);
      Tensor out = Tensor::zeros(1, x.cols());
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) += x(r, c);
      for (auto& v : out.mutable_data()) v /= static_cast<double>(x.rows());
      return out;
    }
    case Op::l1_distance: {
      require_arity(op, in, 2);
      require_same(op, (*in[0]), (*in[1]));
      double acc = 0.0;
      for (std::size_t i = 0; i < (*in[0]).size(); ++i) acc += std::abs((*in[0])[i] - (*in[1])[i]);
      return Tensor::scalar(acc);
    }
    case Op::l2_squared_distance: {
      require_arity(op, in, 2);
      require_same(op, (*in[0]), (*in[1]));
      double acc = 0.0;
      for (std::size_t i = 0; i < (*in[0]).size(); ++i) {
        const double d = (*in[0])[i] - (*in[1])[i];
        acc += d * d;
      }
      return Tensor::scalar(acc);
    }
    case Op::kl_divergence: {
      require_arity(op, in, 2);
      require_same(op, (*in[0]), (*in[1]));
      double acc = 0.0;
      for (std::size_t i = 0; i < (*in[0]).size(); ++i) {
        const double p = (*in[0])[i];
        const double q = (*in[1])[i];
        if (q == 0.0) {
          throw std::domain_error("kl-divergence: second argument has a zero entry at index " +
                                  std::to_string(i));
        }
        if (p > 0.0) acc += p * std::log(p / clamp_floor(q));
      }
      return Tensor::scalar(acc);
    }
    case Op::pick_log_prob: {
      require_arity(op, in, 1);
      const auto z = (*in[0]).data();
      const auto target = static_cast<std::size_t>(aux);
      if (aux < 0.0 || target >= z.size()) {
        throw std::out_of_range("pick-log-prob: index " + std::to_string(aux) +
                                " outside " + to_string((*in[0]).shape()));
      }
      const double mx = *std::max_element(z.begin(), z.end());
      double total = 0.0;
      for (double v : z) total += std::exp(v - mx);
      return Tensor::scalar(z[target] - mx - std::log(total));
    }
    case Op::sum: {
      require_arity(op, in, 1);
      double acc = 0.0;
      for (double v : (*in[0]).data()) acc += v;
      return Tensor::scalar(acc);
    }
    case Op::scale: {
      require_arity(op, in, 1);
      Tensor out = (*in[0]).detached();
      for (auto& v : out.mutable_data()) v *= aux;
      return out;
    }
    case Op::transpose: {
      require_arity(op, in, 1);
      const auto& x = (*in[0]);
      Tensor out = Tensor::zeros(x.cols(), x.rows());
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out(c, r) = x(r, c);
      return out;
    }
    case Op::gather_row: {
      require_arity(op, in, 1);
      const auto& m = (*in[0]);
      const auto row = static_cast<std::size_t>(aux);
      if (aux < 0.0 || row >= m.rows()) {
        throw std::out_of_range("gather-row: row " + std::to_string(aux) + " outside " +
                                to_string(m.shape()));
      }
      const auto d = m.data().subspan(row * m.cols(), m.cols());
      return Tensor::column({d.begin(), d.end()});
    }
  }
  throw std::invalid_argument("unknown primitive");
}


Tensor apply(Op op, Inputs inputs, double aux = 0.0) {
  Tensor out = forward(op, inputs, aux);
  Tape* tape = nullptr;
  for (const Tensor* in : inputs) {
    if (in->tape() == nullptr) continue;
    if (tape != nullptr && tape != in->tape()) {
      throw std::invalid_argument(std::string(op_name(op)) + ": inputs belong to different tapes");
    }
    tape = in->tape();
  }
  if (tape == nullptr) return out;
  return tape->record(op, inputs, std::move(out), aux);
}

Tensor apply(Op op, std::initializer_list<const Tensor*> inputs, double aux = 0.0) {
  return apply(op, Inputs(inputs.begin(), inputs.size()), aux);
}

}  // namespace

Tensor apply_primitive(Op op, std::span<const Tensor> inputs, double aux) {
  std::vector<const Tensor*> ptrs;
  for (const auto& t : inputs) ptrs.push_back(&t);
  return apply(op, ptrs, aux);
}

Tensor matmul(const Tensor& a, const Tensor& b) { return apply(Op::matmul, {&a, &b}); }
Tensor add(const Tensor& a, const Tensor& b) { return apply(Op::add, {&a, &b}); }

Tensor add_broadcast_column(const Tensor& m, const Tensor& v) {
  return apply(Op::add_broadcast_column, {&m, &v});
}

Tensor mul(const Tensor& a, const Tensor& b) { return apply(Op::mul, {&a, &b}); }
Tensor tanh(const Tensor& x) { return apply(Op::tanh, {&x}); }
Tensor sigmoid(const Tensor& x) { return apply(Op::sigmoid, {&x}); }

Tensor concat(std::initializer_list<Tensor> parts) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor concat(std::span<const Tensor> parts) { return apply_primitive(Op::concat, parts); }

Tensor row_softmax(const Tensor& x) { return apply(Op::row_softmax, {&x}); }
Tensor mean_rows(const Tensor& x) { return apply(Op::mean_rows, {&x}); }

Tensor l1_distance(const Tensor& a, const Tensor& b) { return apply(Op::l1_distance, {&a, &b}); }

Tensor l2_squared_distance(const Tensor& a, const Tensor& b) {
  return apply(Op::l2_squared_distance, {&a, &b});
}

Tensor kl_divergence(const Tensor& p, const Tensor& q) { return apply(Op::kl_divergence, {&p, &q}); }

Tensor pick_log_prob(const Tensor& logits, std::size_t index) {
  return apply(Op::pick_log_prob, {&logits}, static_cast<double>(index));
}

Tensor sum(const Tensor& x) { return apply(Op::sum, {&x}); }
Tensor scale(const Tensor& x, double factor) { return apply(Op::scale, {&x}, factor); }
Tensor transpose(const Tensor& x) { return apply(Op::transpose, {&x}); }

Tensor gather_row(const Tensor& m, std::size_t index) {
  return apply(Op::gather_row, {&m}, static_cast<double>(index));
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                           double step, double tolerance) {
  if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

  Tape tape;
  const Tensor x = tape.leaf(point);
  const Tensor y = f(x);
  if (!std::isfinite(y.item())) throw std::domain_error("grad_check: non-finite forward value");
  const Tensor analytic = y.tracked() ? tape.backward(y).of(x) : Tensor::zeros(x.rows(), x.cols());

  GradCheckReport report;
  Tensor probe = point.detached();
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double original = probe[i];
    probe.mutable_data()[i] = original + step;
    const double up = f(probe).item();
    probe.mutable_data()[i] = original - step;
    const double down = f(probe).item();
    probe.mutable_data()[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::domain_error("grad_check: non-finite forward value");
    }
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[i];
    const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    if (err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_index = i;
    }
  }
  report.pass = report.max_relative_error <= tolerance;
  return report;
}

}  // namespace prophet
