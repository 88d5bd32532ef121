#include "lenatten/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lenatten/error.hpp"

namespace lenatten {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

void check_extents(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
  for (auto e : shape) {
    if (e == 0) throw ShapeError("zero extent in shape " + shape_str(shape));
  }
}

}  // namespace

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(Shape shape, bool requires_grad) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_numel(shape_), 0.0);
  set_requires_grad(requires_grad);
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
  }
  set_requires_grad(requires_grad);
}

Tensor Tensor::vector(std::vector<double> data) {
  const auto n = data.size();
  return Tensor({n}, std::move(data));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() on non-matrix " + shape_str(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() on non-matrix " + shape_str(shape_));
  return shape_[1];
}

void Tensor::set_requires_grad(bool on) {
  requires_grad_ = on;
  if (on) {
    grad_.assign(data_.size(), 0.0);
  } else {
    grad_.clear();
    grad_.shrink_to_fit();
  }
}

std::span<double> Tensor::grad() {
  if (!requires_grad_) throw ContractError("grad() on tensor without requires_grad");
  return grad_;
}

std::span<const double> Tensor::grad() const {
  if (!requires_grad_) throw ContractError("grad() on tensor without requires_grad");
  return grad_;
}

void Tensor::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

// ---------------------------------------------------------------- ParameterSet

Tensor& ParameterSet::add(std::string name, Shape shape) {
  if (contains(name)) throw ConfigError("duplicate parameter " + name);
  names_.push_back(std::move(name));
  tensors_.emplace_back(std::move(shape), true);
  return tensors_.back();
}

std::size_t ParameterSet::index_of(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ConfigError("unknown parameter " + std::string(name));
  return static_cast<std::size_t>(it - names_.begin());
}

bool ParameterSet::contains(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

Tensor& ParameterSet::get(std::string_view name) { return tensors_[index_of(name)]; }
const Tensor& ParameterSet::get(std::string_view name) const { return tensors_[index_of(name)]; }

std::size_t ParameterSet::total_size() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& t : tensors_) t.zero_grad();
}

// ---------------------------------------------------------------- Var / Tape

const Shape& Var::shape() const { return tape_->node(id_).shape; }
std::size_t Var::size() const { return tape_->node(id_).value.size(); }
std::span<const double> Var::value() const { return tape_->node(id_).value; }

double Var::item() const {
  const auto& v = tape_->node(id_).value;
  if (v.size() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape()));
  return v[0];
}

void Tape::clear() {
  nodes_.clear();
  order_.clear();
}

Var Tape::constant(const Tensor& t) {
  return push(t.shape(), std::vector<double>(t.data().begin(), t.data().end()), {}, nullptr);
}

Var Tape::constant(Shape shape, std::vector<double> value) {
  check_extents(shape);
  if (value.size() != shape_numel(shape)) throw ShapeError("constant data does not match " + shape_str(shape));
  return push(std::move(shape), std::move(value), {}, nullptr);
}

Var Tape::scalar(double value) { return push({1}, {value}, {}, nullptr); }

Var Tape::parameter(Tensor& t) {
  Var v = constant(t);
  if (recording_ && t.requires_grad()) {
    auto& n = nodes_.back();
    n.parameter = &t;
    n.needs_grad = true;
  }
  return v;
}

std::span<double> Tape::grad_buffer(std::uint32_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

std::span<const double> Tape::grad_of(Var v) const { return nodes_[v.id()].grad; }

Var Tape::push(Shape shape, std::vector<double> value, std::initializer_list<Var> inputs, Backward backward) {
  return push(std::move(shape), std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
              std::move(backward));
}

Var Tape::push(Shape shape, std::vector<double> value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  for (const auto& in : inputs) {
    if (in.tape() != this) throw ContractError("operands recorded on different tapes");
    needs = needs || nodes_[in.id()].needs_grad;
  }
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  if (recording_ && needs) {
    n.needs_grad = true;
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

void Tape::backward(Var loss) {
  if (!recording_) throw ContractError("backward on a non-recording tape");
  if (loss.tape() != this) throw ContractError("loss belongs to another tape");
  if (loss.size() != 1) throw ContractError("backward requires a scalar loss, got " + shape_str(loss.shape()));
  for (auto& n : nodes_) n.grad.clear();
  order_.clear();
  if (!nodes_[loss.id()].needs_grad) return;
  grad_buffer(loss.id())[0] = 1.0;
  for (std::int64_t i = loss.id(); i >= 0; --i) {
    const auto id = static_cast<std::uint32_t>(i);
    auto& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    order_.push_back(id);
    if (n.backward) n.backward(*this, id);
    if (n.parameter) {
      auto g = n.parameter->grad();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
    }
  }
}

// ---------------------------------------------------------------- ops

namespace {

void require_rank(Var v, std::size_t rank, const char* op) {
  if (v.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(v.shape()));
  }
}

void require_same(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <class F, class D>
Var unary(Var a, F forward_fn, D dydx) {
  const auto in = a.value();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward_fn(in[i]);
  const auto aid = a.id();
  return a.tape()->push(a.shape(), std::move(out), {a}, [aid, dydx](Tape& t, std::uint32_t self) {
    const auto& g = t.node(self).grad;
    const auto& y = t.node(self).value;
    const auto& x = t.node(aid).value;
    auto ga = t.grad_buffer(aid);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dydx(x[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const auto A = a.value();
  const auto B = b.value();
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += aip * B[p * n + j];
    }
  }
  const auto aid = a.id(), bid = b.id();
  return a.tape()->push({m, n}, std::move(c), {a, b}, [=](Tape& t, std::uint32_t self) {
    const auto& g = t.node(self).grad;
    if (t.node(aid).needs_grad) {
      const auto& Bv = t.node(bid).value;
      auto ga = t.grad_buffer(aid);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * Bv[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (t.node(bid).needs_grad) {
      const auto& Av = t.node(aid).value;
      auto gb = t.grad_buffer(bid);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = Av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Var matvec(Var m, Var x) {
  require_rank(m, 2, "matvec");
  require_rank(x, 1, "matvec");
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  if (x.shape()[0] != cols) {
    throw ShapeError("matvec: " + shape_str(m.shape()) + " x " + shape_str(x.shape()));
  }
  const auto M = m.value();
  const auto X = x.value();
  std::vector<double> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = M.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * X[c];
    y[r] = acc;
  }
  const auto mid = m.id(), xid = x.id();
  return m.tape()->push({rows}, std::move(y), {m, x}, [=](Tape& t, std::uint32_t self) {
    const auto& g = t.node(self).grad;
    if (t.node(mid).needs_grad) {
      const auto& Xv = t.node(xid).value;
      auto gm = t.grad_buffer(mid);
      for (std::size_t r = 0; r < rows; ++r) {
        const double gr = g[r];
        if (gr == 0.0) continue;
        double* row = gm.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] += gr * Xv[c];
      }
    }
    if (t.node(xid).needs_grad) {
      const auto& Mv = t.node(mid).value;
      auto gx = t.grad_buffer(xid);
      for (std::size_t r = 0; r < rows; ++r) {
        const double gr = g[r];
        const double* row = Mv.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) gx[c] += gr * row[c];
      }
    }
  });
}

Var matvec_t(Var m, Var x) {
  require_rank(m, 2, "matvec_t");
  require_rank(x, 1, "matvec_t");
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  if (x.shape()[0] != rows) {
    throw ShapeError("matvec_t: transpose of " + shape_str(m.shape()) + " x " + shape_str(x.shape()));
  }
  const auto M = m.value();
  const auto X = x.value();
  std::vector<double> y(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double xr = X[r];
    const double* row = M.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) y[c] += xr * row[c];
  }
  const auto mid = m.id(), xid = x.id();
  return m.tape()->push({cols}, std::move(y), {m, x}, [=](Tape& t, std::uint32_t self) {
    const auto& g = t.node(self).grad;
    if (t.node(mid).needs_grad) {
      const auto& Xv = t.node(xid).value;
      auto gm = t.grad_buffer(mid);
      for (std::size_t r = 0; r < rows; ++r) {
        double* row = gm.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] += Xv[r] * g[c];
      }
    }
    if (t.node(xid).needs_grad) {
      const auto& Mv = t.node(mid).value;
      auto gx = t.grad_buffer(xid);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* row = Mv.data() + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * g[c];
        gx[r] += acc;
      }
    }
  });
}

Var add(Var a, Var b) {
  require_same(a, b, "add");
  const auto A = a.value(), B = b.value();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
  const auto aid = a.id(), bid = b.id();
  return a.tape()->push(a.shape(), std::move(out), {a, b}, [=](Tape& t, std::uint32_t self) {
    const auto& g = t.node(self).grad;
    for (auto id : {aid, bid}) {
      if (!t.node(id).needs_grad) continue;
      auto gi = t.grad_buffer(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var add_rows(Var m, Var bias) {
  require_rank(m, 2, "add_rows");
  require_rank(bias, 1, "add_rows");
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  if (bias.shape()[0] != cols) {
    throw ShapeError("add_rows: " + shape_str(m.shape()) + " + " + shape_str(bias.shape()));
  }
  const auto M = m.value(), B = bias.value();
  std::vector<double> out(M.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = M[r * cols + c] + B[c];
  const auto mid = m.id(), bid = bias.id();
  return m.tape()->push(m.shape(), std::move(out), {m, bias}, [=](Tape& t, std::uint32_t self) {
    const auto& g = t.node(self).grad;
    if (t.node(mid).needs_grad) {
      auto gm = t.grad_buffer(mid);
      for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
    }
    if (t.node(bid).needs_grad) {
      auto gb = t.grad_buffer(bid);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
    }
  });
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  const auto A = a.value(), B = b.value();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] - B[i];
  const auto aid = a.id(), bid = b.id();
  return a.tape()->push(a.shape(), std::move(out), {a, b}, [=](Tape& t, std::uint32_t self) {
    const auto& g = t.node(self).grad;
    if (t.node(aid).needs_grad) {
      auto ga = t.grad_buffer(aid);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.node(bid).needs_grad) {
      auto gb = t.grad_buffer(bid);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  const auto A = a.value(), B = b.value();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  const auto aid = a.id(), bid = b.id();
  return a.tape()->push(a.shape(), std::move(out), {a, b}, [=](Tape& t, std::uint32_t self) {
    const auto& g = t.node(self).grad;
    if (t.node(aid).needs_grad) {
      const auto& Bv = t.node(bid).value;
      auto ga = t.grad_buffer(aid);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * Bv[i];
    }
    if (t.node(bid).needs_grad) {
      const auto& Av = t.node(aid).value;
      auto gb = t.grad_buffer(bid);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * Av[i];
    }
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var scale_by(Var s, Var v) {
  if (s.size() != 1) throw ShapeError("scale_by: scalar expected, got " + shape_str(s.shape()));
  const double k = s.value()[0];
  const auto V = v.value();
  std::vector<double> out(V.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = k * V[i];
  const auto sid = s.id(), vid = v.id();
  return v.tape()->push(v.shape(), std::move(out), {s, v}, [=](Tape& t, std::uint32_t self) {
    const auto& g = t.node(self).grad;
    if (t.node(sid).needs_grad) {
      const auto& Vv = t.node(vid).value;
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * Vv[i];
      t.grad_buffer(sid)[0] += acc;
    }
    if (t.node(vid).needs_grad) {
      const double kk = t.node(sid).value[0];
      auto gv = t.grad_buffer(vid);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += kk * g[i];
    }
  });
}

Var one_minus(Var a) {
  return unary(a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var log(Var a) {
  for (double x : a.value()) {
    if (!(x > 0.0)) throw NumericError("log of non-positive value " + std::to_string(x));
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var softmax(Var v) {
  require_rank(v, 1, "softmax");
  const auto x = v.value();
  const double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> y(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - mx);
    z += y[i];
  }
  for (auto& e : y) e /= z;
  const auto vid = v.id();
  return v.tape()->push(v.shape(), std::move(y), {v}, [vid](Tape& t, std::uint32_t self) {
    const auto& g = t.node(self).grad;
    const auto& yv = t.node(self).value;
    double gy = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * yv[i];
    auto gx = t.grad_buffer(vid);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += yv[i] * (g[i] - gy);
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 1, "concat");
    total += p.size();
  }
  std::vector<double> out;
  out.reserve(total);
  std::vector<std::uint32_t> ids;
  ids.reserve(parts.size());
  for (const auto& p : parts) {
    const auto v = p.value();
    out.insert(out.end(), v.begin(), v.end());
    ids.push_back(p.id());
  }
  return parts.front().tape()->push({total}, std::move(out), parts,
                                    [ids = std::move(ids)](Tape& t, std::uint32_t self) {
                                      const auto& g = t.node(self).grad;
                                      std::size_t off = 0;
                                      for (auto id : ids) {
                                        const auto n = t.node(id).value.size();
                                        if (t.node(id).needs_grad) {
                                          auto gi = t.grad_buffer(id);
                                          for (std::size_t i = 0; i < n; ++i) gi[i] += g[off + i];
                                        }
                                        off += n;
                                      }
                                    });
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice(Var v, std::size_t offset, std::size_t length) {
  require_rank(v, 1, "slice");
  if (length == 0 || offset + length > v.size()) {
    throw ShapeError("slice [" + std::to_string(offset) + ", +" + std::to_string(length) + ") of " +
                     shape_str(v.shape()));
  }
  const auto x = v.value();
  std::vector<double> out(x.begin() + offset, x.begin() + offset + length);
  const auto vid = v.id();
  return v.tape()->push({length}, std::move(out), {v}, [=](Tape& t, std::uint32_t self) {
    const auto& g = t.node(self).grad;
    auto gv = t.grad_buffer(vid);
    for (std::size_t i = 0; i < length; ++i) gv[offset + i] += g[i];
  });
}

Var gather_row(Var table, std::size_t row) {
  require_rank(table, 2, "gather_row");
  const std::size_t rows = table.shape()[0], cols = table.shape()[1];
  if (row >= rows) {
    throw IndexError("row " + std::to_string(row) + " out of bounds for table " + shape_str(table.shape()));
  }
  const auto x = table.value();
  std::vector<double> out(x.begin() + row * cols, x.begin() + (row + 1) * cols);
  const auto tid = table.id();
  return table.tape()->push({cols}, std::move(out), {table}, [=](Tape& t, std::uint32_t self) {
    const auto& g = t.node(self).grad;
    auto gt = t.grad_buffer(tid);
    for (std::size_t c = 0; c < cols; ++c) gt[row * cols + c] += g[c];
  });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack_rows of zero vectors");
  const auto cols = rows.front().size();
  std::vector<double> out;
  out.reserve(rows.size() * cols);
  std::vector<std::uint32_t> ids;
  ids.reserve(rows.size());
  for (const auto& r : rows) {
    require_rank(r, 1, "stack_rows");
    if (r.size() != cols) throw ShapeError("stack_rows: " + shape_str(rows.front().shape()) + " vs " + shape_str(r.shape()));
    const auto v = r.value();
    out.insert(out.end(), v.begin(), v.end());
    ids.push_back(r.id());
  }
  return rows.front().tape()->push({rows.size(), cols}, std::move(out), rows,
                                   [ids = std::move(ids), cols](Tape& t, std::uint32_t self) {
                                     const auto& g = t.node(self).grad;
                                     for (std::size_t r = 0; r < ids.size(); ++r) {
                                       if (!t.node(ids[r]).needs_grad) continue;
                                       auto gr = t.grad_buffer(ids[r]);
                                       for (std::size_t c = 0; c < cols; ++c) gr[c] += g[r * cols + c];
                                     }
                                   });
}

Var sum(Var a) {
  const auto x = a.value();
  double s = 0.0;
  for (double e : x) s += e;
  const auto aid = a.id();
  return a.tape()->push({1}, {s}, {a}, [aid](Tape& t, std::uint32_t self) {
    const double g = t.node(self).grad[0];
    auto ga = t.grad_buffer(aid);
    for (auto& e : ga) e += g;
  });
}

Var dot(Var a, Var b) {
  require_same(a, b, "dot");
  const auto A = a.value(), B = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A[i] * B[i];
  const auto aid = a.id(), bid = b.id();
  return a.tape()->push({1}, {s}, {a, b}, [=](Tape& t, std::uint32_t self) {
    const double g = t.node(self).grad[0];
    if (t.node(aid).needs_grad) {
      const auto& Bv = t.node(bid).value;
      auto ga = t.grad_buffer(aid);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * Bv[i];
    }
    if (t.node(bid).needs_grad) {
      const auto& Av = t.node(aid).value;
      auto gb = t.grad_buffer(bid);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * Av[i];
    }
  });
}

Var pick(Var v, std::size_t index) {
  if (index >= v.size()) {
    throw IndexError("pick " + std::to_string(index) + " from " + shape_str(v.shape()));
  }
  const auto vid = v.id();
  return v.tape()->push({1}, {v.value()[index]}, {v}, [=](Tape& t, std::uint32_t self) {
    t.grad_buffer(vid)[index] += t.node(self).grad[0];
  });
}

Var pad_to(Var v, std::size_t length) {
  require_rank(v, 1, "pad_to");
  const std::size_t n = v.size();
  if (length < n) throw ShapeError("pad_to " + std::to_string(length) + " shorter than " + shape_str(v.shape()));
  if (length == n) return v;
  std::vector<double> out(length, 0.0);
  const auto x = v.value();
  std::copy(x.begin(), x.end(), out.begin());
  const auto vid = v.id();
  return v.tape()->push({length}, std::move(out), {v}, [=](Tape& t, std::uint32_t self) {
    const auto& g = t.node(self).grad;
    auto gv = t.grad_buffer(vid);
    for (std::size_t i = 0; i < n; ++i) gv[i] += g[i];
  });
}

Var scatter_add(Var v, std::span<const int> targets, std::size_t length) {
  require_rank(v, 1, "scatter_add");
  if (targets.size() != v.size()) {
    throw ShapeError("scatter_add: " + std::to_string(targets.size()) + " targets for " + shape_str(v.shape()));
  }
  std::vector<double> out(length, 0.0);
  const auto x = v.value();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= length) {
      throw IndexError("scatter target " + std::to_string(targets[i]) + " outside [0, " + std::to_string(length) + ")");
    }
    out[static_cast<std::size_t>(targets[i])] += x[i];
  }
  const auto vid = v.id();
  std::vector<int> tg(targets.begin(), targets.end());
  return v.tape()->push({length}, std::move(out), {v}, [vid, tg = std::move(tg)](Tape& t, std::uint32_t self) {
    const auto& g = t.node(self).grad;
    auto gv = t.grad_buffer(vid);
    for (std::size_t i = 0; i < tg.size(); ++i) gv[i] += g[static_cast<std::size_t>(tg[i])];
  });
}

Var cross_entropy_from_logits(Var logits, std::size_t target) {
  require_rank(logits, 1, "cross_entropy_from_logits");
  if (target >= logits.size()) {
    throw IndexError("target " + std::to_string(target) + " outside " + shape_str(logits.shape()));
  }
  const auto z = logits.value();
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double e : z) s += std::exp(e - mx);
  const double lse = mx + std::log(s);
  const auto lid = logits.id();
  return logits.tape()->push({1}, {lse - z[target]}, {logits}, [=](Tape& t, std::uint32_t self) {
    const double g = t.node(self).grad[0];
    const auto& zv = t.node(lid).value;
    auto gz = t.grad_buffer(lid);
    for (std::size_t i = 0; i < zv.size(); ++i) {
      const double p = std::exp(zv[i] - lse);
      gz[i] += g * (p - (i == target ? 1.0 : 0.0));
    }
  });
}

}  // namespace lenatten
