#pragma once

// Dense float64 tensors with a build-once/backward-once gradient tape.
//
// A Tensor is an immutable value: shape plus shared, read-only storage. A
// tensor becomes "tracked" when it is watched by a Tape or produced by an op
// that consumed a tracked input. Ops on untracked inputs record nothing.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "amicable/error.hpp"

namespace amicable {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Receives the upstream gradient of a node and accumulates into the
// gradients of its inputs. Entries for untracked inputs are null.
using BackwardFn =
    std::function<void(std::span<const double> upstream,
                       std::span<std::vector<double>* const> input_grads)>;

namespace detail {

struct TapeNode {
  Shape shape;
  std::vector<std::ptrdiff_t> parents;  // -1 for untracked inputs
  BackwardFn backward;                  // empty for leaves
  bool leaf = false;
};

struct TapeState {
  std::vector<TapeNode> nodes;
  std::uint64_t generation = 0;
  bool consumed = false;
};

}  // namespace detail

class Tape;
class Gradients;

class Tensor {
 public:
  // Scalar zero.
  Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

  Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
    if (shape_size(shape_) != values.size()) {
      throw ShapeError("tensor shape " + shape_str(shape_) + " holds " +
                       std::to_string(shape_size(shape_)) + " values, got " +
                       std::to_string(values.size()));
    }
    if (!all_finite(values)) throw NumericError("tensor constructed from non-finite values");
    data_ = std::make_shared<const std::vector<double>>(std::move(values));
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, {v}); }
  static Tensor vector(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
  }
  static Tensor zeros(Shape shape) { return filled(std::move(shape), 0.0); }
  static Tensor filled(Shape shape, double value) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_->size(); }
  std::span<const double> values() const { return *data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }

  double item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return (*data_)[0];
  }

  bool tracked() const { return tape_ != nullptr; }

  // Same values, no tape participation.
  Tensor detach() const {
    Tensor t = *this;
    t.tape_.reset();
    t.node_ = 0;
    return t;
  }

  // Storage handle for backward closures; never keeps a tape alive.
  std::shared_ptr<const std::vector<double>> storage() const { return data_; }

 private:
  friend class Tape;
  friend class Gradients;
  friend Tensor record(std::string_view, Shape, std::vector<double>,
                       const std::vector<const Tensor*>&, BackwardFn);
  friend Gradients backward(const Tensor&);

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  std::shared_ptr<detail::TapeState> tape_;
  std::size_t node_ = 0;
  std::uint64_t generation_ = 0;
};

class Tape {
 public:
  Tape() : state_(std::make_shared<detail::TapeState>()) {}

  // Registers a leaf whose gradient will be reported by backward().
  Tensor watch(const Tensor& t) {
    if (state_->consumed) throw TapeError("tape already consumed by backward(); reset() it first");
    Tensor out = t.detach();
    out.tape_ = state_;
    out.node_ = state_->nodes.size();
    out.generation_ = state_->generation;
    state_->nodes.push_back(detail::TapeNode{t.shape(), {}, {}, true});
    return out;
  }

  // Invalidates every tensor recorded so far.
  void reset() {
    state_->nodes.clear();
    state_->consumed = false;
    ++state_->generation;
  }

  bool consumed() const { return state_->consumed; }
  std::size_t size() const { return state_->nodes.size(); }

 private:
  std::shared_ptr<detail::TapeState> state_;
};

// Records an op result. If no input is tracked the result is a plain tensor
// and `fn` is dropped.
inline Tensor record(std::string_view op, Shape shape, std::vector<double> values,
                     const std::vector<const Tensor*>& inputs, BackwardFn fn) {
  if (!all_finite(values)) {
    throw NumericError(std::string(op) + " produced a non-finite value");
  }
  Tensor out(std::move(shape), std::move(values));
  std::shared_ptr<detail::TapeState> tape;
  std::uint64_t generation = 0;
  for (const Tensor* in : inputs) {
    if (!in->tape_) continue;
    if (tape && tape != in->tape_) {
      throw TapeError(std::string(op) + ": inputs are recorded on different tapes");
    }
    tape = in->tape_;
    generation = in->generation_;
    if (in->generation_ != tape->generation) {
      throw TapeError(std::string(op) + ": input recorded before the tape was reset");
    }
  }
  if (!tape) return out;
  if (tape->consumed) {
    throw TapeError(std::string(op) + ": tape already consumed by backward(); reset() it first");
  }
  detail::TapeNode node;
  node.shape = out.shape();
  for (const Tensor* in : inputs) {
    node.parents.push_back(in->tape_ ? static_cast<std::ptrdiff_t>(in->node_) : -1);
  }
  node.backward = std::move(fn);
  out.tape_ = tape;
  out.node_ = tape->nodes.size();
  out.generation_ = generation;
  tape->nodes.push_back(std::move(node));
  return out;
}

// Gradients of a scalar loss with respect to every watched leaf of its tape.
class Gradients {
 public:
  bool contains(const Tensor& t) const {
    return t.tape_ && t.tape_.get() == tape_ && t.generation_ == generation_ &&
           by_node_.count(t.node_) > 0;
  }

  const Tensor& of(const Tensor& t) const {
    if (!contains(t)) throw TapeError("no gradient recorded for this tensor");
    return by_node_.at(t.node_);
  }

  std::size_t size() const { return by_node_.size(); }

 private:
  friend Gradients backward(const Tensor&);
  const detail::TapeState* tape_ = nullptr;
  std::uint64_t generation_ = 0;
  std::map<std::size_t, Tensor> by_node_;
};

inline Gradients backward(const Tensor& loss) {
  if (!loss.tape_) throw TapeError("backward() on an untracked tensor");
  if (loss.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  detail::TapeState& tape = *loss.tape_;
  if (tape.consumed) throw TapeError("tape already consumed by backward(); reset() it first");
  if (loss.generation_ != tape.generation) throw TapeError("loss recorded before the tape was reset");
  tape.consumed = true;

  std::vector<std::vector<double>> grads(tape.nodes.size());
  grads[loss.node_] = {1.0};
  std::vector<std::vector<double>*> parent_grads;
  for (std::size_t i = loss.node_ + 1; i-- > 0;) {
    detail::TapeNode& node = tape.nodes[i];
    if (node.leaf || grads[i].empty()) continue;
    parent_grads.assign(node.parents.size(), nullptr);
    for (std::size_t p = 0; p < node.parents.size(); ++p) {
      const std::ptrdiff_t parent = node.parents[p];
      if (parent < 0) continue;
      auto& g = grads[static_cast<std::size_t>(parent)];
      if (g.empty()) g.assign(shape_size(tape.nodes[static_cast<std::size_t>(parent)].shape), 0.0);
      parent_grads[p] = &g;
    }
    node.backward(grads[i], parent_grads);
    // Interior gradients are not reported; free them early.
    std::vector<double>().swap(grads[i]);
  }

  Gradients out;
  out.tape_ = loss.tape_.get();
  out.generation_ = tape.generation;
  for (std::size_t i = 0; i < tape.nodes.size(); ++i) {
    if (!tape.nodes[i].leaf) continue;
    auto& g = grads[i];
    if (g.empty()) g.assign(shape_size(tape.nodes[i].shape), 0.0);
    if (!all_finite(g)) throw NumericError("backward produced a non-finite gradient");
    out.by_node_.emplace(i, Tensor(tape.nodes[i].shape, std::move(g)));
  }
  // Closures hold input storage; release it with the graph.
  for (auto& node : tape.nodes) node.backward = nullptr;
  return out;
}

// ---------------------------------------------------------------------------
// Op suite

namespace detail {

inline bool is_scalar_like(const Tensor& t) { return t.size() == 1 && t.rank() <= 1; }

template <typename F, typename DF>
Tensor unary(std::string_view op, const Tensor& a, F f, DF df) {
  auto ad = a.storage();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f((*ad)[i]);
  auto od = std::make_shared<const std::vector<double>>(out);
  return record(op, a.shape(), std::move(out), {&a},
                [ad, od, df](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                  auto& ga = *pg[0];
                  for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df((*ad)[i], (*od)[i]);
                });
}

// Elementwise binary op with scalar broadcasting on either side.
template <typename F, typename DA, typename DB>
Tensor binary(std::string_view op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  const bool a_scalar = is_scalar_like(a) && !is_scalar_like(b);
  const bool b_scalar = is_scalar_like(b) && !is_scalar_like(a);
  if (!a_scalar && !b_scalar && a.shape() != b.shape() &&
      !(is_scalar_like(a) && is_scalar_like(b))) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const Shape shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_size(shape);
  auto ad = a.storage();
  auto bd = b.storage();
  const std::size_t sa = a_scalar ? 0 : 1;
  const std::size_t sb = b_scalar ? 0 : 1;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f((*ad)[i * sa], (*bd)[i * sb]);
  return record(op, shape, std::move(out), {&a, &b},
                [ad, bd, sa, sb, da, db](std::span<const double> g,
                                         std::span<std::vector<double>* const> pg) {
                  if (auto* ga = pg[0]) {
                    for (std::size_t i = 0; i < g.size(); ++i)
                      (*ga)[i * sa] += g[i] * da((*ad)[i * sa], (*bd)[i * sb]);
                  }
                  if (auto* gb = pg[1]) {
                    for (std::size_t i = 0; i < g.size(); ++i)
                      (*gb)[i * sb] += g[i] * db((*ad)[i * sa], (*bd)[i * sb]);
                  }
                });
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Tensor scale(const Tensor& a, double s) {
  return detail::unary(
      "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Tensor square(const Tensor& a) {
  return detail::unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Tensor sqrt(const Tensor& a) {
  for (double v : a.values()) {
    if (v < 0.0) throw DomainError("sqrt of negative value " + std::to_string(v));
  }
  return detail::unary(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

inline Tensor abs(const Tensor& a) {
  return detail::unary(
      "abs", a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(
      "sigmoid", a, detail::stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Tensor log1p(const Tensor& a) {
  for (double v : a.values()) {
    if (v <= -1.0) throw DomainError("log1p of value <= -1: " + std::to_string(v));
  }
  return detail::unary(
      "log1p", a, [](double x) { return std::log1p(x); },
      [](double x, double) { return 1.0 / (1.0 + x); });
}

inline Tensor sum(const Tensor& a) {
  auto n = a.size();
  double s = 0.0;
  for (double v : a.values()) s += v;
  return record("sum", Shape{}, {s}, {&a},
                [n](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                  for (std::size_t i = 0; i < n; ++i) (*pg[0])[i] += g[0];
                });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

// Reduces one axis.
inline Tensor sum(const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw ShapeError("sum: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(a.shape()));
  }
  const Shape& s = a.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t extent = s[axis];
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(outer * inner, 0.0);
  auto v = a.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < extent; ++k)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += v[(o * extent + k) * inner + i];
  return record("sum_axis", std::move(out_shape), std::move(out), {&a},
                [outer, inner, extent](std::span<const double> g,
                                       std::span<std::vector<double>* const> pg) {
                  auto& ga = *pg[0];
                  for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t k = 0; k < extent; ++k)
                      for (std::size_t i = 0; i < inner; ++i)
                        ga[(o * extent + k) * inner + i] += g[o * inner + i];
                });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return record("reshape", std::move(shape), std::move(out), {&a},
                [](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                  for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                });
}

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

}  // namespace detail

// [m,k] x [k,n] -> [m,n], or [m,k] x [k] -> [m].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || (b.rank() != 2 && b.rank() != 1) || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.shape()[0]);
  const auto k = static_cast<Eigen::Index>(a.shape()[1]);
  const auto n = static_cast<Eigen::Index>(b.rank() == 2 ? b.shape()[1] : 1);
  Shape out_shape = b.rank() == 2 ? Shape{a.shape()[0], b.shape()[1]} : Shape{a.shape()[0]};
  auto ad = a.storage();
  auto bd = b.storage();
  std::vector<double> out(static_cast<std::size_t>(m * n));
  detail::MatrixMap(out.data(), m, n).noalias() =
      detail::ConstMatrixMap(ad->data(), m, k) * detail::ConstMatrixMap(bd->data(), k, n);
  return record(
      "matmul", std::move(out_shape), std::move(out), {&a, &b},
      [ad, bd, m, k, n](std::span<const double> g, std::span<std::vector<double>* const> pg) {
        const detail::ConstMatrixMap G(g.data(), m, n);
        if (auto* ga = pg[0]) {
          detail::MatrixMap(ga->data(), m, k).noalias() += G * detail::ConstMatrixMap(bd->data(), k, n).transpose();
        }
        if (auto* gb = pg[1]) {
          detail::MatrixMap(gb->data(), k, n).noalias() += detail::ConstMatrixMap(ad->data(), m, k).transpose() * G;
        }
      });
}

// Concatenates along `axis`; all other extents must agree.
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& t : parts) {
    Shape s = t.shape();
    if (s.size() != first.size()) {
      throw ShapeError("concat: shape mismatch " + shape_str(first) + " vs " + shape_str(s));
    }
    out_shape[axis] += s[axis];
    s[axis] = first[axis];
    if (s != first) {
      throw ShapeError("concat: shape mismatch " + shape_str(first) + " vs " +
                       shape_str(t.shape()));
    }
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t total = out_shape[axis];
  std::vector<double> out(shape_size(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Tensor& t : parts) {
    offsets.push_back(off);
    const std::size_t ext = t.shape()[axis];
    auto v = t.values();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * ext * inner), ext * inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * total + off) * inner));
    off += ext;
  }
  std::vector<std::size_t> extents;
  std::vector<const Tensor*> inputs;
  for (const Tensor& t : parts) {
    extents.push_back(t.shape()[axis]);
    inputs.push_back(&t);
  }
  return record("concat", std::move(out_shape), std::move(out), inputs,
                [outer, inner, total, offsets, extents](
                    std::span<const double> g, std::span<std::vector<double>* const> pg) {
                  for (std::size_t p = 0; p < pg.size(); ++p) {
                    auto* gp = pg[p];
                    if (!gp) continue;
                    const std::size_t ext = extents[p];
                    for (std::size_t o = 0; o < outer; ++o)
                      for (std::size_t i = 0; i < ext * inner; ++i)
                        (*gp)[o * ext * inner + i] += g[(o * total + offsets[p]) * inner + i];
                  }
                });
}

// Half-open range [begin, end) along `axis`.
inline Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = a.shape();
  if (axis >= s.size() || begin > end || end > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") on axis " + std::to_string(axis) + " invalid for " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t extent = s[axis];
  const std::size_t len = end - begin;
  Shape out_shape = s;
  out_shape[axis] = len;
  std::vector<double> out(outer * len * inner);
  auto v = a.values();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>((o * extent + begin) * inner), len * inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * len * inner));
  return record("slice", std::move(out_shape), std::move(out), {&a},
                [outer, inner, extent, begin, len](std::span<const double> g,
                                                   std::span<std::vector<double>* const> pg) {
                  auto& ga = *pg[0];
                  for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t i = 0; i < len * inner; ++i)
                      ga[(o * extent + begin) * inner + i] += g[o * len * inner + i];
                });
}

// ---------------------------------------------------------------------------

using ScalarFn = std::function<Tensor(const Tensor&)>;

// Max over coordinates of |analytic - central difference| / (|central difference| + 1e-12).
inline double grad_check(const ScalarFn& f, const Tensor& point, double step) {
  if (!(step > 0.0)) throw DomainError("grad_check: step must be positive");
  Tape tape;
  const Tensor x = tape.watch(point);
  const Tensor y = f(x);
  if (y.size() != 1) throw ShapeError("grad_check: function must be scalar-valued");
  if (!std::isfinite(y.item())) throw NumericError("grad_check: non-finite evaluation");
  const Gradients grads = backward(y);
  const auto analytic = grads.of(x).values();

  std::vector<double> probe(point.values().begin(), point.values().end());
  auto eval = [&](std::size_t i, double v) {
    const double saved = probe[i];
    probe[i] = v;
    const double out = f(Tensor(point.shape(), probe)).item();
    probe[i] = saved;
    if (!std::isfinite(out)) throw NumericError("grad_check: non-finite evaluation");
    return out;
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double fd = (eval(i, probe[i] + step) - eval(i, probe[i] - step)) / (2.0 * step);
    worst = std::max(worst, std::fabs(analytic[i] - fd) / (std::fabs(fd) + 1e-12));
  }
  return worst;
}

}  // namespace amicable
