#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "tagnn/tensor.hpp"

namespace tagnn {

/// Handle to a node on a tape. Only meaningful for the tape that created it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Records a forward computation as an ordered list of primitive operations
/// and provides exact reverse-mode gradients. Nodes are appended in execution
/// order, so the record is topological by construction; backward walks it
/// once in reverse. All reductions use a fixed left-to-right order.
///
/// A tape is single-writer and not shared across threads.
template <typename T>
class TapeT {
 public:
  TapeT() = default;
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  // ---- graph construction -------------------------------------------------

  Var leaf(const TensorT<T>& value) { return push(value, value.requires_grad, "leaf", {}); }

  Var leaf(const TensorT<T>& value, bool requires_grad) {
    return push(value, requires_grad, "leaf", {});
  }

  Var constant(TensorT<T> value) { return push(std::move(value), false, "const", {}); }

  /// c = a @ b, a:[m,k] b:[k,n].
  Var matmul(Var a, Var b) {
    const TensorT<T>&ta = val(a), &tb = val(b);
    Var out = push(mm_nn(ta, tb), needs_grad(a) || needs_grad(b), "matmul", {a, b});
    set_backprop(out, [this, a, b, out] {
      const TensorT<T>& g = grad_ref(out);
      if (needs_grad(a)) accumulate(a, mm_nt(g, val(b)));
      if (needs_grad(b)) accumulate(b, mm_tn(val(a), g));
    });
    return out;
  }

  /// c = a @ b^T, a:[p,d] b:[q,d].
  Var matmul_nt(Var a, Var b) {
    const TensorT<T>&ta = val(a), &tb = val(b);
    Var out = push(mm_nt(ta, tb), needs_grad(a) || needs_grad(b), "matmul_nt", {a, b});
    set_backprop(out, [this, a, b, out] {
      const TensorT<T>& g = grad_ref(out);
      if (needs_grad(a)) accumulate(a, mm_nn(g, val(b)));
      if (needs_grad(b)) accumulate(b, mm_tn(g, val(a)));
    });
    return out;
  }

  Var transpose(Var x) {
    Var out = push(transposed(val(x)), needs_grad(x), "transpose", {x});
    set_backprop(out, [this, x, out] {
      if (needs_grad(x)) accumulate(x, transposed(grad_ref(out)));
    });
    return out;
  }

  Var add(Var a, Var b) { return binary_elementwise(a, b, "add"); }
  Var sub(Var a, Var b) { return binary_elementwise(a, b, "sub"); }
  Var mul(Var a, Var b) { return binary_elementwise(a, b, "mul"); }

  Var sigmoid(Var x) {
    TensorT<T> y = val(x);
    for (T& v : y.data) {
      const T xi = v;
      if (xi >= T(0)) {
        v = T(1) / (T(1) + std::exp(-xi));
      } else {
        const T e = std::exp(xi);
        v = e / (T(1) + e);
      }
    }
    Var out = push(std::move(y), needs_grad(x), "sigmoid", {x});
    set_backprop(out, [this, x, out] {
      if (!needs_grad(x)) return;
      const TensorT<T>&g = grad_ref(out), &y = val(out);
      TensorT<T> dx = TensorT<T>::zeros(g.shape);
      for (size_t i = 0; i < g.data.size(); ++i)
        dx.data[i] = g.data[i] * y.data[i] * (T(1) - y.data[i]);
      accumulate(x, dx);
    });
    return out;
  }

  Var tanh(Var x) {
    TensorT<T> y = val(x);
    for (T& v : y.data) v = std::tanh(v);
    Var out = push(std::move(y), needs_grad(x), "tanh", {x});
    set_backprop(out, [this, x, out] {
      if (!needs_grad(x)) return;
      const TensorT<T>&g = grad_ref(out), &y = val(out);
      TensorT<T> dx = TensorT<T>::zeros(g.shape);
      for (size_t i = 0; i < g.data.size(); ++i)
        dx.data[i] = g.data[i] * (T(1) - y.data[i] * y.data[i]);
      accumulate(x, dx);
    });
    return out;
  }

  Var one_minus(Var x) {
    TensorT<T> y = val(x);
    for (T& v : y.data) v = T(1) - v;
    Var out = push(std::move(y), needs_grad(x), "one_minus", {x});
    set_backprop(out, [this, x, out] {
      if (!needs_grad(x)) return;
      TensorT<T> dx = grad_ref(out);
      for (T& v : dx.data) v = -v;
      accumulate(x, dx);
    });
    return out;
  }

  Var scale(Var x, T c) {
    TensorT<T> y = val(x);
    for (T& v : y.data) v *= c;
    Var out = push(std::move(y), needs_grad(x), "scale", {x});
    set_backprop(out, [this, x, out, c] {
      if (!needs_grad(x)) return;
      TensorT<T> dx = grad_ref(out);
      for (T& v : dx.data) v *= c;
      accumulate(x, dx);
    });
    return out;
  }

  /// y = a + 1*v with a:[m,n], v:[1,n].
  Var add_rowvec(Var a, Var v) {
    const TensorT<T>&ta = val(a), &tv = val(v);
    if (ta.rank() != 2 || tv.rank() != 2 || tv.shape[0] != 1 || tv.shape[1] != ta.shape[1])
      raise(ErrorKind::dimension,
            "add_rowvec shape mismatch: " + shape_str(ta.shape) + " vs " + shape_str(tv.shape));
    TensorT<T> y = ta;
    const int m = ta.shape[0], n = ta.shape[1];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) y.data[static_cast<size_t>(i) * n + j] += tv.data[j];
    Var out = push(std::move(y), needs_grad(a) || needs_grad(v), "add_rowvec", {a, v});
    set_backprop(out, [this, a, v, out] {
      const TensorT<T>& g = grad_ref(out);
      if (needs_grad(a)) accumulate(a, g);
      if (needs_grad(v)) {
        const int m = g.shape[0], n = g.shape[1];
        TensorT<T> dv = TensorT<T>::zeros({1, n});
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) dv.data[j] += g.data[static_cast<size_t>(i) * n + j];
        accumulate(v, dv);
      }
    });
    return out;
  }

  /// Row-wise softmax with numerical max-subtraction. mask marks valid
  /// columns; masked outputs are exactly zero and excluded from the
  /// normalization. An empty mask means all columns are valid.
  Var softmax(Var x, const std::vector<uint8_t>& mask = {}) {
    const TensorT<T>& tx = val(x);
    if (tx.rank() != 2) raise(ErrorKind::dimension, "softmax needs rank 2, got " + shape_str(tx.shape));
    const int m = tx.shape[0], n = tx.shape[1];
    if (!mask.empty() && static_cast<int>(mask.size()) != n)
      raise(ErrorKind::dimension, "softmax mask length " + std::to_string(mask.size()) +
                                      " does not match column count " + std::to_string(n));
    bool any_valid = mask.empty();
    for (uint8_t b : mask) any_valid = any_valid || b;
    if (!any_valid) raise(ErrorKind::contract, "degenerate input: softmax row has no unmasked position");

    TensorT<T> y = TensorT<T>::zeros({m, n});
    for (int i = 0; i < m; ++i) {
      const T* row = &tx.data[static_cast<size_t>(i) * n];
      T mx = -std::numeric_limits<T>::infinity();
      for (int j = 0; j < n; ++j)
        if (mask.empty() || mask[j]) mx = std::max(mx, row[j]);
      T denom = 0;
      T* yrow = &y.data[static_cast<size_t>(i) * n];
      for (int j = 0; j < n; ++j) {
        if (mask.empty() || mask[j]) {
          yrow[j] = std::exp(row[j] - mx);
          denom += yrow[j];
        }
      }
      for (int j = 0; j < n; ++j)
        if (mask.empty() || mask[j]) yrow[j] /= denom;
    }
    Var out = push(std::move(y), needs_grad(x), "softmax", {x});
    set_backprop(out, [this, x, out, mask] {
      if (!needs_grad(x)) return;
      const TensorT<T>&g = grad_ref(out), &y = val(out);
      const int m = g.shape[0], n = g.shape[1];
      TensorT<T> dx = TensorT<T>::zeros({m, n});
      for (int i = 0; i < m; ++i) {
        const T* yrow = &y.data[static_cast<size_t>(i) * n];
        const T* grow = &g.data[static_cast<size_t>(i) * n];
        T dot = 0;
        for (int j = 0; j < n; ++j)
          if (mask.empty() || mask[j]) dot += grow[j] * yrow[j];
        T* drow = &dx.data[static_cast<size_t>(i) * n];
        for (int j = 0; j < n; ++j)
          if (mask.empty() || mask[j]) drow[j] = yrow[j] * (grow[j] - dot);
      }
      accumulate(x, dx);
    });
    return out;
  }

  /// y = [a b] column concatenation.
  Var concat_cols(Var a, Var b) {
    const TensorT<T>&ta = val(a), &tb = val(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[0] != tb.shape[0])
      raise(ErrorKind::dimension,
            "concat_cols shape mismatch: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    const int m = ta.shape[0], p = ta.shape[1], q = tb.shape[1];
    TensorT<T> y = TensorT<T>::zeros({m, p + q});
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < p; ++j) y.at(i, j) = ta.at(i, j);
      for (int j = 0; j < q; ++j) y.at(i, p + j) = tb.at(i, j);
    }
    Var out = push(std::move(y), needs_grad(a) || needs_grad(b), "concat_cols", {a, b});
    set_backprop(out, [this, a, b, out, p, q] {
      const TensorT<T>& g = grad_ref(out);
      const int m = g.shape[0];
      if (needs_grad(a)) {
        TensorT<T> da = TensorT<T>::zeros({m, p});
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < p; ++j) da.at(i, j) = g.at(i, j);
        accumulate(a, da);
      }
      if (needs_grad(b)) {
        TensorT<T> db = TensorT<T>::zeros({m, q});
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < q; ++j) db.at(i, j) = g.at(i, p + j);
        accumulate(b, db);
      }
    });
    return out;
  }

  /// Rows [r0, r1) of x as a new [r1-r0, n] tensor.
  Var slice_rows(Var x, int r0, int r1) {
    const TensorT<T>& tx = val(x);
    if (tx.rank() != 2 || r0 < 0 || r1 > tx.shape[0] || r0 >= r1)
      raise(ErrorKind::dimension, "slice_rows [" + std::to_string(r0) + "," + std::to_string(r1) +
                                      ") out of range for " + shape_str(tx.shape));
    const int n = tx.shape[1];
    TensorT<T> y = TensorT<T>::zeros({r1 - r0, n});
    std::copy(tx.data.begin() + static_cast<size_t>(r0) * n,
              tx.data.begin() + static_cast<size_t>(r1) * n, y.data.begin());
    Var out = push(std::move(y), needs_grad(x), "slice_rows", {x});
    set_backprop(out, [this, x, out, r0, n] {
      if (!needs_grad(x)) return;
      const TensorT<T>& g = grad_ref(out);
      TensorT<T> dx = TensorT<T>::zeros(val(x).shape);
      std::copy(g.data.begin(), g.data.end(), dx.data.begin() + static_cast<size_t>(r0) * n);
      accumulate(x, dx);
    });
    return out;
  }

  /// y[i,:] = x[idx[i],:]. Repeated indices accumulate gradients in index
  /// order, keeping backward deterministic.
  Var gather_rows(Var x, std::vector<int> idx) {
    const TensorT<T>& tx = val(x);
    if (tx.rank() != 2) raise(ErrorKind::dimension, "gather_rows needs rank 2, got " + shape_str(tx.shape));
    const int n = tx.shape[1];
    for (int i : idx)
      if (i < 0 || i >= tx.shape[0])
        raise(ErrorKind::contract, "gather_rows index " + std::to_string(i) + " out of range " +
                                       std::to_string(tx.shape[0]));
    TensorT<T> y = TensorT<T>::zeros({static_cast<int>(idx.size()), n});
    for (size_t i = 0; i < idx.size(); ++i)
      std::copy(tx.data.begin() + static_cast<size_t>(idx[i]) * n,
                tx.data.begin() + static_cast<size_t>(idx[i] + 1) * n, y.data.begin() + i * n);
    Var out = push(std::move(y), needs_grad(x), "gather_rows", {x});
    set_backprop(out, [this, x, out, idx = std::move(idx), n] {
      if (!needs_grad(x)) return;
      const TensorT<T>& g = grad_ref(out);
      TensorT<T> dx = TensorT<T>::zeros(val(x).shape);
      for (size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < n; ++j)
          dx.data[static_cast<size_t>(idx[i]) * n + j] += g.data[i * static_cast<size_t>(n) + j];
      accumulate(x, dx);
    });
    return out;
  }

  /// y[i] = dot(a[i,:], b[i,:]), result [m,1].
  Var row_dot(Var a, Var b) {
    const TensorT<T>&ta = val(a), &tb = val(b);
    if (!ta.same_shape(tb) || ta.rank() != 2)
      raise(ErrorKind::dimension,
            "row_dot shape mismatch: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    const int m = ta.shape[0], n = ta.shape[1];
    TensorT<T> y = TensorT<T>::zeros({m, 1});
    for (int i = 0; i < m; ++i) {
      T acc = 0;
      for (int j = 0; j < n; ++j) acc += ta.at(i, j) * tb.at(i, j);
      y.data[i] = acc;
    }
    Var out = push(std::move(y), needs_grad(a) || needs_grad(b), "row_dot", {a, b});
    set_backprop(out, [this, a, b, out] {
      const TensorT<T>& g = grad_ref(out);
      const TensorT<T>&ta = val(a), &tb = val(b);
      const int m = ta.shape[0], n = ta.shape[1];
      if (needs_grad(a)) {
        TensorT<T> da = TensorT<T>::zeros(ta.shape);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) da.at(i, j) = g.data[i] * tb.at(i, j);
        accumulate(a, da);
      }
      if (needs_grad(b)) {
        TensorT<T> db = TensorT<T>::zeros(tb.shape);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) db.at(i, j) = g.data[i] * ta.at(i, j);
        accumulate(b, db);
      }
    });
    return out;
  }

  /// Scalar [1,1] element at flat offset j.
  Var pick(Var x, int j) {
    const TensorT<T>& tx = val(x);
    if (j < 0 || static_cast<size_t>(j) >= tx.numel())
      raise(ErrorKind::contract,
            "pick offset " + std::to_string(j) + " out of range " + std::to_string(tx.numel()));
    Var out = push(TensorT<T>::scalar(tx.data[j]), needs_grad(x), "pick", {x});
    set_backprop(out, [this, x, out, j] {
      if (!needs_grad(x)) return;
      TensorT<T> dx = TensorT<T>::zeros(val(x).shape);
      dx.data[j] = grad_ref(out).data[0];
      accumulate(x, dx);
    });
    return out;
  }

  /// Sum of all elements, result [1,1].
  Var sum(Var x) {
    const TensorT<T>& tx = val(x);
    T acc = 0;
    for (T v : tx.data) acc += v;
    Var out = push(TensorT<T>::scalar(acc), needs_grad(x), "sum", {x});
    set_backprop(out, [this, x, out] {
      if (!needs_grad(x)) return;
      const T g = grad_ref(out).data[0];
      TensorT<T> dx = TensorT<T>::full(val(x).shape, g);
      accumulate(x, dx);
    });
    return out;
  }

  /// y = log(max(x, floor)) elementwise; the clamped region has zero slope.
  Var log_clamped(Var x, T floor = T(1e-12)) {
    TensorT<T> y = val(x);
    for (T& v : y.data) v = std::log(std::max(v, floor));
    Var out = push(std::move(y), needs_grad(x), "log_clamped", {x});
    set_backprop(out, [this, x, out, floor] {
      if (!needs_grad(x)) return;
      const TensorT<T>&g = grad_ref(out), &tx = val(x);
      TensorT<T> dx = TensorT<T>::zeros(tx.shape);
      for (size_t i = 0; i < tx.data.size(); ++i)
        dx.data[i] = tx.data[i] > floor ? g.data[i] / tx.data[i] : T(0);
      accumulate(x, dx);
    });
    return out;
  }

  /// Mean over rows marked valid in mask, result [1,n].
  Var mean_rows(Var x, const std::vector<uint8_t>& mask = {}) {
    const TensorT<T>& tx = val(x);
    if (tx.rank() != 2) raise(ErrorKind::dimension, "mean_rows needs rank 2, got " + shape_str(tx.shape));
    const int m = tx.shape[0], n = tx.shape[1];
    if (!mask.empty() && static_cast<int>(mask.size()) != m)
      raise(ErrorKind::dimension, "mean_rows mask length mismatch");
    int count = 0;
    for (int i = 0; i < m; ++i)
      if (mask.empty() || mask[i]) ++count;
    if (count == 0) raise(ErrorKind::contract, "degenerate input: mean_rows has no unmasked row");
    TensorT<T> y = TensorT<T>::zeros({1, n});
    for (int i = 0; i < m; ++i) {
      if (!mask.empty() && !mask[i]) continue;
      for (int j = 0; j < n; ++j) y.data[j] += tx.at(i, j);
    }
    for (T& v : y.data) v /= static_cast<T>(count);
    Var out = push(std::move(y), needs_grad(x), "mean_rows", {x});
    set_backprop(out, [this, x, out, mask, count] {
      if (!needs_grad(x)) return;
      const TensorT<T>& g = grad_ref(out);
      const TensorT<T>& tx = val(x);
      const int m = tx.shape[0], n = tx.shape[1];
      TensorT<T> dx = TensorT<T>::zeros(tx.shape);
      for (int i = 0; i < m; ++i) {
        if (!mask.empty() && !mask[i]) continue;
        for (int j = 0; j < n; ++j) dx.at(i, j) = g.data[j] / static_cast<T>(count);
      }
      accumulate(x, dx);
    });
    return out;
  }

  // ---- inspection and backward --------------------------------------------

  const TensorT<T>& val(Var v) const { return node_at(v).value; }

  bool needs_grad(Var v) const { return node_at(v).requires_grad; }

  size_t size() const { return nodes_.size(); }

  /// First non-finite intermediate, as the offending op name.
  std::optional<std::string> first_non_finite() const {
    for (const Node& n : nodes_)
      if (!n.value.all_finite()) return std::string(n.op);
    return std::nullopt;
  }

  /// Reverse sweep from a scalar loss. Gradients of leaves not reachable
  /// from the loss are zero.
  void backward(Var loss) {
    if (val(loss).numel() != 1)
      raise(ErrorKind::contract,
            "backward requires a scalar loss, got " + shape_str(val(loss).shape));
    if (backward_done_) raise(ErrorKind::contract, "backward already ran on this tape");
    backward_done_ = true;
    for (Node& n : nodes_)
      if (n.requires_grad) n.grad = TensorT<T>::zeros(n.value.shape);
    Node& ln = nodes_[loss.id];
    if (!ln.requires_grad) return;
    ln.grad.data[0] = T(1);
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.requires_grad && n.backprop) n.backprop();
    }
  }

  /// Gradient of a leaf/node after backward. Zero tensor if untouched.
  const TensorT<T>& grad(Var v) const {
    if (!backward_done_) raise(ErrorKind::contract, "grad queried before backward");
    const Node& n = node_at(v);
    if (!n.requires_grad)
      raise(ErrorKind::contract, "grad queried on a node that does not require gradients");
    return n.grad;
  }

 private:
  struct Node {
    TensorT<T> value;
    TensorT<T> grad;
    bool requires_grad = false;
    const char* op = "";
    std::function<void()> backprop;
  };

  const Node& node_at(Var v) const {
    if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size())
      raise(ErrorKind::contract, "invalid tape variable");
    return nodes_[v.id];
  }

  Var push(TensorT<T> value, bool requires_grad, const char* op, std::initializer_list<Var>) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.op = op;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void set_backprop(Var v, std::function<void()> fn) {
    if (nodes_[v.id].requires_grad) nodes_[v.id].backprop = std::move(fn);
  }

  const TensorT<T>& grad_ref(Var v) const { return nodes_[v.id].grad; }

  void accumulate(Var v, const TensorT<T>& g) {
    TensorT<T>& dst = nodes_[v.id].grad;
    for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += g.data[i];
  }

  Var binary_elementwise(Var a, Var b, const char* op) {
    const TensorT<T>&ta = val(a), &tb = val(b);
    const bool b_scalar = tb.numel() == 1;
    if (!ta.same_shape(tb) && !b_scalar)
      raise(ErrorKind::dimension, std::string(op) + " shape mismatch: " + shape_str(ta.shape) +
                                      " vs " + shape_str(tb.shape));
    TensorT<T> y = ta;
    const char kind = op[0] == 'a' ? '+' : (op[0] == 's' ? '-' : '*');
    for (size_t i = 0; i < y.data.size(); ++i) {
      const T bv = b_scalar ? tb.data[0] : tb.data[i];
      y.data[i] = kind == '+' ? y.data[i] + bv : (kind == '-' ? y.data[i] - bv : y.data[i] * bv);
    }
    Var out = push(std::move(y), needs_grad(a) || needs_grad(b), op, {a, b});
    set_backprop(out, [this, a, b, out, kind, b_scalar] {
      const TensorT<T>& g = grad_ref(out);
      if (needs_grad(a)) {
        if (kind == '*') {
          const TensorT<T>& tb = val(b);
          TensorT<T> da = TensorT<T>::zeros(g.shape);
          for (size_t i = 0; i < g.data.size(); ++i)
            da.data[i] = g.data[i] * (b_scalar ? tb.data[0] : tb.data[i]);
          accumulate(a, da);
        } else {
          accumulate(a, g);
        }
      }
      if (needs_grad(b)) {
        const TensorT<T>& ta = val(a);
        TensorT<T> db = TensorT<T>::zeros(val(b).shape);
        for (size_t i = 0; i < g.data.size(); ++i) {
          T contrib = kind == '*' ? g.data[i] * ta.data[i] : (kind == '-' ? -g.data[i] : g.data[i]);
          db.data[b_scalar ? 0 : i] += contrib;
        }
        accumulate(b, db);
      }
    });
    return out;
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

using Tape = TapeT<float>;
using Tape64 = TapeT<double>;

}  // namespace tagnn
