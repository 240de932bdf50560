#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tagnn/error.hpp"

namespace tagnn {

/// Worker count used by row-partitioned kernels. 1 disables threading.
/// Each output element is always produced by exactly one worker with a fixed
/// left-to-right inner reduction, so results do not depend on this setting.
void set_thread_count(int n);
int thread_count();

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (int d : s) n *= static_cast<size_t>(d);
  return n;
}

/// Dense row-major numeric array. float for training, double for
/// gradient-check mode.
template <typename T>
struct TensorT {
  Shape shape;
  std::vector<T> data;
  bool requires_grad = false;

  TensorT() = default;
  TensorT(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size())
      raise(ErrorKind::contract, "tensor data length " + std::to_string(data.size()) +
                                     " does not match shape " + shape_str(shape));
  }

  static TensorT zeros(Shape s) {
    TensorT t;
    t.shape = std::move(s);
    t.data.assign(shape_numel(t.shape), T(0));
    return t;
  }

  static TensorT full(Shape s, T v) {
    TensorT t = zeros(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static TensorT scalar(T v) { return TensorT({1, 1}, {v}); }

  /// 2-D construction from nested lists, mostly for tests.
  static TensorT from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    TensorT t;
    const int r = static_cast<int>(rows.size());
    const int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
    t.shape = {r, c};
    t.data.reserve(static_cast<size_t>(r) * c);
    for (const auto& row : rows) {
      if (static_cast<int>(row.size()) != c)
        raise(ErrorKind::contract, "ragged initializer list");
      t.data.insert(t.data.end(), row.begin(), row.end());
    }
    return t;
  }

  size_t numel() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return rank() < 2 ? (rank() == 1 ? shape[0] : 0) : shape[1]; }

  T& at(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
  T at(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  /// Same data reinterpreted under a new shape with equal element count.
  TensorT reshaped(Shape s) const {
    if (shape_numel(s) != numel())
      raise(ErrorKind::dimension,
            "cannot reshape " + shape_str(shape) + " to " + shape_str(s));
    TensorT t = *this;
    t.shape = std::move(s);
    return t;
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> t;
    t.shape = shape;
    t.requires_grad = requires_grad;
    t.data.reserve(data.size());
    for (T v : data) t.data.push_back(static_cast<U>(v));
    return t;
  }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

namespace detail {

/// Runs fn(row_begin, row_end) over [0, rows), split across the configured
/// worker count when profitable.
template <typename Fn>
void parallel_rows(int rows, const Fn& fn) {
  const int workers = thread_count();
  if (workers <= 1 || rows < 2 * workers) {
    fn(0, rows);
    return;
  }
  std::vector<std::thread> pool;
  const int chunk = (rows + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int lo = w * chunk;
    const int hi = std::min(rows, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace detail

/// c = a @ b with a:[m,k], b:[k,n].
template <typename T>
TensorT<T> mm_nn(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    raise(ErrorKind::dimension,
          "matmul shape mismatch: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  TensorT<T> c = TensorT<T>::zeros({m, n});
  detail::parallel_rows(m, [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i)
      for (int p = 0; p < k; ++p) {
        const T av = a.data[static_cast<size_t>(i) * k + p];
        if (av == T(0)) continue;
        const T* brow = &b.data[static_cast<size_t>(p) * n];
        T* crow = &c.data[static_cast<size_t>(i) * n];
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
  });
  return c;
}

/// c = a @ b^T with a:[p,d], b:[q,d].
template <typename T>
TensorT<T> mm_nt(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[1])
    raise(ErrorKind::dimension,
          "matmul_nt shape mismatch: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  const int p = a.shape[0], d = a.shape[1], q = b.shape[0];
  TensorT<T> c = TensorT<T>::zeros({p, q});
  detail::parallel_rows(p, [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i)
      for (int j = 0; j < q; ++j) {
        T acc = 0;
        const T* arow = &a.data[static_cast<size_t>(i) * d];
        const T* brow = &b.data[static_cast<size_t>(j) * d];
        for (int t = 0; t < d; ++t) acc += arow[t] * brow[t];
        c.data[static_cast<size_t>(i) * q + j] = acc;
      }
  });
  return c;
}

/// c = a^T @ b with a:[k,m], b:[k,n].
template <typename T>
TensorT<T> mm_tn(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[0] != b.shape[0])
    raise(ErrorKind::dimension,
          "matmul_tn shape mismatch: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  const int k = a.shape[0], m = a.shape[1], n = b.shape[1];
  TensorT<T> c = TensorT<T>::zeros({m, n});
  for (int p = 0; p < k; ++p)
    for (int i = 0; i < m; ++i) {
      const T av = a.data[static_cast<size_t>(p) * m + i];
      if (av == T(0)) continue;
      const T* brow = &b.data[static_cast<size_t>(p) * n];
      T* crow = &c.data[static_cast<size_t>(i) * n];
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  return c;
}

template <typename T>
TensorT<T> transposed(const TensorT<T>& x) {
  if (x.rank() != 2) raise(ErrorKind::dimension, "transpose needs rank 2, got " + shape_str(x.shape));
  const int m = x.shape[0], n = x.shape[1];
  TensorT<T> t = TensorT<T>::zeros({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) t.data[static_cast<size_t>(j) * m + i] = x.data[static_cast<size_t>(i) * n + j];
  return t;
}

}  // namespace tagnn
