#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tagnn/tensor.hpp"

namespace tagnn {

/// Adam with per-parameter first/second moment estimates and bias correction.
/// Weight decay is coupled: l2 * theta is added to the gradient before the
/// moment updates.
template <typename T>
struct AdamStateT {
  std::vector<TensorT<T>> m;  // first moments, one per parameter
  std::vector<TensorT<T>> v;  // second moments
  long long t = 0;            // completed steps

  static AdamStateT for_params(const std::vector<TensorT<T>*>& params) {
    AdamStateT s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const TensorT<T>* p : params) {
      s.m.push_back(TensorT<T>::zeros(p->shape));
      s.v.push_back(TensorT<T>::zeros(p->shape));
    }
    return s;
  }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double l2 = 0.0;
};

/// One optimizer step over all parameters. A non-finite gradient aborts the
/// step before anything is touched: parameters, moments, and the step
/// counter stay exactly as they were, and a numeric error is raised.
template <typename T>
void adam_step(const std::vector<TensorT<T>*>& params, const std::vector<const TensorT<T>*>& grads,
               AdamStateT<T>& state, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    raise(ErrorKind::contract, "adam_step parameter/gradient/state count mismatch");
  for (size_t k = 0; k < params.size(); ++k) {
    if (!params[k]->same_shape(*grads[k]))
      raise(ErrorKind::dimension, "adam_step gradient shape mismatch at parameter " + std::to_string(k));
    if (!grads[k]->all_finite())
      raise(ErrorKind::numeric,
            "non-finite gradient for parameter " + std::to_string(k) + "; step aborted");
  }
  state.t += 1;
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T corr1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(state.t)));
  const T corr2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(state.t)));
  const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps), l2 = static_cast<T>(cfg.l2);
  for (size_t k = 0; k < params.size(); ++k) {
    TensorT<T>& p = *params[k];
    const TensorT<T>& g0 = *grads[k];
    TensorT<T>&m = state.m[k], &v = state.v[k];
    for (size_t i = 0; i < p.data.size(); ++i) {
      const T g = g0.data[i] + l2 * p.data[i];
      m.data[i] = b1 * m.data[i] + (T(1) - b1) * g;
      v.data[i] = b2 * v.data[i] + (T(1) - b2) * g * g;
      const T mhat = m.data[i] / corr1;
      const T vhat = v.data[i] / corr2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

using AdamState = AdamStateT<float>;

}  // namespace tagnn
