#pragma once

#include "gino/autodiff.hpp"

#include <cmath>
#include <cstdint>

namespace gino {

/// Adam moments per parameter name. Moments are created lazily, zero-filled.
template <typename Scalar>
struct AdamState {
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  ParameterSet<Scalar> m;
  ParameterSet<Scalar> v;
};

/// One bias-corrected Adam update of every parameter that has a gradient.
template <typename Scalar>
void adam_step(ParameterSet<Scalar>& params, const ParameterSet<Scalar>& grads, AdamState<Scalar>& state) {
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    auto g = grads.find(name);
    if (g == grads.end()) continue;
    if (g->second.shape() != p.shape())
      throw DimensionError("adam_step: gradient of '" + name + "' has shape " + shape_string(g->second.shape()));
    auto [mi, m_new] = state.m.try_emplace(name, Tensor<Scalar>::zeros(p.shape()));
    auto [vi, v_new] = state.v.try_emplace(name, Tensor<Scalar>::zeros(p.shape()));
    if (mi->second.shape() != p.shape() || vi->second.shape() != p.shape())
      throw DimensionError("adam_step: moment shape differs for '" + name + "'");
    auto& m = mi->second.data();
    auto& v = vi->second.data();
    const auto& gd = g->second.data();
    m = Scalar(state.beta1) * m + Scalar(1 - state.beta1) * gd;
    v = Scalar(state.beta2) * v + Scalar(1 - state.beta2) * gd.cwiseAbs2();
    const Scalar step = static_cast<Scalar>(state.lr / c1);
    const Scalar root_c2 = static_cast<Scalar>(std::sqrt(c2));
    p.data().array() -= step * m.array() / ((v.array().sqrt() / root_c2) + Scalar(state.eps));
  }
}

}  // namespace gino
