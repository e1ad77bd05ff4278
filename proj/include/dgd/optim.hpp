#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "dgd/error.hpp"

namespace dgd {

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;  // one moment buffer per parameter tensor

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam step over a list of parameter tensors.
inline void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                      AdamState& state, double lr, const AdamHyper& h = {}) {
  require(params.size() == grads.size(), Errc::ShapeMismatch, "parameter/gradient tensor count");
  if (state.step == 0 && state.m.empty()) {
    for (auto p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  require(state.m.size() == params.size() && state.v.size() == params.size(), Errc::ShapeMismatch,
          "optimizer state tensor count");
  for (std::size_t t = 0; t < params.size(); ++t)
    require(params[t].size() == grads[t].size() && state.m[t].size() == params[t].size() &&
                state.v[t].size() == params[t].size(),
            Errc::ShapeMismatch, "tensor " + std::to_string(t));

  ++state.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& m = state.m[t];
    auto& v = state.v[t];
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double g = grads[t][i];
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      params[t][i] -= lr * mhat / (std::sqrt(vhat) + h.eps);
    }
  }
}

// shadow <- decay * shadow + (1 - decay) * live
inline void ema_update(std::span<double> shadow, std::span<const double> live, double decay) {
  require(shadow.size() == live.size(), Errc::ShapeMismatch, "ema shadow/live sizes");
  require(decay >= 0.0 && decay <= 1.0, Errc::InvalidConfig, "ema decay outside [0,1]");
  for (std::size_t i = 0; i < shadow.size(); ++i) shadow[i] = decay * shadow[i] + (1.0 - decay) * live[i];
}

// lr_min + (lr_max - lr_min) (1 + cos(pi t / t_max)) / 2
inline double cosine_lr(double t, double t_max, double lr_max, double lr_min) {
  require(t >= 0.0 && t <= t_max, Errc::OutOfRange,
          "epoch " + std::to_string(t) + " outside [0, " + std::to_string(t_max) + "]");
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * t / t_max));
}

}  // namespace dgd
