#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mamlcon/nncore.hpp"

namespace mamlcon {

AdamState AdamState::fresh(const ParameterSet& params) {
  AdamState s;
  s.m = MomentSet::zeros_like(params);
  s.v = MomentSet::zeros_like(params);
  return s;
}

AdamResult adam_step(const ParameterSet& params, const GradientSet& grads, const AdamState& state, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!grads.same_layout(params)) throw ShapeError("adam: gradients do not mirror the parameter set");
  if (!state.m.same_layout(params) || !state.v.same_layout(params))
    throw ShapeError("adam: optimizer state does not mirror the parameter set");
  for (const auto& [name, g] : grads)
    for (double x : g.data())
      if (!std::isfinite(x)) throw std::domain_error("non-finite gradient in parameter '" + name + "'");

  AdamResult r{params, state};
  r.state.t = state.t + 1;
  const double t = static_cast<double>(r.state.t);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);

  auto p_it = r.params.begin();
  auto m_it = r.state.m.begin();
  auto v_it = r.state.v.begin();
  for (const auto& [name, g] : grads) {
    auto p = p_it->second.data();
    auto m = m_it->second.data();
    auto v = v_it->second.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
    ++p_it, ++m_it, ++v_it;
  }
  return r;
}

ParameterSet sgd_step(const ParameterSet& params, const GradientSet& grads, double lr) {
  if (!grads.same_layout(params)) throw ShapeError("sgd: gradients do not mirror the parameter set");
  ParameterSet out = params;
  auto g_it = grads.begin();
  for (auto& [name, p] : out) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g_it->second[i];
    ++g_it;
  }
  return out;
}

GradientSet finite_diff_grad(const ScalarLoss& loss_fn, const ParameterSet& params, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  GradientSet out = GradientSet::zeros_like(params);
  ParameterSet probe = params;
  auto g_it = out.begin();
  for (auto& [name, p] : probe) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double orig = p[i];
      p[i] = orig + h;
      const double up = loss_fn(probe);
      p[i] = orig - h;
      const double down = loss_fn(probe);
      p[i] = orig;
      g_it->second[i] = (up - down) / (2.0 * h);
    }
    ++g_it;
  }
  return out;
}

GradientSet add_gradients(const GradientSet& a, const GradientSet& b) {
  if (!a.same_layout(b)) throw ShapeError("cannot add gradient sets with different layouts");
  GradientSet out = a;
  auto b_it = b.begin();
  for (auto& [name, t] : out) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += b_it->second[i];
    ++b_it;
  }
  return out;
}

double max_relative_error(const GradientSet& analytic, const GradientSet& numeric, double floor) {
  if (!analytic.same_layout(numeric)) throw ShapeError("gradient layouts differ");
  double worst = 0.0;
  auto n_it = numeric.begin();
  for (const auto& [name, a] : analytic) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double x = a[i], y = n_it->second[i];
      const double scale = std::max({std::abs(x), std::abs(y), floor});
      worst = std::max(worst, std::abs(x - y) / scale);
    }
    ++n_it;
  }
  return worst;
}

}  // namespace mamlcon
