#include "oner/optim.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>

#include "oner/errors.hpp"

namespace oner {

void adam_step(AdamState& state, const std::vector<Tensor>& params,
               const std::vector<std::span<const double>>& grads) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: params/grads count mismatch");
  }
  if (state.slots_.empty()) {
    state.slots_.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
      state.slots_[p].m.assign(params[p].size(), 0.0);
      state.slots_[p].v.assign(params[p].size(), 0.0);
    }
  }
  if (state.slots_.size() != params.size()) {
    throw std::invalid_argument("adam_step: state tracks a different "
                                "parameter list");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (state.slots_[p].m.size() != params[p].size() ||
        grads[p].size() != params[p].size()) {
      throw std::invalid_argument("adam_step: shape mismatch at parameter " +
                                  std::to_string(p));
    }
    for (double g : grads[p]) {
      if (!std::isfinite(g)) {
        throw NumericError("adam_step: non-finite gradient at parameter " +
                           std::to_string(p));
      }
    }
  }

  const AdamConfig& c = state.cfg_;
  state.step_ += 1;
  const double t = static_cast<double>(state.step_);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& slot = state.slots_[p];
    std::span<double> w = const_cast<Tensor&>(params[p]).mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = grads[p][i];
      slot.m[i] = c.beta1 * slot.m[i] + (1.0 - c.beta1) * g;
      slot.v[i] = c.beta2 * slot.v[i] + (1.0 - c.beta2) * g * g;
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      w[i] -= c.lr * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

void adam_step(AdamState& state, const std::vector<Tensor>& params) {
  std::vector<std::span<const double>> grads;
  grads.reserve(params.size());
  for (const Tensor& p : params) {
    if (!p.requires_grad()) {
      throw std::invalid_argument("adam_step: parameter does not carry a "
                                  "gradient buffer");
    }
    grads.push_back(p.grad());
  }
  adam_step(state, params, grads);
}

namespace {

double dot_vec(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm_vec(std::span<const double> a) { return std::sqrt(dot_vec(a, a)); }

}  // namespace

LbfgsResult lbfgs_minimize(const LbfgsObjective& objective,
                           std::vector<double> x0, const LbfgsConfig& cfg) {
  if (cfg.history < 1 || cfg.tolerance <= 0.0) {
    throw std::invalid_argument("lbfgs_minimize: invalid config");
  }
  const std::size_t n = x0.size();
  std::vector<double> x = std::move(x0);
  std::vector<double> g(n, 0.0);
  double f = objective(x, g);
  if (!std::isfinite(f)) {
    throw std::domain_error("lbfgs_minimize: objective non-finite at x0");
  }
  for (double gi : g) {
    if (!std::isfinite(gi)) {
      throw std::domain_error("lbfgs_minimize: gradient non-finite at x0");
    }
  }

  LbfgsResult result;
  result.x = x;
  result.value = f;
  result.grad_norm = norm_vec(g);
  result.status = LbfgsStatus::kMaxIterations;

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> pairs;

  std::vector<double> dir(n), x_try(n), g_try(n), alpha_buf;
  for (std::size_t iter = 0; iter < cfg.max_iterations; ++iter) {
    result.iterations = iter;
    if (norm_vec(g) <= cfg.tolerance) {
      result.status = LbfgsStatus::kConverged;
      break;
    }

    // Two-loop recursion.
    dir.assign(g.begin(), g.end());
    alpha_buf.assign(pairs.size(), 0.0);
    for (std::size_t k = pairs.size(); k-- > 0;) {
      const Pair& p = pairs[k];
      alpha_buf[k] = p.rho * dot_vec(p.s, dir);
      for (std::size_t i = 0; i < n; ++i) dir[i] -= alpha_buf[k] * p.y[i];
    }
    if (!pairs.empty()) {
      const Pair& last = pairs.back();
      const double gamma = dot_vec(last.s, last.y) / dot_vec(last.y, last.y);
      for (double& d : dir) d *= gamma;
    }
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const Pair& p = pairs[k];
      const double beta = p.rho * dot_vec(p.y, dir);
      for (std::size_t i = 0; i < n; ++i)
        dir[i] += (alpha_buf[k] - beta) * p.s[i];
    }
    for (double& d : dir) d = -d;

    double slope = dot_vec(g, dir);
    if (!(slope < 0.0)) {  // not a descent direction: fall back to steepest
      for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];
      slope = dot_vec(g, dir);
      pairs.clear();
    }

    // Armijo backtracking.
    double step = 1.0;
    bool accepted = false;
    double f_try = f;
    for (std::size_t h = 0; h <= cfg.max_halvings; ++h) {
      for (std::size_t i = 0; i < n; ++i) x_try[i] = x[i] + step * dir[i];
      f_try = objective(x_try, g_try);
      bool finite = std::isfinite(f_try);
      if (finite) {
        for (double gi : g_try) finite = finite && std::isfinite(gi);
      }
      if (finite && f_try <= f + cfg.armijo_c1 * step * slope) {
        accepted = true;
        break;
      }
      step *= cfg.backtrack_shrink;
    }
    if (!accepted) {
      result.status = LbfgsStatus::kLineSearchFailed;
      break;
    }

    Pair p;
    p.s.resize(n);
    p.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      p.s[i] = step * dir[i];
      p.y[i] = g_try[i] - g[i];
    }
    const double sy = dot_vec(p.s, p.y);
    if (sy > 1e-12 * norm_vec(p.s) * norm_vec(p.y)) {
      p.rho = 1.0 / sy;
      pairs.push_back(std::move(p));
      if (pairs.size() > cfg.history) pairs.pop_front();
    }

    for (std::size_t i = 0; i < n; ++i) x[i] = x_try[i];
    g.assign(g_try.begin(), g_try.end());
    f = f_try;
    if (f < result.value) {
      result.value = f;
      result.x = x;
    }
  }

  // Report the gradient norm at the returned iterate.
  result.grad_norm = norm_vec(g);
  if (result.status == LbfgsStatus::kMaxIterations) {
    result.iterations = cfg.max_iterations;
  }
  return result;
}

}  // namespace oner
