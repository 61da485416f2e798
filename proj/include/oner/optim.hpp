#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "oner/tensor.hpp"

namespace oner {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over a fixed list of parameter tensors. Moment slots
// are allocated on the first step and validated against parameter shapes on
// every step after that.
class AdamState {
 public:
  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  std::size_t step_count() const { return step_; }

 private:
  friend void adam_step(AdamState&, const std::vector<Tensor>&,
                        const std::vector<std::span<const double>>&);
  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
  };
  AdamConfig cfg_;
  std::vector<Slot> slots_;
  std::size_t step_ = 0;
};

// In-place update of `params` from explicit gradients.
void adam_step(AdamState& state, const std::vector<Tensor>& params,
               const std::vector<std::span<const double>>& grads);
// Convenience: gradients taken from each parameter's grad buffer.
void adam_step(AdamState& state, const std::vector<Tensor>& params);

struct LbfgsConfig {
  std::size_t history = 10;          // stored curvature pairs
  std::size_t max_iterations = 100;
  double tolerance = 1e-8;           // gradient-norm stop
  double armijo_c1 = 1e-4;
  double backtrack_shrink = 0.5;
  std::size_t max_halvings = 30;
};

enum class LbfgsStatus { kConverged, kMaxIterations, kLineSearchFailed };

struct LbfgsResult {
  std::vector<double> x;  // best iterate seen
  double value = 0.0;
  double grad_norm = 0.0;
  std::size_t iterations = 0;
  LbfgsStatus status = LbfgsStatus::kConverged;
};

// Objective returns f(x) and writes df/dx into `grad` (same length as x).
using LbfgsObjective =
    std::function<double(std::span<const double> x, std::span<double> grad)>;

// Two-loop-recursion L-BFGS with Armijo backtracking. Never returns an
// iterate whose objective exceeds the starting value.
LbfgsResult lbfgs_minimize(const LbfgsObjective& objective,
                           std::vector<double> x0, const LbfgsConfig& cfg = {});

}  // namespace oner
