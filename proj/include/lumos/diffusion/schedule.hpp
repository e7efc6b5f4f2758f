#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "lumos/numcore/tensor.hpp"

namespace lumos::diffusion {

/// Noise tables indexed by timestep t in 1..T. Index 0 is the noise-free
/// state (alpha_bar(0) == 1).
struct NoiseSchedule {
  std::size_t T = 0;
  std::string kind;
  double beta_start = 0.0, beta_end = 0.0;
  std::vector<double> betas;       // betas[t-1] = beta_t
  std::vector<double> alphas;      // 1 - beta_t
  std::vector<double> alpha_bars;  // prod_{s<=t} alpha_s

  double alpha_bar(std::size_t t) const;
};

NoiseSchedule make_schedule(const std::string& kind = "linear", std::size_t T = 1000,
                            double beta_start = 1e-4, double beta_end = 0.02);

/// S timesteps spread evenly over 1..T in strictly decreasing order, first == T.
std::vector<std::size_t> spaced_steps(std::size_t T, std::size_t S);

/// sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps. Differentiable in z0 and eps.
Tensor q_sample(const Tensor& z0, std::size_t t, const Tensor& eps, const NoiseSchedule& sched);
/// Per-sample timesteps: ts[i] applies to z0[i] along the leading axis.
Tensor q_sample(const Tensor& z0, const std::vector<std::size_t>& ts, const Tensor& eps,
                const NoiseSchedule& sched);

Tensor predict_x0_from_eps(const Tensor& z_t, std::size_t t, const Tensor& eps_hat,
                           const NoiseSchedule& sched);

struct ClampRange {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

/// One ancestral step of the spaced reverse process from t to t_prev < t.
/// The posterior mean is formed from z0_hat clamped to `range`; `noise` is
/// scaled by the posterior standard deviation and ignored when t_prev == 0, in
/// which case the clamped z0_hat itself is returned.
Tensor ddpm_step(const Tensor& z_t, std::size_t t, std::size_t t_prev, const Tensor& eps_hat,
                 const NoiseSchedule& sched, const Tensor& noise, ClampRange range = {});

}  // namespace lumos::diffusion
