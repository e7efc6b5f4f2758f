#include "lumos/diffusion/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lumos/numcore/ops.hpp"

namespace lumos::diffusion {
namespace {

void check_t(const char* op, std::size_t t, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.T) {
    throw std::out_of_range(std::string(op) + ": timestep " + std::to_string(t) +
                            " outside 1.." + std::to_string(sched.T));
  }
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
}

}  // namespace

double NoiseSchedule::alpha_bar(std::size_t t) const {
  if (t == 0) return 1.0;
  if (t > T) throw std::out_of_range("alpha_bar: timestep " + std::to_string(t) + " > T");
  return alpha_bars[t - 1];
}

NoiseSchedule make_schedule(const std::string& kind, std::size_t T, double beta_start,
                            double beta_end) {
  if (kind != "linear") throw std::invalid_argument("unknown noise schedule '" + kind + "'");
  if (T < 1) throw std::invalid_argument("schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("schedule needs 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.T = T;
  s.kind = kind;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.betas.resize(T);
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  double prod = 1.0;
  for (std::size_t i = 0; i < T; ++i) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
    s.betas[i] = beta_start + (beta_end - beta_start) * frac;
    s.alphas[i] = 1.0 - s.betas[i];
    prod *= s.alphas[i];
    s.alpha_bars[i] = prod;
  }
  return s;
}

std::vector<std::size_t> spaced_steps(std::size_t T, std::size_t S) {
  if (S < 1 || S > T) {
    throw std::invalid_argument("spaced_steps: S=" + std::to_string(S) + " outside 1.." +
                                std::to_string(T));
  }
  std::vector<std::size_t> out;
  out.reserve(S);
  if (S == 1) {
    out.push_back(T);
    return out;
  }
  for (std::size_t i = 0; i < S; ++i) {
    const double pos = static_cast<double>(i) * static_cast<double>(T - 1) / static_cast<double>(S - 1);
    out.push_back(static_cast<std::size_t>(std::llround(pos)) + 1);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

Tensor q_sample(const Tensor& z0, std::size_t t, const Tensor& eps, const NoiseSchedule& sched) {
  check_t("q_sample", t, sched);
  check_same_shape("q_sample", z0, eps);
  const double ab = sched.alpha_bar(t);
  return add(scale(z0, std::sqrt(ab)), scale(eps, std::sqrt(1.0 - ab)));
}

Tensor q_sample(const Tensor& z0, const std::vector<std::size_t>& ts, const Tensor& eps,
                const NoiseSchedule& sched) {
  check_same_shape("q_sample", z0, eps);
  if (z0.rank() < 1 || ts.size() != z0.dim(0)) {
    throw ShapeError("q_sample: " + std::to_string(ts.size()) + " timesteps for batch shape " +
                     shape_str(z0.shape()));
  }
  Shape coef_shape(z0.rank(), 1);
  coef_shape[0] = ts.size();
  std::vector<double> a(ts.size()), b(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    check_t("q_sample", ts[i], sched);
    a[i] = std::sqrt(sched.alpha_bar(ts[i]));
    b[i] = std::sqrt(1.0 - sched.alpha_bar(ts[i]));
  }
  const Tensor ca = Tensor::from_values(coef_shape, a, z0.dtype());
  const Tensor cb = Tensor::from_values(coef_shape, b, z0.dtype());
  return add(mul(z0, ca), mul(eps, cb));
}

Tensor predict_x0_from_eps(const Tensor& z_t, std::size_t t, const Tensor& eps_hat,
                           const NoiseSchedule& sched) {
  check_t("predict_x0_from_eps", t, sched);
  check_same_shape("predict_x0_from_eps", z_t, eps_hat);
  const double ab = sched.alpha_bar(t);
  return scale(sub(z_t, scale(eps_hat, std::sqrt(1.0 - ab))), 1.0 / std::sqrt(ab));
}

Tensor ddpm_step(const Tensor& z_t, std::size_t t, std::size_t t_prev, const Tensor& eps_hat,
                 const NoiseSchedule& sched, const Tensor& noise, ClampRange range) {
  if (t_prev >= t) {
    throw std::invalid_argument("ddpm_step: t_prev=" + std::to_string(t_prev) +
                                " must be below t=" + std::to_string(t));
  }
  check_t("ddpm_step", t, sched);
  check_same_shape("ddpm_step", z_t, eps_hat);
  detail::require_same_dtype("ddpm_step", z_t, eps_hat);
  if (t_prev > 0) {
    check_same_shape("ddpm_step", z_t, noise);
    detail::require_same_dtype("ddpm_step", z_t, noise);
  }

  const double ab_t = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(t_prev);
  const double beta = 1.0 - ab_t / ab_prev;  // effective beta of the spaced step
  const double coef_x0 = std::sqrt(ab_prev) * beta / (1.0 - ab_t);
  const double coef_xt = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab_t);
  const double sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab_t) * beta);
  const double inv_sqrt_ab = 1.0 / std::sqrt(ab_t);
  const double sqrt_one_minus = std::sqrt(1.0 - ab_t);

  NoGradGuard no_grad;
  return dispatch(z_t.dtype(), [&]<class T>() {
    const auto zt = z_t.data<T>();
    const auto eh = eps_hat.data<T>();
    std::span<const T> nz;
    if (t_prev > 0) nz = noise.data<T>();
    std::vector<T> out(zt.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      double x0 = (static_cast<double>(zt[i]) - sqrt_one_minus * eh[i]) * inv_sqrt_ab;
      x0 = std::clamp(x0, range.lo, range.hi);
      if (t_prev == 0) {
        out[i] = static_cast<T>(x0);
      } else {
        out[i] = static_cast<T>(coef_x0 * x0 + coef_xt * zt[i] + sigma * nz[i]);
      }
    }
    return Tensor::from_vector(z_t.shape(), std::move(out));
  });
}

}  // namespace lumos::diffusion
