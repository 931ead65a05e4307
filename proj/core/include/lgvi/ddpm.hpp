#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "lgvi/rng.hpp"
#include "lgvi/tensor.hpp"

namespace lgvi::ddpm {

// Diffusion process core: variance schedule, closed-form forward noising,
// and ancestral reverse sampling with the epsilon parameterization.
// Timesteps are 1-based: t in [1, S].

struct NoiseSchedule {
  int steps = 0;
  std::vector<double> betas;       // beta_t
  std::vector<double> alphas;      // 1 - beta_t
  std::vector<double> alpha_bars;  // prod_{s<=t} alpha_s

  double beta(int t) const { return betas[t - 1]; }
  double alpha(int t) const { return alphas[t - 1]; }
  double alpha_bar(int t) const { return alpha_bars[t - 1]; }
};

enum class ScheduleKind { linear };

// Defaults sized so that alpha_bar at the final step is ~2e-3: the terminal
// marginal is indistinguishable from a standard normal, which sampling
// (started from pure noise) relies on.
inline constexpr int kDefaultSteps = 100;
inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.12;

inline NoiseSchedule make_schedule(int steps, double beta_start, double beta_end,
                                   ScheduleKind kind = ScheduleKind::linear) {
  (void)kind;
  if (steps < 1) throw std::invalid_argument("make_schedule: steps must be >= 1");
  if (!(beta_start > 0) || !(beta_start <= beta_end) || !(beta_end < 1))
    throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.steps = steps;
  s.betas.resize(steps);
  s.alphas.resize(steps);
  s.alpha_bars.resize(steps);
  double prod = 1.0;
  for (int i = 0; i < steps; ++i) {
    double b = steps == 1 ? beta_start
                          : beta_start + (beta_end - beta_start) * i / (steps - 1.0);
    s.betas[i] = b;
    s.alphas[i] = 1.0 - b;
    prod *= s.alphas[i];
    s.alpha_bars[i] = prod;
  }
  return s;
}

inline NoiseSchedule default_schedule() {
  return make_schedule(kDefaultSteps, kDefaultBetaStart, kDefaultBetaEnd);
}

inline void check_step(const NoiseSchedule& s, int t) {
  if (t < 1 || t > s.steps) throw std::out_of_range("diffusion step out of range");
}

// x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps  (closed-form marginal of the
// stepwise forward process).
template <class S>
Tensor<S> add_noise(const Tensor<S>& x0, const Tensor<S>& eps, int t, const NoiseSchedule& sched) {
  check_same_shape(x0, eps, "add_noise");
  check_step(sched, t);
  double a = std::sqrt(sched.alpha_bar(t));
  double b = std::sqrt(1.0 - sched.alpha_bar(t));
  Tensor<S> out = x0;
  for (int64_t i = 0; i < out.numel(); ++i)
    out.data[i] = static_cast<S>(a * x0.data[i] + b * eps.data[i]);
  return out;
}

// One reverse step: mean from the epsilon parameterization, fixed variance
// sigma_t^2 = beta_t. The final step (t = 1) is deterministic; callers must
// pass zero noise there.
template <class S>
Tensor<S> ddpm_step(const Tensor<S>& x_t, const Tensor<S>& eps_hat, int t,
                    const NoiseSchedule& sched, const Tensor<S>& noise) {
  check_same_shape(x_t, eps_hat, "ddpm_step");
  check_same_shape(x_t, noise, "ddpm_step noise");
  check_step(sched, t);
  if (t == 1) {
    for (const auto& v : noise.data)
      if (v != S(0)) throw std::invalid_argument("ddpm_step: t=1 requires zero noise");
  }
  double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
  double coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
  double sigma = std::sqrt(sched.beta(t));
  Tensor<S> out = x_t;
  for (int64_t i = 0; i < out.numel(); ++i) {
    double mu = inv_sqrt_alpha * (static_cast<double>(x_t.data[i]) - coef * eps_hat.data[i]);
    out.data[i] = static_cast<S>(mu + sigma * noise.data[i]);
  }
  return out;
}

// Denoiser callback: (x_t, t) -> eps_hat, conditioning already bound.
template <class S>
using Denoiser = std::function<Tensor<S>(const Tensor<S>&, int)>;

// Ancestral sampling from seeded standard normal. The RNG draw order is
// fixed: initial noise first, then one fresh tensor per step down to t = 2.
template <class S>
Tensor<S> sample(const Denoiser<S>& denoiser, const Shape& shape, const NoiseSchedule& sched,
                 uint64_t seed) {
  Rng rng(hash_mix(seed, 0xd1ffu));
  Tensor<S> x(shape);
  for (auto& v : x.data) v = static_cast<S>(rng.normal());
  for (int t = sched.steps; t >= 1; --t) {
    Tensor<S> eps_hat = denoiser(x, t);
    if (!eps_hat.same_shape(x)) throw std::invalid_argument("sample: denoiser changed shape");
    Tensor<S> noise(shape);
    if (t > 1)
      for (auto& v : noise.data) v = static_cast<S>(rng.normal());
    x = ddpm_step(x, eps_hat, t, sched, noise);
  }
  return x;
}

}  // namespace lgvi::ddpm
