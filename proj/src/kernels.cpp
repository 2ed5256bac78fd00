#include "fracheat/kernels.hpp"

#include <cmath>
#include <numbers>

namespace fracheat::kernels {

namespace {

constexpr double kPi = std::numbers::pi;

void require_sigma(double sigma) {
  if (!(sigma > 0.0 && sigma < 1.0))
    throw DomainError("sigma must lie in (0,1), got " + std::to_string(sigma));
}

void require_positive_time(double t, const char* what) {
  if (!(t > 0.0))
    throw DomainError(std::string(what) + ": t must be positive, got " + std::to_string(t));
}

} // namespace

double gamma_fn(double x) {
  if (x <= 0.0 && x == std::nearbyint(x))
    throw DomainError("Gamma has a pole at " + std::to_string(x));
  return std::tgamma(x);
}

double log_abs_gamma(double x) {
  if (x <= 0.0 && x == std::nearbyint(x))
    throw DomainError("Gamma has a pole at " + std::to_string(x));
  return std::lgamma(x);
}

double abs_gamma_neg(double s) {
  require_sigma(s);
  return std::tgamma(1.0 - s) / s;
}

KernelParams KernelParams::make(double sigma, int dim) {
  require_sigma(sigma);
  if (dim < 1)
    throw DomainError("dimension must be >= 1, got " + std::to_string(dim));
  KernelParams kp;
  kp.sigma = sigma;
  kp.dim = dim;
  kp.gamma_w = 1.0 - 2.0 * sigma;
  const double half_n = 0.5 * dim;
  const double g_sigma = std::tgamma(sigma);
  const double g_one_minus = std::tgamma(1.0 - sigma);
  kp.kappa = g_sigma / (std::pow(2.0, kp.gamma_w) * g_one_minus);
  kp.d_pois = 1.0 / (std::pow(4.0 * kPi, half_n) * std::pow(2.0, 2.0 * sigma) * g_sigma);
  kp.a_green = std::pow(4.0 * kPi, -half_n) / g_sigma;
  kp.c_flap = std::pow(4.0, sigma) * std::tgamma(half_n + sigma) /
              (std::pow(kPi, half_n) * abs_gamma_neg(sigma));
  kp.rho_test = 2.0 / (std::pow(kPi, half_n) * g_one_minus);
  return kp;
}

double squared_norm(std::span<const double> x) {
  double r2 = 0.0;
  for (double xi : x) r2 += xi * xi;
  return r2;
}

double heat_kernel_r2(double r2, double t, int dim) {
  require_positive_time(t, "heat_kernel");
  const double log_k = -0.5 * dim * std::log(4.0 * kPi * t) - r2 / (4.0 * t);
  return std::exp(log_k);
}

double heat_kernel(std::span<const double> x, double t, const KernelParams& kp) {
  return heat_kernel_r2(squared_norm(x), t, kp.dim);
}

double time_kernel(double t, const KernelParams& kp) {
  require_positive_time(t, "time_kernel");
  return std::exp(-(1.0 + kp.sigma) * std::log(t) - std::log(abs_gamma_neg(kp.sigma)));
}

double master_kernel(std::span<const double> x, double t, const KernelParams& kp) {
  require_positive_time(t, "master_kernel");
  const double r2 = squared_norm(x);
  const double log_m = -0.5 * kp.dim * std::log(4.0 * kPi * t) - r2 / (4.0 * t) -
                       (1.0 + kp.sigma) * std::log(t) - std::log(abs_gamma_neg(kp.sigma));
  return std::exp(log_m);
}

double green_kernel_r2(double r2, double t, const KernelParams& kp) {
  if (!(t > 0.0)) return 0.0;
  const double log_g = std::log(kp.a_green) + (-0.5 * kp.dim - 1.0 + kp.sigma) * std::log(t) -
                       r2 / (4.0 * t);
  return std::exp(log_g);
}

double green_kernel(std::span<const double> x, double t, const KernelParams& kp) {
  return green_kernel_r2(squared_norm(x), t, kp);
}

double poisson_kernel(std::span<const double> x, double y, double t, const KernelParams& kp) {
  if (!(y > 0.0))
    throw DomainError("poisson_kernel: y must be positive, got " + std::to_string(y));
  require_positive_time(t, "poisson_kernel");
  const double r2 = squared_norm(x);
  const double log_p = std::log(kp.d_pois) + 2.0 * kp.sigma * std::log(y) +
                       (-0.5 * kp.dim - 1.0 - kp.sigma) * std::log(t) - (r2 + y * y) / (4.0 * t);
  return std::exp(log_p);
}

double poisson_time_marginal(double y, double t, const KernelParams& kp) {
  if (!(y > 0.0))
    throw DomainError("poisson_time_marginal: y must be positive, got " + std::to_string(y));
  require_positive_time(t, "poisson_time_marginal");
  const double s = kp.sigma;
  const double log_p = 2.0 * s * std::log(y) - (1.0 + s) * std::log(t) - y * y / (4.0 * t) -
                       s * std::log(4.0) - std::lgamma(s);
  return std::exp(log_p);
}

double flap_kernel(std::span<const double> x, const KernelParams& kp) {
  const double r2 = squared_norm(x);
  if (!(r2 > 0.0)) throw DomainError("flap_kernel: x must be nonzero");
  return kp.c_flap * std::pow(r2, -0.5 * (kp.dim + 2.0 * kp.sigma));
}

} // namespace fracheat::kernels
