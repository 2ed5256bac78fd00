#pragma once

#include <span>
#include <stdexcept>
#include <string>

namespace fracheat {

/// Raised when a kernel or operator is evaluated outside its domain
/// (non-positive time, non-positive vertical coordinate, divergent power).
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

namespace kernels {

/// Gamma function. Poles (non-positive integers) raise DomainError.
double gamma_fn(double x);

/// log|Gamma(x)|.
double log_abs_gamma(double x);

/// |Gamma(-s)| = Gamma(1-s)/s for s in (0,1).
double abs_gamma_neg(double s);

/// Order sigma and dimension N of the operator, with every derived constant.
///
/// gamma_w  = 1 - 2 sigma                        (extension weight exponent)
/// kappa    = Gamma(sigma) / (2^gamma_w Gamma(1-sigma))
/// d_pois   = 1 / ((4 pi)^{N/2} 2^{2 sigma} Gamma(sigma))
/// a_green  = (4 pi)^{-N/2} / Gamma(sigma)
/// c_flap   = 4^sigma Gamma(N/2 + sigma) / (pi^{N/2} |Gamma(-sigma)|)
/// rho_test = 2 / (pi^{N/2} Gamma(1 - sigma))
struct KernelParams {
  double sigma = 0.5;
  int dim = 1;
  double gamma_w = 0.0;
  double kappa = 1.0;
  double d_pois = 0.0;
  double a_green = 0.0;
  double c_flap = 0.0;
  double rho_test = 0.0;

  static KernelParams make(double sigma, int dim);
};

double squared_norm(std::span<const double> x);

/// K_t(x) = (4 pi t)^{-N/2} exp(-|x|^2 / 4t).
double heat_kernel(std::span<const double> x, double t, const KernelParams& kp);
double heat_kernel_r2(double r2, double t, int dim);

/// L_sigma(t) = t^{-1-sigma} / |Gamma(-sigma)|.
double time_kernel(double t, const KernelParams& kp);

/// M(x,t) = K_t(x) L_sigma(t).
double master_kernel(std::span<const double> x, double t, const KernelParams& kp);

/// G(x,t) = A_{N,sigma} t^{-N/2-1+sigma} exp(-|x|^2/4t) for t > 0, zero otherwise.
double green_kernel(std::span<const double> x, double t, const KernelParams& kp);
double green_kernel_r2(double r2, double t, const KernelParams& kp);

/// P_y(x,t) = d_{N,sigma} y^{2 sigma} t^{-N/2-1-sigma} exp(-(|x|^2+y^2)/4t).
double poisson_kernel(std::span<const double> x, double y, double t, const KernelParams& kp);

/// Space integral of P_y(.,t): y^{2 sigma} t^{-1-sigma} e^{-y^2/4t} / (4^sigma Gamma(sigma)).
double poisson_time_marginal(double y, double t, const KernelParams& kp);

/// Closed form of the time integral of M(x,.) over (0, inf): c_flap |x|^{-N-2 sigma}.
double flap_kernel(std::span<const double> x, const KernelParams& kp);

} // namespace kernels
} // namespace fracheat
