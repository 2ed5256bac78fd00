#pragma once

#include "fracheat/kernels.hpp"

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fracheat {

/// Memory data or a time history that violates the decay hypothesis on M f,
/// or a family that cannot serve the requested operation.
class InvalidHistory : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

namespace memory {

/// A value with a rigorous error bar: the true quantity lies in [value - error, value + error].
struct Bounded {
  double value = 0.0;
  double error = 0.0;
};

enum class Family {
  zero,
  constant,        ///< f = A for all s <= 0
  power_ramp,      ///< f = A (s + t1)_+^eta, constant in space
  self_similar,    ///< f = A (s + t1)_+^eta K_{s+t1}(x)
  explicit_blowup, ///< f = z(s) = c (T - s)^{-sigma/(p-1)}, constant in space
  /// f = A K_{t1}(x) for every s <= 0. Fails the decay hypothesis, so it cannot
  /// drive a solver, but its extension and history term are closed-form.
  stationary_gaussian,
};

std::string to_string(Family f);
Family family_from_string(const std::string& name);

/// History of the solution on t <= 0, restricted to analytic families whose
/// image under the master operator is known in closed form.
///
/// All mode quantities use the centered Fourier convention of spectral::BoxGrid:
/// a spatial profile K_r(x) on a box of volume V has coefficients exp(-lambda r)/V,
/// and a space-homogeneous profile only has the lambda == 0 coefficient.
class MemoryData {
public:
  MemoryData() = default;

  static MemoryData zero();
  static MemoryData constant(double amplitude);
  static MemoryData power_ramp(double amplitude, double shift, double exponent);
  static MemoryData self_similar(double amplitude, double shift, double exponent);
  /// A exp(-|x|^2 / 4(s+t1)) for s > -t1: self_similar with eta = N/2.
  static MemoryData gaussian_bump(double amplitude, double shift, int dim);
  static MemoryData explicit_blowup(double p, double horizon);
  static MemoryData stationary_gaussian(double amplitude, double width);

  Family family() const { return family_; }
  double amplitude() const { return amplitude_; }
  double shift() const { return shift_; }
  double exponent() const { return exponent_; }
  double reaction_exponent() const { return p_; }
  double horizon() const { return horizon_; }
  bool space_homogeneous() const;

  /// Rejects parameter combinations that are not admissible for the given operator order.
  void validate(const kernels::KernelParams& kp) const;

  /// f(x,s) for s <= 0 (radial families take |x|^2).
  double value(double r2, double s, const kernels::KernelParams& kp) const;
  /// (M f)(x,s) for s <= 0, closed form.
  double master_value(double r2, double s, const kernels::KernelParams& kp) const;
  /// sup of f over space and s <= 0 (infinity for unbounded members).
  double sup_norm(const kernels::KernelParams& kp) const;

  /// Decay exponent gamma_H and constant c with |M f(s)| <= c |s|^{-gamma_H} for s <= -1.
  /// Compactly supported histories report gamma_H = +inf and c = 0.
  double decay_exponent(const kernels::KernelParams& kp) const;
  double decay_constant(const kernels::KernelParams& kp) const;

  /// Coefficient of f(., 0).
  double initial_mode(double lambda, double volume, const kernels::KernelParams& kp) const;

  /// Coefficient of the history term of the mild representation,
  ///   int_{-inf}^0 int M f(z,s) G(x-z, t-s) dz ds,
  /// at t > 0. Histories with an infinite tail are truncated where the decay
  /// bound drops below `tail_tol`; the bound is folded into the error bar.
  Bounded forcing_mode(double lambda, double t, double volume, const kernels::KernelParams& kp,
                       double tail_tol) const;

  /// Pointwise history term of the mild representation (free space).
  Bounded forcing_value(double r2, double t, const kernels::KernelParams& kp, double tail_tol) const;

  /// Coefficient of |Gamma(-sigma)|^{-1} int_{-inf}^0 (K_{t-s} * f(.,s)) (t-s)^{-1-sigma} ds.
  double history_mode(double lambda, double t, double volume, const kernels::KernelParams& kp) const;

  /// Coefficient of the caloric extension at time 0, g(., y).
  double extension_mode(double lambda, double y, double volume, const kernels::KernelParams& kp) const;

  // Batched versions over a whole spectrum; the time/vertical profile is evaluated once.
  std::vector<double> forcing_modes(std::span<const double> lambdas, double t, double volume,
                                    const kernels::KernelParams& kp, double tail_tol,
                                    double* error_bar = nullptr) const;
  std::vector<double> history_modes(std::span<const double> lambdas, double t, double volume,
                                    const kernels::KernelParams& kp) const;
  std::vector<double> extension_modes(std::span<const double> lambdas, double y, double volume,
                                      const kernels::KernelParams& kp) const;
  std::vector<double> initial_modes(std::span<const double> lambdas, double volume,
                                    const kernels::KernelParams& kp) const;

private:
  // Time-profile helpers shared by the power-type families (spatial factor stripped).
  double profile_forcing(double t, const kernels::KernelParams& kp) const;
  double profile_history(double t, const kernels::KernelParams& kp) const;
  double profile_extension(double y, const kernels::KernelParams& kp) const;
  double spatial_factor(double lambda, double r, double volume) const;

  Family family_ = Family::zero;
  double amplitude_ = 0.0;
  double shift_ = 0.0;
  double exponent_ = 0.0;
  double p_ = 0.0;
  double horizon_ = 0.0;
};

/// c with c^{p-1} = Gamma(sigma p/(p-1)) / Gamma(sigma/(p-1)).
double explicit_blowup_constant(double p, double sigma);

} // namespace memory
} // namespace fracheat
