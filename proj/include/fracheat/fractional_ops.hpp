#pragma once

#include "fracheat/kernels.hpp"
#include "fracheat/memory.hpp"
#include "fracheat/spectral.hpp"

#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace fracheat::ops {

/// How a sampled history continues before its first sample t0.
struct TailModel {
  enum class Kind { zero_before, power_decay };
  Kind kind = Kind::zero_before;
  double c = 0.0;       ///< power_decay: v(s) = c |s|^{-gamma_h}
  double gamma_h = 0.0;

  static TailModel zero_before() { return {}; }
  static TailModel power_decay(double c, double gamma_h) {
    return {Kind::power_decay, c, gamma_h};
  }
};

/// Scalar history v(s), sampled on a strictly increasing grid and interpolated
/// piecewise-linearly between samples.
class TimeHistory {
public:
  TimeHistory(std::vector<double> times, std::vector<double> values, TailModel tail = {});

  std::span<const double> times() const { return times_; }
  std::span<const double> values() const { return values_; }
  const TailModel& tail() const { return tail_; }

  /// Interpolated value on [t0, t_last].
  double value_at(double t) const;

private:
  std::vector<double> times_;
  std::vector<double> values_;
  TailModel tail_;
};

/// Marchaud derivative at t in (t0, t_last] by product integration: the data is
/// linear on each sample panel and the weight (t-s)^{-1-sigma} is integrated exactly.
double marchaud(const TimeHistory& h, double t, double sigma);

/// Exact Marchaud derivative of s_+^nu: Gamma(nu+1)/Gamma(nu+1-sigma) t^{nu-sigma}.
double marchaud_power_rule(double nu, double sigma, double t);

/// u(x,t) on a periodic box for t in `times` (times[0] == 0), with memory data for t <= 0.
struct SpaceTimeField {
  std::shared_ptr<const spectral::BoxGrid> grid;
  std::vector<double> times;
  std::vector<std::vector<double>> values;
  std::optional<memory::MemoryData> history;

  /// Throws on inconsistent shapes, non-finite values or missing history.
  void validate() const;
  /// Index of the stored time equal to t (relative tolerance 1e-12); throws DomainError otherwise.
  std::size_t time_index(double t) const;
};

/// Fraction of |u| within L/4 of the box boundary, maximized over stored slices.
double containment_fraction(const SpaceTimeField& field);

/// (M u)(., t_i) on every node, i >= 1.
std::vector<double> master_apply_slice(const SpaceTimeField& field, std::size_t i,
                                       const kernels::KernelParams& kp);

/// (M u)(x, t) at a stored node and stored time t > 0.
double master_apply(const SpaceTimeField& field, std::span<const double> x, double t,
                    const kernels::KernelParams& kp);

/// Spectral multiplier |xi|^{2 sigma}.
std::vector<double> frac_laplacian(std::span<const double> u, const spectral::BoxGrid& grid,
                                   double sigma);

/// History term of the mild representation at (x, t), free space, with its error bar.
memory::Bounded memory_forcing(const memory::MemoryData& f, std::span<const double> x, double t,
                               const kernels::KernelParams& kp, double tail_tol = 1e-8);

} // namespace fracheat::ops
