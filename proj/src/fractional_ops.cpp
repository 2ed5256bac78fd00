#include "fracheat/fractional_ops.hpp"

#include "fracheat/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fracheat::ops {

namespace {

void check_sigma(double sigma) {
  if (!(sigma > 0.0 && sigma < 1.0)) throw DomainError("sigma must lie in (0,1)");
}

// b^{a} - c^{a} for b >= c >= 0, a in (0,1), without cancellation.
double power_gap(double b, double c, double a) {
  if (c <= 0.0) return std::pow(b, a);
  return -std::pow(b, a) * std::expm1(a * std::log(c / b));
}

// Product-integration sum for the part of the Marchaud derivative carried by the
// samples: [v_0 (t-s_0)^{-sigma} + sum slope_j D_j] / Gamma(1-sigma), with
// D_j = int_{s_j}^{s_{j+1}} (t-s)^{-sigma} ds. Samples must end exactly at t.
template <class Get>
double product_sum(std::span<const double> s, Get&& v, double sigma) {
  const std::size_t m = s.size();
  const double t = s[m - 1];
  const double a = 1.0 - sigma;
  double acc = v(0) * std::pow(t - s[0], -sigma);
  for (std::size_t j = 0; j + 1 < m; ++j) {
    const double h = s[j + 1] - s[j];
    const double slope = (v(j + 1) - v(j)) / h;
    acc += slope * power_gap(t - s[j], t - s[j + 1], a) / a;
  }
  return acc / std::tgamma(a);
}

} // namespace

TimeHistory::TimeHistory(std::vector<double> times, std::vector<double> values, TailModel tail)
    : times_(std::move(times)), values_(std::move(values)), tail_(tail) {
  if (times_.size() < 2) throw std::invalid_argument("TimeHistory needs at least 2 samples");
  if (times_.size() != values_.size())
    throw std::invalid_argument("TimeHistory: times and values differ in length");
  for (std::size_t i = 1; i < times_.size(); ++i)
    if (!(times_[i] > times_[i - 1]))
      throw std::invalid_argument("TimeHistory: sample times must be strictly increasing");
  if (tail_.kind == TailModel::Kind::power_decay && !(times_[0] < 0.0))
    throw InvalidHistory("power-decay tail needs a first sample time below 0");
}

double TimeHistory::value_at(double t) const {
  if (t < times_.front() || t > times_.back()) throw DomainError("TimeHistory: t out of range");
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  if (it == times_.end()) return values_.back();
  const auto j = static_cast<std::size_t>(it - times_.begin()) - 1;
  const double w = (t - times_[j]) / (times_[j + 1] - times_[j]);
  return values_[j] + w * (values_[j + 1] - values_[j]);
}

double marchaud(const TimeHistory& h, double t, double sigma) {
  check_sigma(sigma);
  const auto ts = h.times();
  const auto vs = h.values();
  if (h.tail().kind == TailModel::Kind::power_decay && !(h.tail().gamma_h > sigma))
    throw InvalidHistory("power-decay tail needs gamma_H > sigma (got " +
                         std::to_string(h.tail().gamma_h) + ")");
  if (!(t > ts.front()) || t > ts.back()) throw DomainError("marchaud: t outside (t0, t_last]");

  // Samples up to t, closed by the interpolated value at t itself.
  std::vector<double> s(ts.begin(), std::upper_bound(ts.begin(), ts.end(), t));
  std::vector<double> v(vs.begin(), vs.begin() + static_cast<long>(s.size()));
  if (s.back() < t) {
    s.push_back(t);
    v.push_back(h.value_at(t));
  }
  double result = product_sum(s, [&](std::size_t j) { return v[j]; }, sigma);

  if (h.tail().kind == TailModel::Kind::power_decay) {
    // (1/|Gamma(-sigma)|) int_{-inf}^{t0} v(s) (t-s)^{-1-sigma} ds with s = t0 - w.
    const double t0 = ts.front();
    const double c = h.tail().c;
    const double g = h.tail().gamma_h;
    const double tail = quad::half_line(
        [&](double w) { return c * std::pow(w - t0, -g) * std::pow(t - t0 + w, -1.0 - sigma); },
        0.0);
    result -= tail / kernels::abs_gamma_neg(sigma);
  }
  return result;
}

double marchaud_power_rule(double nu, double sigma, double t) {
  check_sigma(sigma);
  if (!(nu > sigma - 1.0)) throw DomainError("power rule needs nu > sigma - 1");
  if (!(t > 0.0)) throw DomainError("power rule needs t > 0");
  return std::exp(std::lgamma(nu + 1.0) - std::lgamma(nu + 1.0 - sigma)) * std::pow(t, nu - sigma);
}

void SpaceTimeField::validate() const {
  if (!grid) throw std::invalid_argument("SpaceTimeField: missing grid");
  if (!history) throw InvalidHistory("SpaceTimeField: memory data for t <= 0 is missing");
  if (times.empty() || times.size() != values.size())
    throw std::invalid_argument("SpaceTimeField: times and slices differ in length");
  if (times.front() != 0.0) throw std::invalid_argument("SpaceTimeField: first time must be 0");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1]))
      throw std::invalid_argument("SpaceTimeField: times must be strictly increasing");
  for (const auto& v : values) {
    if (v.size() != grid->size()) throw std::invalid_argument("SpaceTimeField: slice size mismatch");
    for (double x : v)
      if (!std::isfinite(x)) throw std::invalid_argument("SpaceTimeField: non-finite value");
  }
}

std::size_t SpaceTimeField::time_index(double t) const {
  const auto it = std::lower_bound(times.begin(), times.end(), t * (1.0 - 1e-12));
  if (it == times.end() || std::abs(*it - t) > 1e-12 * std::max(1.0, std::abs(t)))
    throw DomainError("time " + std::to_string(t) + " is not a stored field time");
  return static_cast<std::size_t>(it - times.begin());
}

double containment_fraction(const SpaceTimeField& field) {
  double worst = 0.0;
  for (const auto& v : field.values)
    worst = std::max(worst, spectral::boundary_mass_fraction(*field.grid, v, 0.25 * field.grid->length()));
  return worst;
}

std::vector<double> master_apply_slice(const SpaceTimeField& field, std::size_t i,
                                       const kernels::KernelParams& kp) {
  field.validate();
  if (i == 0 || i >= field.times.size()) throw DomainError("master_apply needs 0 < i < #times");
  const auto& g = *field.grid;
  spectral::Fft fft(g);
  const std::size_t nm = g.modes();
  const auto lam = g.lambdas();
  const double t = field.times[i];
  const double sigma = kp.sigma;

  std::vector<std::vector<spectral::cplx>> coeffs(i + 1);
  for (std::size_t j = 0; j <= i; ++j) coeffs[j] = fft.forward(field.values[j]);
  const auto hist = field.history->history_modes(lam, t, g.volume(), kp);

  std::span<const double> s(field.times.data(), i + 1);
  std::vector<spectral::cplx> out(nm);
  std::vector<double> decay(i + 1);
  for (std::size_t k = 0; k < nm; ++k) {
    for (std::size_t j = 0; j <= i; ++j) decay[j] = std::exp(-lam[k] * (t - s[j]));
    const double re = product_sum(s, [&](std::size_t j) { return decay[j] * coeffs[j][k].real(); }, sigma);
    const double im = product_sum(s, [&](std::size_t j) { return decay[j] * coeffs[j][k].imag(); }, sigma);
    out[k] = spectral::cplx(re - hist[k], im);
  }
  return fft.inverse(out);
}

double master_apply(const SpaceTimeField& field, std::span<const double> x, double t,
                    const kernels::KernelParams& kp) {
  const std::size_t i = field.time_index(t);
  const auto slice = master_apply_slice(field, i, kp);
  return slice[field.grid->nearest_index(x)];
}

std::vector<double> frac_laplacian(std::span<const double> u, const spectral::BoxGrid& grid,
                                   double sigma) {
  check_sigma(sigma);
  spectral::Fft fft(grid);
  return spectral::apply_multiplier(fft, u, [sigma](double lam) {
    return lam > 0.0 ? std::pow(lam, sigma) : 0.0;
  });
}

memory::Bounded memory_forcing(const memory::MemoryData& f, std::span<const double> x, double t,
                               const kernels::KernelParams& kp, double tail_tol) {
  f.validate(kp);
  return f.forcing_value(kernels::squared_norm(x), t, kp, tail_tol);
}

} // namespace fracheat::ops
