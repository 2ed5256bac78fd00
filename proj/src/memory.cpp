#include "fracheat/memory.hpp"

#include "fracheat/quadrature.hpp"

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>

#include <cmath>
#include <limits>
#include <numbers>

namespace fracheat::memory {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// eta within this distance of sigma - 1 is treated as the fundamental-solution member.
constexpr double kFundamentalTol = 1e-12;

bool is_power_family(Family f) { return f == Family::power_ramp || f == Family::self_similar; }

double power_rule_factor(double eta, double sigma) {
  const double a = eta + 1.0 - sigma;
  if (a < kFundamentalTol) return 0.0;
  return std::exp(std::lgamma(eta + 1.0) - std::lgamma(a));
}

} // namespace

std::string to_string(Family f) {
  switch (f) {
  case Family::zero: return "zero";
  case Family::constant: return "constant";
  case Family::power_ramp: return "power_ramp";
  case Family::self_similar: return "self_similar";
  case Family::explicit_blowup: return "explicit_blowup";
  case Family::stationary_gaussian: return "stationary_gaussian";
  }
  return "unknown";
}

Family family_from_string(const std::string& name) {
  for (Family f : {Family::zero, Family::constant, Family::power_ramp, Family::self_similar,
                   Family::explicit_blowup, Family::stationary_gaussian}) {
    if (to_string(f) == name) return f;
  }
  if (name == "gaussian_bump") return Family::self_similar;
  throw InvalidHistory("unknown memory family '" + name + "'");
}

double explicit_blowup_constant(double p, double sigma) {
  if (!(p > 1.0)) throw DomainError("explicit blow-up requires p > 1");
  const double beta = sigma / (p - 1.0);
  const double log_c_pm1 = std::lgamma(sigma * p / (p - 1.0)) - std::lgamma(beta);
  return std::exp(log_c_pm1 / (p - 1.0));
}

MemoryData MemoryData::zero() { return MemoryData{}; }

MemoryData MemoryData::constant(double amplitude) {
  MemoryData m;
  m.family_ = Family::constant;
  m.amplitude_ = amplitude;
  return m;
}

MemoryData MemoryData::power_ramp(double amplitude, double shift, double exponent) {
  MemoryData m;
  m.family_ = Family::power_ramp;
  m.amplitude_ = amplitude;
  m.shift_ = shift;
  m.exponent_ = exponent;
  return m;
}

MemoryData MemoryData::self_similar(double amplitude, double shift, double exponent) {
  MemoryData m;
  m.family_ = Family::self_similar;
  m.amplitude_ = amplitude;
  m.shift_ = shift;
  m.exponent_ = exponent;
  return m;
}

MemoryData MemoryData::gaussian_bump(double amplitude, double shift, int dim) {
  const double half_n = 0.5 * dim;
  return self_similar(amplitude * std::pow(4.0 * std::numbers::pi, half_n), shift, half_n);
}

MemoryData MemoryData::explicit_blowup(double p, double horizon) {
  MemoryData m;
  m.family_ = Family::explicit_blowup;
  m.amplitude_ = 1.0;
  m.p_ = p;
  m.horizon_ = horizon;
  return m;
}

MemoryData MemoryData::stationary_gaussian(double amplitude, double width) {
  MemoryData m;
  m.family_ = Family::stationary_gaussian;
  m.amplitude_ = amplitude;
  m.shift_ = width;
  return m;
}

bool MemoryData::space_homogeneous() const {
  return family_ != Family::self_similar && family_ != Family::stationary_gaussian;
}

void MemoryData::validate(const kernels::KernelParams& kp) const {
  if (!std::isfinite(amplitude_)) throw InvalidHistory("memory amplitude must be finite");
  if (is_power_family(family_)) {
    if (!(shift_ > 0.0)) throw InvalidHistory("memory shift t1 must be positive");
    if (!(exponent_ > -1.0) || exponent_ < kp.sigma - 1.0 - kFundamentalTol)
      throw InvalidHistory("memory exponent must satisfy eta >= sigma - 1 and eta > -1, got " +
                           std::to_string(exponent_));
  }
  if (family_ == Family::explicit_blowup) {
    if (!(p_ > 1.0)) throw InvalidHistory("explicit blow-up history requires p > 1");
    if (!(horizon_ > 0.0)) throw InvalidHistory("explicit blow-up history requires T > 0");
  }
  if (family_ == Family::stationary_gaussian && !(shift_ > 0.0))
    throw InvalidHistory("stationary Gaussian width must be positive");
  const double gh = decay_exponent(kp);
  if (!(gh > kp.sigma))
    throw InvalidHistory("decay exponent gamma_H = " + std::to_string(gh) +
                         " must exceed sigma = " + std::to_string(kp.sigma));
}

double MemoryData::value(double r2, double s, const kernels::KernelParams& kp) const {
  switch (family_) {
  case Family::zero: return 0.0;
  case Family::constant: return amplitude_;
  case Family::power_ramp: {
    const double r = s + shift_;
    return r > 0.0 ? amplitude_ * std::pow(r, exponent_) : 0.0;
  }
  case Family::self_similar: {
    const double r = s + shift_;
    return r > 0.0 ? amplitude_ * std::pow(r, exponent_) * kernels::heat_kernel_r2(r2, r, kp.dim)
                   : 0.0;
  }
  case Family::explicit_blowup: {
    const double c = explicit_blowup_constant(p_, kp.sigma);
    return c * std::pow(horizon_ - s, -kp.sigma / (p_ - 1.0));
  }
  case Family::stationary_gaussian: return amplitude_ * kernels::heat_kernel_r2(r2, shift_, kp.dim);
  }
  return 0.0;
}

double MemoryData::master_value(double r2, double s, const kernels::KernelParams& kp) const {
  switch (family_) {
  case Family::zero:
  case Family::constant: return 0.0;
  case Family::power_ramp:
  case Family::self_similar: {
    const double r = s + shift_;
    if (!(r > 0.0)) return 0.0;
    const double v = amplitude_ * power_rule_factor(exponent_, kp.sigma) *
                     std::pow(r, exponent_ - kp.sigma);
    return family_ == Family::self_similar ? v * kernels::heat_kernel_r2(r2, r, kp.dim) : v;
  }
  case Family::explicit_blowup: return std::pow(value(r2, s, kp), p_);
  case Family::stationary_gaussian:
    throw InvalidHistory("stationary Gaussian has no pointwise closed-form image");
  }
  return 0.0;
}

double MemoryData::sup_norm(const kernels::KernelParams& kp) const {
  switch (family_) {
  case Family::zero: return 0.0;
  case Family::constant: return std::abs(amplitude_);
  case Family::power_ramp:
    if (exponent_ < 0.0) return kInf;
    return std::abs(amplitude_) * std::pow(shift_, exponent_);
  case Family::self_similar: {
    const double e = exponent_ - 0.5 * kp.dim;
    if (e < 0.0) return kInf;
    return std::abs(amplitude_) * std::pow(shift_, exponent_) *
           std::pow(4.0 * std::numbers::pi * shift_, -0.5 * kp.dim);
  }
  case Family::explicit_blowup: return value(0.0, 0.0, kp);
  case Family::stationary_gaussian:
    return std::abs(amplitude_) * std::pow(4.0 * std::numbers::pi * shift_, -0.5 * kp.dim);
  }
  return 0.0;
}

double MemoryData::decay_exponent(const kernels::KernelParams& kp) const {
  if (family_ == Family::explicit_blowup) return kp.sigma * p_ / (p_ - 1.0);
  if (family_ == Family::stationary_gaussian) return 0.0;
  return kInf;
}

double MemoryData::decay_constant(const kernels::KernelParams& kp) const {
  if (family_ == Family::explicit_blowup)
    return std::pow(explicit_blowup_constant(p_, kp.sigma), p_);
  return 0.0;
}

double MemoryData::spatial_factor(double lambda, double r, double volume) const {
  if (family_ == Family::self_similar || family_ == Family::stationary_gaussian)
    return std::exp(-lambda * r) / volume;
  return lambda == 0.0 ? 1.0 : 0.0;
}

double MemoryData::initial_mode(double lambda, double volume, const kernels::KernelParams& kp) const {
  switch (family_) {
  case Family::zero: return 0.0;
  case Family::constant:
  case Family::explicit_blowup: return lambda == 0.0 ? value(0.0, 0.0, kp) : 0.0;
  case Family::power_ramp:
  case Family::self_similar:
    return amplitude_ * std::pow(shift_, exponent_) * spatial_factor(lambda, shift_, volume);
  case Family::stationary_gaussian: return amplitude_ * spatial_factor(lambda, shift_, volume);
  }
  return 0.0;
}

double MemoryData::profile_forcing(double t, const kernels::KernelParams& kp) const {
  const double tau = t + shift_;
  const double a = exponent_ + 1.0 - kp.sigma;
  const double frac = (a < kFundamentalTol) ? 1.0
                                            : boost::math::ibeta(a, kp.sigma, shift_ / tau);
  return amplitude_ * std::pow(tau, exponent_) * frac;
}

double MemoryData::profile_history(double t, const kernels::KernelParams& kp) const {
  const double tau = t + shift_;
  const double s = kp.sigma;
  const double eta = exponent_;
  const double lo = std::log(t / tau);
  const double integral = quad::finite(
      [&](double v) { return std::pow(-std::expm1(v), eta) * std::exp(-s * v); }, lo, 0.0);
  return amplitude_ * std::pow(tau, eta - s) * integral / kernels::abs_gamma_neg(s);
}

double MemoryData::profile_extension(double y, const kernels::KernelParams& kp) const {
  if (y == 0.0) return amplitude_ * std::pow(shift_, exponent_);
  const double s = kp.sigma;
  const double t1 = shift_;
  const double eta = exponent_;
  const double v0 = y * y / (4.0 * t1);
  const double integral = quad::half_line(
      [&](double w) {
        const double v = v0 + w;
        return std::exp(eta * std::log(t1 * w / v) + (s - 1.0) * std::log(v) - v);
      },
      0.0);
  return amplitude_ * integral / std::tgamma(s);
}

Bounded MemoryData::forcing_mode(double lambda, double t, double volume,
                                 const kernels::KernelParams& kp, double tail_tol) const {
  if (!(t > 0.0)) throw DomainError("forcing_mode requires t > 0");
  switch (family_) {
  case Family::zero: return {};
  case Family::constant: return {lambda == 0.0 ? amplitude_ : 0.0, 0.0};
  case Family::power_ramp:
  case Family::self_similar: {
    const double sf = spatial_factor(lambda, t + shift_, volume);
    if (sf == 0.0) return {};
    return {profile_forcing(t, kp) * sf, 0.0};
  }
  case Family::explicit_blowup: {
    if (lambda != 0.0) return {};
    const double s = kp.sigma;
    const double gh = decay_exponent(kp);
    const double ch = decay_constant(kp);
    const double g_s = std::tgamma(s);
    const double excess = gh - s;
    // Smallest cut S >= 1 with c S^{sigma - gamma_H} / ((gamma_H - sigma) Gamma(sigma)) <= tol.
    const double log_s =
        std::clamp((std::log(ch / (excess * g_s)) - std::log(tail_tol)) / excess, 0.0, 600.0);
    const double cut = std::exp(log_s);
    const double bound = ch * std::exp(-excess * log_s) / (excess * g_s);
    const double p = p_;
    const double c = explicit_blowup_constant(p, s);
    const double beta = s / (p - 1.0);
    const double T = horizon_;
    const double w_max = std::log1p(cut / t);
    const double body = quad::finite(
        [&](double w) {
          const double sv = -t * std::expm1(w);
          const double zp = std::pow(c, p) * std::pow(T - sv, -beta * p);
          return zp * std::pow(t, s) * std::exp(s * w);
        },
        0.0, w_max);
    // M z = z^p >= 0 on the tail, so the truncated part lies in [0, bound].
    return {body / g_s + 0.5 * bound, 0.5 * bound};
  }
  case Family::stationary_gaussian:
    throw InvalidHistory("stationary Gaussian history violates the decay hypothesis");
  }
  return {};
}

Bounded MemoryData::forcing_value(double r2, double t, const kernels::KernelParams& kp,
                                  double tail_tol) const {
  if (family_ == Family::self_similar) {
    const double tau = t + shift_;
    return {profile_forcing(t, kp) * kernels::heat_kernel_r2(r2, tau, kp.dim), 0.0};
  }
  return forcing_mode(0.0, t, 1.0, kp, tail_tol);
}

double MemoryData::history_mode(double lambda, double t, double volume,
                                const kernels::KernelParams& kp) const {
  if (!(t > 0.0)) throw DomainError("history_mode requires t > 0");
  const double s = kp.sigma;
  switch (family_) {
  case Family::zero: return 0.0;
  case Family::constant:
    return lambda == 0.0 ? amplitude_ * std::pow(t, -s) / std::tgamma(1.0 - s) : 0.0;
  case Family::power_ramp:
  case Family::self_similar: {
    const double sf = spatial_factor(lambda, t + shift_, volume);
    if (sf == 0.0) return 0.0;
    return profile_history(t, kp) * sf;
  }
  case Family::explicit_blowup: {
    if (lambda != 0.0) return 0.0;
    const double integral = quad::half_line(
        [&](double w) {
          const double sv = -t * std::expm1(w);
          return value(0.0, sv, kp) * std::exp(-s * w);
        },
        0.0);
    return std::pow(t, -s) * integral / kernels::abs_gamma_neg(s);
  }
  case Family::stationary_gaussian: {
    // |Gamma(-s)|^{-1} int_t^inf e^{-lambda tau} tau^{-1-s} d tau, via Gamma(-s,x) = (x^{-s}e^{-x} - Gamma(1-s,x))/s.
    const double sf = spatial_factor(lambda, shift_, volume);
    if (sf == 0.0) return 0.0;
    if (lambda == 0.0) return amplitude_ * sf * std::pow(t, -s) / std::tgamma(1.0 - s);
    const double x = lambda * t;
    const double upper = std::exp(-s * std::log(x) - x) - boost::math::tgamma(1.0 - s, x);
    return amplitude_ * sf * std::pow(lambda, s) * upper / (s * kernels::abs_gamma_neg(s));
  }
  }
  return 0.0;
}

double MemoryData::extension_mode(double lambda, double y, double volume,
                                  const kernels::KernelParams& kp) const {
  if (y < 0.0) throw DomainError("extension_mode requires y >= 0");
  switch (family_) {
  case Family::zero: return 0.0;
  case Family::constant: return lambda == 0.0 ? amplitude_ : 0.0;
  case Family::power_ramp:
  case Family::self_similar: {
    const double sf = spatial_factor(lambda, shift_, volume);
    if (sf == 0.0) return 0.0;
    return profile_extension(y, kp) * sf;
  }
  case Family::explicit_blowup: {
    if (lambda != 0.0) return 0.0;
    if (y == 0.0) return value(0.0, 0.0, kp);
    const double s = kp.sigma;
    const double integral = quad::half_line(
        [&](double v) {
          if (v <= 0.0) return 0.0;
          const double sv = -y * y / (4.0 * v);
          return value(0.0, sv, kp) * std::exp((s - 1.0) * std::log(v) - v);
        },
        0.0);
    return integral / std::tgamma(s);
  }
  case Family::stationary_gaussian: {
    const double sf = spatial_factor(lambda, shift_, volume);
    if (sf == 0.0) return 0.0;
    if (y == 0.0 || lambda == 0.0) return amplitude_ * sf;
    const double s = kp.sigma;
    const double z = y * std::sqrt(lambda);
    if (z > 700.0) return 0.0;
    return amplitude_ * sf * std::pow(2.0, 1.0 - s) / std::tgamma(s) * std::pow(z, s) *
           boost::math::cyl_bessel_k(s, z);
  }
  }
  return 0.0;
}

} // namespace fracheat::memory

namespace fracheat::memory {

namespace {

// Scales a once-evaluated profile by the family's spatial factor on every mode.
template <class Profile, class Factor>
std::vector<double> batch(std::span<const double> lambdas, Profile&& profile, Factor&& factor) {
  std::vector<double> out(lambdas.size(), 0.0);
  double prof = 0.0;
  bool have = false;
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    const double f = factor(lambdas[k]);
    if (f == 0.0) continue;
    if (!have) {
      prof = profile();
      have = true;
    }
    out[k] = prof * f;
  }
  return out;
}

} // namespace

std::vector<double> MemoryData::forcing_modes(std::span<const double> lambdas, double t,
                                              double volume, const kernels::KernelParams& kp,
                                              double tail_tol, double* error_bar) const {
  if (error_bar) *error_bar = 0.0;
  if (family_ == Family::power_ramp || family_ == Family::self_similar) {
    return batch(
        lambdas, [&] { return profile_forcing(t, kp); },
        [&](double lam) { return spatial_factor(lam, t + shift_, volume); });
  }
  std::vector<double> out(lambdas.size(), 0.0);
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    if (lambdas[k] != 0.0) continue;
    const Bounded b = forcing_mode(0.0, t, volume, kp, tail_tol);
    out[k] = b.value;
    if (error_bar) *error_bar = b.error;
  }
  return out;
}

std::vector<double> MemoryData::history_modes(std::span<const double> lambdas, double t,
                                              double volume, const kernels::KernelParams& kp) const {
  if (family_ == Family::power_ramp || family_ == Family::self_similar) {
    return batch(
        lambdas, [&] { return profile_history(t, kp); },
        [&](double lam) { return spatial_factor(lam, t + shift_, volume); });
  }
  std::vector<double> out(lambdas.size(), 0.0);
  for (std::size_t k = 0; k < lambdas.size(); ++k)
    if (lambdas[k] == 0.0 || !space_homogeneous()) out[k] = history_mode(lambdas[k], t, volume, kp);
  return out;
}

std::vector<double> MemoryData::extension_modes(std::span<const double> lambdas, double y,
                                                double volume, const kernels::KernelParams& kp) const {
  if (family_ == Family::power_ramp || family_ == Family::self_similar) {
    return batch(
        lambdas, [&] { return profile_extension(y, kp); },
        [&](double lam) { return spatial_factor(lam, shift_, volume); });
  }
  std::vector<double> out(lambdas.size(), 0.0);
  for (std::size_t k = 0; k < lambdas.size(); ++k)
    if (lambdas[k] == 0.0 || !space_homogeneous()) out[k] = extension_mode(lambdas[k], y, volume, kp);
  return out;
}

std::vector<double> MemoryData::initial_modes(std::span<const double> lambdas, double volume,
                                              const kernels::KernelParams& kp) const {
  std::vector<double> out(lambdas.size(), 0.0);
  for (std::size_t k = 0; k < lambdas.size(); ++k) out[k] = initial_mode(lambdas[k], volume, kp);
  return out;
}

} // namespace fracheat::memory
