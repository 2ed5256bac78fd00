#include "doctest.h"

#include "fracheat/memory.hpp"
#include "fracheat/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace fracheat;
using fracheat::memory::MemoryData;

namespace {
constexpr double pi = std::numbers::pi;

double power_factor(double eta, double sigma) { return std::tgamma(eta + 1) / std::tgamma(eta + 1 - sigma); }
} // namespace

TEST_CASE("family names round-trip") {
  using memory::Family;
  for (Family f : {Family::zero, Family::constant, Family::power_ramp, Family::self_similar,
                   Family::explicit_blowup, Family::stationary_gaussian})
    CHECK(memory::family_from_string(memory::to_string(f)) == f);
  CHECK(memory::family_from_string("gaussian_bump") == Family::self_similar);
  CHECK_THROWS_AS(memory::family_from_string("spline"), InvalidHistory);
}

TEST_CASE("validation follows the decay hypothesis") {
  const auto kp = kernels::KernelParams::make(0.5, 1);
  CHECK_NOTHROW(MemoryData::zero().validate(kp));
  CHECK_NOTHROW(MemoryData::gaussian_bump(1.0, 1.0, 1).validate(kp));
  CHECK_NOTHROW(MemoryData::self_similar(1.0, 1.0, -0.5).validate(kp));
  CHECK_THROWS_AS(MemoryData::self_similar(1.0, 1.0, -0.6).validate(kp), InvalidHistory);
  CHECK_THROWS_AS(MemoryData::power_ramp(1.0, 0.0, 1.0).validate(kp), InvalidHistory);
  CHECK_NOTHROW(MemoryData::explicit_blowup(2.0, 1.0).validate(kp));
  CHECK_THROWS_AS(MemoryData::stationary_gaussian(1.0, 0.5).validate(kp), InvalidHistory);
  CHECK_THROWS_AS(MemoryData::stationary_gaussian(1.0, 0.5).forcing_mode(0.0, 1.0, 1.0, kp, 1e-8),
                  InvalidHistory);
}

TEST_CASE("explicit blow-up constant") {
  CHECK(memory::explicit_blowup_constant(2.0, 0.5) == doctest::Approx(1.0 / std::sqrt(pi)).epsilon(1e-14));
  const double c = memory::explicit_blowup_constant(3.0, 0.75);
  CHECK(std::pow(c, 2.0) == doctest::Approx(std::tgamma(1.125) / std::tgamma(0.375)).epsilon(1e-14));
}

TEST_CASE("gaussian bump profile") {
  const auto kp = kernels::KernelParams::make(0.5, 1);
  const auto m = MemoryData::gaussian_bump(0.7, 2.0, 1);
  CHECK(m.value(0.0, 0.0, kp) == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(m.value(1.5, -0.5, kp) == doctest::Approx(0.7 * std::exp(-1.5 / 6.0)).epsilon(1e-14));
  CHECK(m.sup_norm(kp) == doctest::Approx(0.7).epsilon(1e-14));
}

TEST_CASE("power families: forcing, history and extension against quadrature") {
  for (double sigma : {0.25, 0.5, 0.75}) {
    const auto kp = kernels::KernelParams::make(sigma, 1);
    for (double eta : {sigma - 1.0, 0.0, 0.5, 1.3}) {
      const double A = 1.7, t1 = 0.6, V = 10.0;
      const auto m = MemoryData::self_similar(A, t1, eta);
      CAPTURE(sigma);
      CAPTURE(eta);
      for (double lam : {0.0, 0.4, 3.0}) {
        const double sf = std::exp(-lam * t1) / V;
        for (double t : {0.05, 0.5, 2.0}) {
          const double got = m.forcing_mode(lam, t, V, kp, 1e-10).value;
          double expect;
          if (std::abs(eta - (sigma - 1.0)) < 1e-14) {
            // The fundamental member continues as itself.
            expect = A * std::pow(t + t1, eta) * std::exp(-lam * (t + t1)) / V;
          } else {
            // Integrate in r = s + t1 so the endpoint singularity is resolved exactly.
            expect = quad::finite(
                         [&](double r) {
                           return A * power_factor(eta, sigma) * std::pow(r, eta - sigma) *
                                  std::pow(t + t1 - r, sigma - 1.0) / std::tgamma(sigma);
                         },
                         0.0, t1) *
                     std::exp(-lam * (t + t1)) / V;
          }
          CHECK(got == doctest::Approx(expect).epsilon(1e-9));

          const double hist = quad::finite(
              [&](double r) { return A * std::pow(r, eta) * std::pow(t + t1 - r, -1.0 - sigma); },
              0.0, t1) * std::exp(-lam * (t + t1)) / V / kernels::abs_gamma_neg(sigma);
          CHECK(m.history_mode(lam, t, V, kp) == doctest::Approx(hist).epsilon(1e-9));
        }
        for (double y : {0.0, 0.1, 1.0, 4.0}) {
          const double expect =
              y == 0.0 ? A * std::pow(t1, eta) * sf
                       : sf * quad::finite(
                                  [&](double r) {
                                    return r >= t1 ? 0.0
                                                   : A * std::pow(r, eta) *
                                                         kernels::poisson_time_marginal(y, t1 - r, kp);
                                  },
                                  0.0, t1);
          CHECK(m.extension_mode(lam, y, V, kp) == doctest::Approx(expect).epsilon(1e-8));
        }
      }
    }
  }
}

TEST_CASE("batched modes agree with single-mode evaluation") {
  const auto kp = kernels::KernelParams::make(0.4, 2);
  const std::vector<double> lams{0.0, 0.3, 1.0, 7.0};
  for (const auto& m : {MemoryData::gaussian_bump(2.0, 0.5, 2), MemoryData::power_ramp(1.0, 1.0, 0.5),
                        MemoryData::constant(0.3), MemoryData::stationary_gaussian(1.0, 0.2)}) {
    const auto h = m.history_modes(lams, 0.7, 5.0, kp);
    const auto e = m.extension_modes(lams, 0.3, 5.0, kp);
    for (std::size_t k = 0; k < lams.size(); ++k) {
      CHECK(h[k] == doctest::Approx(m.history_mode(lams[k], 0.7, 5.0, kp)).epsilon(1e-13));
      CHECK(e[k] == doctest::Approx(m.extension_mode(lams[k], 0.3, 5.0, kp)).epsilon(1e-13));
    }
  }
}

TEST_CASE("constant history") {
  const auto kp = kernels::KernelParams::make(0.5, 1);
  const auto m = MemoryData::constant(2.5);
  CHECK(m.forcing_mode(0.0, 1.3, 1.0, kp, 1e-8).value == 2.5);
  CHECK(m.forcing_mode(1.0, 1.3, 1.0, kp, 1e-8).value == 0.0);
  for (double y : {0.0, 0.5, 10.0}) CHECK(m.extension_mode(0.0, y, 1.0, kp) == 2.5);
  CHECK(m.history_mode(0.0, 4.0, 1.0, kp) == doctest::Approx(2.5 * 0.5 / std::sqrt(pi)).epsilon(1e-14));
}

TEST_CASE("explicit blow-up history bracket contains the quadrature value") {
  for (auto [sigma, p] : {std::pair{0.5, 2.0}, std::pair{0.25, 1.5}, std::pair{0.75, 3.0}}) {
    const auto kp = kernels::KernelParams::make(sigma, 1);
    const auto m = MemoryData::explicit_blowup(p, 1.0);
    for (double t : {0.1, 0.5, 0.9}) {
      const auto b = m.forcing_mode(0.0, t, 1.0, kp, 1e-9);
      const double direct = quad::half_line(
          [&](double w) {
            const double s = -w;
            return std::pow(m.value(0.0, s, kp), p) * std::pow(t - s, sigma - 1.0) / std::tgamma(sigma);
          },
          0.0, 1e-13);
      CHECK(std::abs(b.value - direct) <= b.error + 1e-9 * direct);
      CHECK(b.error <= 1e-9);
    }
    // Its extension at y -> 0 returns the data.
    CHECK(m.extension_mode(0.0, 1e-14, 1.0, kp) == doctest::Approx(m.value(0.0, 0.0, kp)).epsilon(1e-5));
  }
}

TEST_CASE("stationary Gaussian: history and extension against quadrature") {
  const auto kp = kernels::KernelParams::make(0.3, 1);
  const auto m = MemoryData::stationary_gaussian(1.0, 0.2);
  for (double lam : {0.0, 0.5, 9.0}) {
    const double sf = std::exp(-lam * 0.2) / 3.0;
    const double hist = sf * quad::half_line([&](double tau) { return std::exp(-lam * tau) * std::pow(tau, -1.3); }, 0.8) /
                        kernels::abs_gamma_neg(0.3);
    CHECK(m.history_mode(lam, 0.8, 3.0, kp) == doctest::Approx(hist).epsilon(1e-9));
    const double ext = sf * quad::half_line(
                                [&](double tau) { return tau > 0 ? std::exp(-lam * tau) * kernels::poisson_time_marginal(0.4, tau, kp) : 0.0; },
                                0.0);
    CHECK(m.extension_mode(lam, 0.4, 3.0, kp) == doctest::Approx(ext).epsilon(1e-9));
  }
}

TEST_CASE("extension is bounded by the data") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double sigma = 0.1 + 0.8 * U(rng);
    const auto kp = kernels::KernelParams::make(sigma, 1);
    const auto m = MemoryData::power_ramp(0.5 + U(rng), 0.2 + U(rng), 2.0 * U(rng));
    const double sup = m.sup_norm(kp);
    for (double y : {0.01, 0.3, 2.0, 20.0}) CHECK(m.extension_mode(0.0, y, 1.0, kp) <= sup * (1 + 1e-12));
  }
}
