#include "doctest.h"

#include "fracheat/lab.hpp"
#include "fracheat/mild_solver.hpp"
#include "fracheat/quadrature.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace fracheat;
using memory::MemoryData;

namespace {

mild::ProblemSpec homogeneous(double sigma, double p, MemoryData m, double t_max) {
  mild::ProblemSpec s;
  s.params = kernels::KernelParams::make(sigma, 1);
  s.p = p;
  s.memory = m;
  s.n_x = 1;
  s.length = 1.0;
  s.t_max = t_max;
  return s;
}

// Fixed step schedule so that two runs share their time grid.
void fixed_steps(mild::ProblemSpec& s, double dt) {
  s.dt0 = s.dt_max = dt;
  s.dt_growth = 1.0;
  s.dt_grade = 1e9;
  s.dt_rate = 1e9;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace

TEST_CASE("zero data stays zero") {
  mild::ProblemSpec s;
  s.memory = MemoryData::zero();
  s.n_x = 32;
  s.t_max = 0.5;
  const auto tr = mild::mild_march(s);
  CHECK(tr.status == mild::RunStatus::completed_horizon);
  CHECK(tr.times.back() == doctest::Approx(0.5));
  for (const auto& sl : tr.slices)
    for (double v : sl) CHECK(v == 0.0);
}

TEST_CASE("spec validation names the field") {
  mild::ProblemSpec s;
  s.memory = MemoryData::gaussian_bump(1.0, 1.0, 1);
  s.n_x = 33;
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("n_x"), std::invalid_argument);
  s.n_x = 32;
  s.blowup_threshold = 0.5;
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("blowup_threshold"), std::invalid_argument);
  s.blowup_threshold = 1e4;
  s.params.sigma = 1.2;
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("sigma"), std::invalid_argument);
}

TEST_CASE("explicit blow-up solution is tracked and detected") {
  auto s = homogeneous(0.5, 2.0, MemoryData::explicit_blowup(2.0, 1.0), 2.0);
  s.dt_max = 0.0025;
  s.dt_rate = 0.005;
  const auto tr = mild::mild_march(s);
  CHECK(tr.status == mild::RunStatus::blowup_detected);
  CHECK(tr.times.back() < 1.0);
  CHECK(tr.times.back() > 0.99);
  const auto z = lab::explicit_blowup(2.0, 0.5, 1.0);
  double err = 0.0;
  for (std::size_t i = 0; i < tr.times.size() && tr.times[i] <= 0.9; ++i)
    err = std::max(err, std::abs(tr.sup_norms[i] - z(tr.times[i])) / z(tr.times[i]));
  CHECK(err < 5e-3);
}

TEST_CASE("explicit global solution below p = 1 is reproduced") {
  for (auto [sigma, p] : std::vector<std::pair<double, double>>{{0.5, 0.5}, {0.25, 0.8}}) {
    const double t1 = 1.0, nu = sigma / (1.0 - p);
    const double c = lab::explicit_global_constant(p, sigma);
    auto s = homogeneous(sigma, p, MemoryData::power_ramp(c, t1, nu), 3.0);
    s.dt_max = 0.01;
    const auto tr = mild::mild_march(s);
    REQUIRE(tr.status == mild::RunStatus::completed_horizon);
    const auto u = lab::explicit_global(p, sigma, t1);
    double err = 0.0;
    for (std::size_t i = 0; i < tr.times.size(); ++i) err = std::max(err, std::abs(tr.sup_norms[i] / u(tr.times[i]) - 1.0));
    CHECK(err < 1e-3);
  }
}

TEST_CASE("linear problem against direct quadrature of the representation formula") {
  // Zero history, right-hand side h = (1 + s) K_r(x): u = int_0^t (1+s) (t-s)^{sigma-1} K_{r+t-s}(x) ds / Gamma(sigma).
  for (double sigma : {0.3, 0.5, 0.8}) {
    const double r = 0.5;
    mild::ProblemSpec s;
    s.params = kernels::KernelParams::make(sigma, 1);
    s.memory = MemoryData::zero();
    s.length = 30.0;
    s.n_x = 128;
    s.t_max = 1.0;
    s.dt_max = 0.01;
    s.source = [r](std::span<const double> x, double t) { return (1.0 + t) * kernels::heat_kernel_r2(x[0] * x[0], r, 1); };
    const auto tr = mild::mild_march(s);
    REQUIRE(tr.linear);
    double err = 0.0, scale = 0.0;
    for (double x0 : {0.0, 0.7, 1.9}) {
      const std::vector<double> pt{x0};
      const std::size_t idx = tr.grid->nearest_index(pt);
      const double x = tr.grid->point(idx)[0];
      const double t = tr.times.back();
      const double exact = quad::finite(
          [&](double q) {
            const double sv = t - q; // q = t - s
            return (1.0 + sv) * std::pow(q, sigma - 1.0) * kernels::heat_kernel_r2(x * x, r + q, 1);
          },
          0.0, t) / std::tgamma(sigma);
      err = std::max(err, std::abs(tr.slices.back()[idx] - exact));
      scale = std::max(scale, exact);
    }
    CHECK(err / scale < 1e-3);
  }
}

TEST_CASE("comparison, positivity and refinement") {
  mild::ProblemSpec s;
  s.params = kernels::KernelParams::make(0.5, 1);
  s.p = 2.0;
  s.n_x = 64;
  s.length = 20.0;
  s.t_max = 1.0;
  fixed_steps(s, 0.01);
  s.memory = MemoryData::gaussian_bump(0.4, 1.0, 1);
  const auto lo = mild::mild_march(s);
  s.memory = MemoryData::gaussian_bump(0.5, 1.0, 1);
  const auto hi = mild::mild_march(s);
  REQUIRE(lo.times.size() == hi.times.size());
  double worst = 0.0, neg = 0.0;
  for (std::size_t k = 0; k < lo.times.size(); ++k)
    for (std::size_t i = 0; i < lo.slices[k].size(); ++i) {
      worst = std::max(worst, lo.slices[k][i] - hi.slices[k][i]);
      neg = std::min(neg, lo.slices[k][i]);
    }
  CHECK(worst <= 1e-12);
  CHECK(neg >= -1e-12);

  // Fixed-step refinement of the end value.
  std::vector<double> ends;
  for (double dt : {0.04, 0.02, 0.01, 0.0025}) {
    fixed_steps(s, dt);
    ends.push_back(mild::mild_march(s).sup_norms.back());
  }
  const double e1 = std::abs(ends[0] - ends[3]), e2 = std::abs(ends[1] - ends[3]), e3 = std::abs(ends[2] - ends[3]);
  CHECK(e2 < e1);
  CHECK(e3 < e2);
  CHECK(std::log2(e1 / e2) > 1.0);
}

TEST_CASE("panel coarsening stays close on short runs") {
  mild::ProblemSpec s;
  s.memory = MemoryData::gaussian_bump(0.5, 1.0, 1);
  s.n_x = 64;
  s.t_max = 2.0;
  const auto plain = mild::mild_march(s);
  s.coarsen_ratio = 64.0;
  const auto coarse = mild::mild_march(s);
  CHECK(coarse.sup_norms.back() == doctest::Approx(plain.sup_norms.back()).epsilon(1e-3));
}

TEST_CASE("nonlinear residual of the master equation is small") {
  mild::ProblemSpec s;
  s.memory = MemoryData::gaussian_bump(0.5, 1.0, 1);
  s.n_x = 128;
  s.length = 20.0;
  s.t_max = 1.0;
  s.dt_max = 0.01;
  const auto tr = mild::mild_march(s);
  std::vector<mild::ResidualSample> samples;
  for (double t : {0.3, 0.6, 1.0})
    for (double x : {0.0, 0.5, 1.5}) samples.push_back({{x}, t});
  const auto rep = mild::residual_check(tr, samples);
  CHECK(rep.relative.size() == samples.size());
  CHECK(rep.max_relative < 2e-2);
}

TEST_CASE("lower bound t^{sigma-1} K_t holds with a positive constant") {
  mild::ProblemSpec s;
  s.memory = MemoryData::gaussian_bump(0.2, 1.0, 1);
  s.p = 2.0;
  s.length = 60.0;
  s.n_x = 256;
  s.t_max = 4.0;
  s.dt_max = 0.05;
  const auto tr = mild::mild_march(s);
  const auto rep = lab::lower_bound_check(tr, 1.0);
  CHECK_FALSE(rep.skipped);
  CHECK(rep.c > 0.0);

  s.memory = MemoryData::zero();
  CHECK(lab::lower_bound_check(mild::mild_march(s), 1.0).skipped);
}

TEST_CASE("run directory layout and determinism") {
  mild::ProblemSpec s;
  s.memory = MemoryData::gaussian_bump(0.5, 1.0, 1);
  s.n_x = 32;
  s.t_max = 0.2;
  const auto dir = std::filesystem::temp_directory_path() / "fracheat_mild_rundir";
  std::filesystem::remove_all(dir);
  const std::vector<std::string> prov{"p = 2", "n_x = 32"};
  mild::write_run_dir(mild::mild_march(s), s, dir / "a", prov);
  mild::write_run_dir(mild::mild_march(s), s, dir / "b", prov);
  for (const char* f : {"meta.json", "times.csv", "supnorm.csv"}) {
    REQUIRE(std::filesystem::exists(dir / "a" / f));
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  const auto sup = slurp(dir / "a" / "supnorm.csv");
  CHECK(sup.rfind("# p = 2\n# n_x = 32\nt,sup_norm,dt,picard_iters\n", 0) == 0);
  CHECK(std::filesystem::exists(dir / "a" / "slices" / "slice_000000.bin"));
  CHECK(std::filesystem::file_size(dir / "a" / "slices" / "slice_000000.bin") == 32 * sizeof(double));
  std::filesystem::remove_all(dir);
}
