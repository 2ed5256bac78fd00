#include "fracheat/mild_solver.hpp"

#include "json.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace fracheat::mild {

namespace {

using spectral::cplx;

constexpr double kUnderflow = 1e-250;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("invalid problem: " + what);
}

double sup_of(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  return m;
}

// Gauss-Legendre nodes/weights on [-1,1].
struct Rule {
  std::vector<double> x, w;
};

Rule legendre(int n) {
  Rule r;
  auto push = [&](const auto& abs, const auto& wts) {
    for (std::size_t i = 0; i < abs.size(); ++i) {
      r.x.push_back(abs[i]);
      r.w.push_back(wts[i]);
      if (abs[i] != 0.0) {
        r.x.push_back(-abs[i]);
        r.w.push_back(wts[i]);
      }
    }
  };
  using boost::math::quadrature::gauss;
  switch (n) {
  case 2: push(gauss<double, 2>::abscissa(), gauss<double, 2>::weights()); break;
  case 3: push(gauss<double, 3>::abscissa(), gauss<double, 3>::weights()); break;
  case 4: push(gauss<double, 4>::abscissa(), gauss<double, 4>::weights()); break;
  case 5: push(gauss<double, 5>::abscissa(), gauss<double, 5>::weights()); break;
  case 6: push(gauss<double, 6>::abscissa(), gauss<double, 6>::weights()); break;
  case 8: push(gauss<double, 8>::abscissa(), gauss<double, 8>::weights()); break;
  default: throw std::invalid_argument("quad_points must be one of 2,3,4,5,6,8");
  }
  return r;
}

// Moments of the per-mode Green kernel tau^{sigma-1} e^{-lambda tau} / Gamma(sigma)
// over [a, b]: m0 against 1 and m1 against tau.
struct Moments {
  double m0 = 0.0, m1 = 0.0;
};

Moments kernel_moments(double lambda, double a, double b, double sigma) {
  if (lambda == 0.0) {
    return {(std::pow(b, sigma) - std::pow(a, sigma)) / std::tgamma(sigma + 1.0),
            (std::pow(b, sigma + 1.0) - std::pow(a, sigma + 1.0)) /
                ((sigma + 1.0) * std::tgamma(sigma))};
  }
  const double xa = lambda * a, xb = lambda * b;
  if (xa > 700.0) return {};
  double d0, d1;
  if (xa < 1.0) {
    d0 = boost::math::gamma_p(sigma, xb) - (xa > 0.0 ? boost::math::gamma_p(sigma, xa) : 0.0);
    d1 = boost::math::gamma_p(sigma + 1.0, xb) - (xa > 0.0 ? boost::math::gamma_p(sigma + 1.0, xa) : 0.0);
  } else {
    d0 = boost::math::gamma_q(sigma, xa) - boost::math::gamma_q(sigma, xb);
    d1 = boost::math::gamma_q(sigma + 1.0, xa) - boost::math::gamma_q(sigma + 1.0, xb);
  }
  const double ls = std::pow(lambda, -sigma);
  return {ls * d0, sigma * ls / lambda * d1};
}

// exp(-lambda_k tau) for every mode, built from per-axis tables q^{m^2} by recurrence.
class HeatFactors {
public:
  explicit HeatFactors(const spectral::BoxGrid& g)
      : dim_(g.dim()), modes_(g.modes()), nmax_(g.points_per_axis() / 2),
        kb2_(g.base_wavenumber() * g.base_wavenumber()), wave_(g.axis_wavenumbers()),
        table_(static_cast<std::size_t>(nmax_) + 1), out_(modes_) {}

  std::span<const double> at(double tau) {
    const double q = std::exp(-kb2_ * tau);
    double val = 1.0, ratio = q;
    const double q2 = q * q;
    std::size_t m = 0;
    for (; m < table_.size(); ++m) {
      table_[m] = val;
      val *= ratio;
      ratio *= q2;
      if (val < kUnderflow) {
        ++m;
        break;
      }
    }
    for (; m < table_.size(); ++m) table_[m] = 0.0;
    for (std::size_t k = 0; k < modes_; ++k) {
      double e = 1.0;
      for (int a = 0; a < dim_; ++a) e *= table_[static_cast<std::size_t>(wave_[k * dim_ + a])];
      out_[k] = e;
    }
    return out_;
  }

private:
  int dim_;
  std::size_t modes_;
  int nmax_;
  double kb2_;
  std::span<const int> wave_;
  std::vector<double> table_;
  std::vector<double> out_;
};

} // namespace

void ProblemSpec::validate() const {
  require(params.sigma > 0.0 && params.sigma < 1.0, "sigma must lie in (0,1)");
  require(params.dim >= 1 && params.dim <= 3, "dim must be 1, 2 or 3");
  require(p > 0.0, "p must be positive");
  require(length > 0.0, "length must be positive");
  require(n_x == 1 || (n_x >= 2 && n_x % 2 == 0), "n_x must be 1 or even");
  require(dt0 > 0.0 && t_max > 0.0, "dt0 and t_max must be positive");
  require(picard_max_iter >= 1 && picard_tol > 0.0, "picard settings must be positive");
  require(dt_floor > 0.0, "dt_floor must be positive");
  require(dt_max >= dt0, "dt_max must be at least dt0");
  require(dt_growth >= 1.0, "dt_growth must be >= 1");
  require(dt_grade > 0.0 && dt_rate > 0.0, "dt_grade and dt_rate must be positive");
  require(collapse_frac > 0.0 && collapse_frac < 1.0, "collapse_frac must lie in (0,1)");
  require(tail_rel > 0.0, "tail_rel must be positive");
  require(coarsen_ratio == 0.0 || coarsen_ratio >= 1.0, "coarsen_ratio must be 0 or >= 1");
  require(exact_panels >= 0, "exact_panels must be >= 0");
  memory.validate(params);
  const double s0 = std::abs(memory.value(0.0, 0.0, params));
  require(blowup_threshold > s0, "blowup_threshold must exceed the sup norm of the data at t=0");
}

std::string to_string(RunStatus s) {
  switch (s) {
  case RunStatus::completed_horizon: return "completed-horizon";
  case RunStatus::blowup_detected: return "blowup-detected";
  case RunStatus::step_failure: return "step-failure";
  }
  return "unknown";
}

ops::SpaceTimeField Trajectory::field() const {
  ops::SpaceTimeField f;
  f.grid = grid;
  f.times = times;
  f.values = slices;
  f.history = memory;
  return f;
}

Trajectory mild_march(const ProblemSpec& spec) {
  spec.validate();
  const auto& kp = spec.params;
  const double sigma = kp.sigma;
  const double p = spec.p;
  const bool linear = static_cast<bool>(spec.source);

  auto grid = std::make_shared<const spectral::BoxGrid>(kp.dim, spec.length, spec.n_x);
  spectral::Fft fft(*grid);
  const auto lam = grid->lambdas();
  const std::size_t nm = grid->modes();
  const std::size_t np = grid->size();
  const double V = grid->volume();
  const Rule rule = legendre(spec.quad_points);
  const double inv_gs = 1.0 / std::tgamma(sigma);
  HeatFactors heat(*grid);

  std::vector<std::vector<double>> points(np);
  if (linear)
    for (std::size_t i = 0; i < np; ++i) points[i] = grid->point(i);

  Trajectory traj;
  traj.grid = grid;
  traj.params = kp;
  traj.p = p;
  traj.memory = spec.memory;
  traj.linear = linear;

  std::vector<double> work(np);
  auto reaction = [&](std::span<const double> u, double t) {
    if (linear) {
      for (std::size_t i = 0; i < np; ++i) work[i] = spec.source(points[i], t);
    } else {
      for (std::size_t i = 0; i < np; ++i) work[i] = std::pow(std::max(u[i], 0.0), p);
    }
    return fft.forward(work);
  };

  // Initial slice from the closed-form coefficients of f(., 0).
  const auto init = spec.memory.initial_modes(lam, V, kp);
  std::vector<cplx> c0(init.begin(), init.end());
  std::vector<double> u = fft.inverse(c0);

  std::vector<double> node_t{0.0};
  std::vector<std::vector<cplx>> node_r{reaction(u, 0.0)};

  traj.times.push_back(0.0);
  traj.slices.push_back(u);
  traj.sup_norms.push_back(sup_of(u));
  traj.dts.push_back(0.0);
  traj.picard_iters.push_back(0);
  const double scale0 = std::abs(traj.sup_norms.front());

  std::vector<cplx> base(nm), coeff(nm);
  std::vector<double> w_new(nm);

  // base = forcing + all panels except the newest unknown; w_new multiplies R(t).
  auto assemble = [&](double t) {
    const double tail_tol = spec.tail_rel * std::max({scale0, std::abs(traj.sup_norms.back()), 1e-300});
    double err = 0.0;
    const auto F = spec.memory.forcing_modes(lam, t, V, kp, tail_tol, &err);
    traj.forcing_error = std::max(traj.forcing_error, err);
    for (std::size_t k = 0; k < nm; ++k) base[k] = F[k];

    const std::size_t m = node_t.size();
    // Newest panel [s_{m-1}, t].
    {
      const double h = t - node_t[m - 1];
      const auto& r = node_r[m - 1];
      for (std::size_t k = 0; k < nm; ++k) {
        const Moments mo = kernel_moments(lam[k], 0.0, h, sigma);
        const double w_old = mo.m1 / h;
        w_new[k] = mo.m0 - w_old;
        base[k] += w_old * r[k];
      }
    }
    const std::size_t exact_from =
        (m - 1 > static_cast<std::size_t>(spec.exact_panels)) ? m - 1 - static_cast<std::size_t>(spec.exact_panels) : 0;
    for (std::size_t j = 0; j + 1 < m; ++j) {
      const double sa = node_t[j], sb = node_t[j + 1];
      const double h = sb - sa;
      const auto& ra = node_r[j];
      const auto& rb = node_r[j + 1];
      if (j >= exact_from) {
        const double a = t - sb, b = t - sa;
        for (std::size_t k = 0; k < nm; ++k) {
          const Moments mo = kernel_moments(lam[k], a, b, sigma);
          const double ca = (mo.m1 - a * mo.m0) / h; // weight of R(s_j)
          base[k] += ca * ra[k] + (mo.m0 - ca) * rb[k];
        }
        continue;
      }
      for (std::size_t q = 0; q < rule.x.size(); ++q) {
        const double s = sa + 0.5 * h * (1.0 + rule.x[q]);
        const double tau = t - s;
        const double wq = 0.5 * h * rule.w[q] * std::pow(tau, sigma - 1.0) * inv_gs;
        const double fa = (sb - s) / h;
        const double fb = 1.0 - fa;
        const auto e = heat.at(tau);
        for (std::size_t k = 0; k < nm; ++k) {
          if (e[k] == 0.0) continue;
          base[k] += (wq * e[k]) * (fa * ra[k] + fb * rb[k]);
        }
      }
    }
  };

  // Pairwise merge of old panels of comparable width.
  auto coarsen = [&](double t) {
    if (spec.coarsen_ratio <= 0.0) return;
    const std::size_t keep = static_cast<std::size_t>(spec.exact_panels) + 2;
    if (node_t.size() < keep + 3) return;
    std::vector<double> nt{node_t[0]};
    std::vector<std::vector<cplx>> nr{std::move(node_r[0])};
    std::size_t j = 1;
    const std::size_t last_mergeable = node_t.size() - keep;
    while (j < node_t.size()) {
      if (j + 1 < last_mergeable) {
        const double h1 = node_t[j] - nt.back();
        const double h2 = node_t[j + 1] - node_t[j];
        const bool similar = h1 <= 1.5 * h2 && h2 <= 1.5 * h1;
        if (similar && t - node_t[j + 1] >= spec.coarsen_ratio * (h1 + h2)) {
          ++j; // drop node j
          continue;
        }
      }
      nt.push_back(node_t[j]);
      nr.push_back(std::move(node_r[j]));
      ++j;
    }
    node_t = std::move(nt);
    node_r = std::move(nr);
  };

  double t = 0.0;
  double dt = std::min(spec.dt0, spec.t_max);
  const double t_end = spec.t_max;
  traj.status = RunStatus::completed_horizon;

  while (t < t_end * (1.0 - 1e-14)) {
    dt = std::min(dt, t_end - t);
    if (dt < spec.dt_floor) {
      const bool high = traj.sup_norms.back() >= spec.blowup_threshold;
      traj.status = high ? RunStatus::blowup_detected : RunStatus::step_failure;
      traj.message = "time step fell below dt_floor at t=" + std::to_string(t);
      break;
    }
    const double tn = t + dt;
    assemble(tn);

    std::vector<double> un;
    int iters = 0;
    bool ok = true;
    if (linear) {
      const auto r = reaction(u, tn);
      for (std::size_t k = 0; k < nm; ++k) coeff[k] = base[k] + w_new[k] * r[k];
      un = fft.inverse(coeff);
      iters = 1;
    } else {
      un = u;
      double prev_diff = std::numeric_limits<double>::infinity();
      ok = false;
      for (iters = 1; iters <= spec.picard_max_iter; ++iters) {
        const auto r = reaction(un, tn);
        for (std::size_t k = 0; k < nm; ++k) coeff[k] = base[k] + w_new[k] * r[k];
        auto next = fft.inverse(coeff);
        double diff = 0.0, sc = 0.0;
        bool finite = true;
        for (std::size_t i = 0; i < np; ++i) {
          finite = finite && std::isfinite(next[i]);
          diff = std::max(diff, std::abs(next[i] - un[i]));
          sc = std::max(sc, std::abs(next[i]));
        }
        un = std::move(next);
        if (!finite) break;
        if (diff <= spec.picard_tol * std::max(sc, 1e-300) || diff == 0.0) {
          ok = true;
          break;
        }
        if (iters >= 3 && diff > prev_diff) break; // not contracting
        prev_diff = diff;
      }
      iters = std::min(iters, spec.picard_max_iter);
    }
    for (double x : un) ok = ok && std::isfinite(x);
    if (!ok) {
      dt *= 0.5;
      if (dt < spec.dt_floor) {
        const bool high = traj.sup_norms.back() >= spec.blowup_threshold;
        traj.status = high ? RunStatus::blowup_detected : RunStatus::step_failure;
        traj.message = "Picard iteration did not contract above dt_floor at t=" + std::to_string(t);
        break;
      }
      continue;
    }

    // Accept.
    t = tn;
    u = std::move(un);
    node_t.push_back(t);
    node_r.push_back(reaction(u, t));
    const double sup = sup_of(u);
    traj.times.push_back(t);
    traj.slices.push_back(u);
    traj.sup_norms.push_back(sup);
    traj.dts.push_back(dt);
    traj.picard_iters.push_back(iters);
    coarsen(t);

    double next = std::min({dt * spec.dt_growth, spec.dt_max, spec.dt_grade * t});
    if (!linear && p > 1.0 && sup > 0.0)
      next = std::min(next, spec.dt_rate * std::pow(sup, -(p - 1.0) / sigma));
    if (sup >= spec.blowup_threshold && next <= spec.collapse_frac * t) {
      traj.status = RunStatus::blowup_detected;
      traj.message = "sup norm " + std::to_string(sup) + " above threshold with collapsed step";
      break;
    }
    dt = next;
  }
  return traj;
}

ResidualReport residual_check(const Trajectory& traj, std::span<const ResidualSample> samples) {
  ResidualReport rep;
  if (traj.times.size() < 2) throw DomainError("residual_check: trajectory has no steps");
  const auto field = traj.field();
  for (const auto& smp : samples) {
    if (smp.t <= 0.0 || smp.t > traj.times.back() * (1.0 + 1e-12))
      throw DomainError("residual_check: sample time outside stored history");
    const auto it = std::lower_bound(traj.times.begin(), traj.times.end(), smp.t);
    std::size_t i = static_cast<std::size_t>(it - traj.times.begin());
    if (i == traj.times.size()) i = traj.times.size() - 1;
    if (i > 1 && std::abs(traj.times[i - 1] - smp.t) < std::abs(traj.times[i] - smp.t)) --i;
    if (i == 0) i = 1;
    const auto mu = ops::master_apply_slice(field, i, traj.params);
    const auto& u = traj.slices[i];
    double scale = 0.0;
    for (double v : u) scale = std::max(scale, std::pow(std::max(v, 0.0), traj.p));
    const std::size_t node = traj.grid->nearest_index(smp.x);
    const double res = std::abs(mu[node] - std::pow(std::max(u[node], 0.0), traj.p));
    const double rel = scale > 0.0 ? res / scale : res;
    rep.relative.push_back(rel);
    rep.snapped_times.push_back(traj.times[i]);
    rep.max_relative = std::max(rep.max_relative, rel);
  }
  return rep;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

} // namespace

void write_run_dir(const Trajectory& traj, const ProblemSpec& spec, const std::filesystem::path& dir,
                   const std::vector<std::string>& provenance) {
  std::filesystem::create_directories(dir / "slices");
  nlohmann::ordered_json meta;
  meta["format"] = "fracheat-run/1";
  meta["sigma"] = spec.params.sigma;
  meta["dim"] = spec.params.dim;
  meta["p"] = spec.p;
  meta["memory"] = {{"family", memory::to_string(spec.memory.family())},
                    {"amplitude", spec.memory.amplitude()},
                    {"shift", spec.memory.shift()},
                    {"exponent", spec.memory.exponent()},
                    {"horizon", spec.memory.horizon()}};
  meta["grid"] = {{"length", spec.length}, {"n_x", spec.n_x}, {"points", traj.grid->size()}};
  meta["time"] = {{"dt0", spec.dt0}, {"t_max", spec.t_max}, {"dt_max", spec.dt_max},
                  {"dt_floor", spec.dt_floor}};
  meta["picard"] = {{"max_iter", spec.picard_max_iter}, {"tol", spec.picard_tol}};
  meta["blowup_threshold"] = spec.blowup_threshold;
  meta["linear"] = traj.linear;
  meta["status"] = to_string(traj.status);
  meta["message"] = traj.message;
  meta["steps"] = traj.times.size();
  meta["forcing_error"] = traj.forcing_error;
  meta["slice_format"] = "float64 little-endian, row-major over the grid";
  meta["config"] = provenance;
  open_out(dir / "meta.json") << meta.dump(2) << "\n";

  auto header = [&](std::ofstream& out) {
    for (const auto& line : provenance) out << "# " << line << "\n";
  };
  {
    auto out = open_out(dir / "times.csv");
    header(out);
    out << "index,t\n";
    for (std::size_t i = 0; i < traj.times.size(); ++i) out << i << "," << fmt17(traj.times[i]) << "\n";
  }
  {
    auto out = open_out(dir / "supnorm.csv");
    header(out);
    out << "t,sup_norm,dt,picard_iters\n";
    for (std::size_t i = 0; i < traj.times.size(); ++i)
      out << fmt17(traj.times[i]) << "," << fmt17(traj.sup_norms[i]) << "," << fmt17(traj.dts[i]) << ","
          << traj.picard_iters[i] << "\n";
  }
  for (std::size_t i = 0; i < traj.slices.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "slice_%06zu.bin", i);
    auto out = open_out(dir / "slices" / name);
    out.write(reinterpret_cast<const char*>(traj.slices[i].data()),
              static_cast<std::streamsize>(traj.slices[i].size() * sizeof(double)));
  }
}

} // namespace fracheat::mild
