#include "fracheat/extension_solver.hpp"

#include "json.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace fracheat::ext {

namespace {

using spectral::cplx;

double weighted_antiderivative(double y, double gamma) { return std::pow(y, 1.0 + gamma) / (1.0 + gamma); }

// Solves the symmetric tridiagonal system (diag d, off-diagonal e between j and j+1)
// in place on a complex right-hand side.
void thomas(std::vector<double>& d, std::span<const double> e, std::vector<cplx>& rhs) {
  const std::size_t n = d.size();
  for (std::size_t j = 1; j < n; ++j) {
    const double m = e[j - 1] / d[j - 1];
    d[j] -= m * e[j - 1];
    rhs[j] -= m * rhs[j - 1];
  }
  rhs[n - 1] /= d[n - 1];
  for (std::size_t j = n - 1; j-- > 0;) rhs[j] = (rhs[j] - e[j] * rhs[j + 1]) / d[j];
}

double sup_of(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  return m;
}

} // namespace

ExtGrid::ExtGrid(std::shared_ptr<const spectral::BoxGrid> box, int n_y, double y_max, double q,
                 const kernels::KernelParams& kp)
    : box_(std::move(box)), n_y_(n_y), y_max_(y_max), gamma_(kp.gamma_w) {
  if (!box_) throw std::invalid_argument("ExtGrid: missing box");
  if (n_y < 2) throw std::invalid_argument("ExtGrid: n_y must be at least 2");
  if (!(y_max > 0.0)) throw std::invalid_argument("ExtGrid: y_max must be positive");
  q_ = q > 0.0 ? q : std::max(1.0, 2.0 / (1.0 + gamma_));
  if (q_ < 1.0) throw std::invalid_argument("ExtGrid: grading power must be >= 1");

  const auto n = static_cast<std::size_t>(n_y);
  y_.resize(n + 1);
  for (std::size_t j = 0; j <= n; ++j) y_[j] = y_max * std::pow(static_cast<double>(j) / n_y, q_);
  y_[n] = y_max;

  mass_.resize(n + 1);
  for (std::size_t j = 0; j <= n; ++j) {
    const double a = j == 0 ? 0.0 : 0.5 * (y_[j - 1] + y_[j]);
    const double b = j == n ? y_max : 0.5 * (y_[j] + y_[j + 1]);
    mass_[j] = weighted_antiderivative(b, gamma_) - weighted_antiderivative(a, gamma_);
  }
  const double two_s = 1.0 - gamma_;
  face_.resize(n);
  for (std::size_t j = 0; j < n; ++j)
    face_[j] = two_s / (std::pow(y_[j + 1], two_s) - std::pow(y_[j], two_s));
}

double ExtGrid::total_mass() const { return weighted_antiderivative(y_max_, gamma_); }

Slice poisson_extend(const memory::MemoryData& f, const ExtGrid& grid, const kernels::KernelParams& kp) {
  const auto& box = grid.box();
  spectral::Fft fft(box);
  Slice out(grid.layers() * box.size());
  for (std::size_t j = 0; j < grid.layers(); ++j) {
    const auto modes = f.extension_modes(box.lambdas(), grid.nodes()[j], box.volume(), kp);
    std::vector<cplx> c(modes.begin(), modes.end());
    fft.inverse(c, std::span<double>(out.data() + j * box.size(), box.size()));
  }
  return out;
}

std::vector<double> conormal_trace(std::span<const double> slice, const ExtGrid& grid,
                                   const kernels::KernelParams& kp) {
  const std::size_t np = grid.box().size();
  if (slice.size() != grid.layers() * np) throw std::invalid_argument("conormal_trace: slice size mismatch");
  const double y1 = grid.nodes()[1];
  const double y1s = std::pow(y1, 2.0 * kp.sigma);
  if (!(y1s > 0.0)) throw DomainError("conormal_trace: first two layers coincide");
  std::vector<double> out(np);
  for (std::size_t i = 0; i < np; ++i) {
    const double b = (slice[np + i] - slice[i]) / y1s;
    out[i] = -kp.kappa * 2.0 * kp.sigma * b;
  }
  return out;
}

namespace {

// Dirichlet part of the energy from mode coefficients of every layer (Parseval).
double dirichlet_modes(const std::vector<std::vector<cplx>>& c, const ExtGrid& grid) {
  const auto& box = grid.box();
  const auto lam = box.lambdas();
  const auto mult = box.multiplicity();
  const auto m = grid.masses();
  const auto w = grid.face_weights();
  double acc = 0.0;
  for (std::size_t k = 0; k < box.modes(); ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j + 1 < c.size(); ++j) s += w[j] * std::norm(c[j + 1][k] - c[j][k]);
    for (std::size_t j = 0; j < c.size(); ++j) s += lam[k] * m[j] * std::norm(c[j][k]);
    acc += mult[k] * s;
  }
  return 0.5 * box.volume() * acc;
}

double boundary_potential(std::span<const double> trace, const spectral::BoxGrid& box,
                          const kernels::KernelParams& kp, double p) {
  double acc = 0.0;
  for (double v : trace) acc += std::pow(std::max(v, 0.0), p + 1.0);
  return acc * box.cell_volume() / ((p + 1.0) * kp.kappa);
}

// y-weights int_{cell j} y^gamma exp(-k y^2) dy, exact.
std::vector<double> kaplan_y_weights(const ExtGrid& grid, double k) {
  const double a = 0.5 * (1.0 + grid.weight_exponent());
  const double pref = 0.5 * std::pow(k, -a) * std::tgamma(a);
  const auto y = grid.nodes();
  const std::size_t n = y.size();
  std::vector<double> w(n);
  auto P = [&](double yy) { return boost::math::gamma_p(a, k * yy * yy); };
  for (std::size_t j = 0; j < n; ++j) {
    const double lo = j == 0 ? 0.0 : 0.5 * (y[j - 1] + y[j]);
    const double hi = j + 1 == n ? y[j] : 0.5 * (y[j] + y[j + 1]);
    w[j] = pref * (P(hi) - (lo > 0.0 ? P(lo) : 0.0));
  }
  return w;
}

double kaplan_prefactor(const kernels::KernelParams& kp, double k) {
  const double eta = 0.5 * (kp.dim + 2.0 - 2.0 * kp.sigma);
  return kp.rho_test * std::pow(k, eta);
}

// int over the box of v(x) exp(-k|x|^2) from mode coefficients of v (periodized Gaussian).
double gaussian_pairing(std::span<const cplx> c, const spectral::BoxGrid& box, double k) {
  const auto lam = box.lambdas();
  const auto mult = box.multiplicity();
  if (box.points_per_axis() == 1) return c[0].real() * std::pow(std::numbers::pi / k, 0.5 * box.dim());
  double acc = 0.0;
  for (std::size_t m = 0; m < box.modes(); ++m) acc += mult[m] * c[m].real() * std::exp(-lam[m] / (4.0 * k));
  return acc * std::pow(std::numbers::pi / k, 0.5 * box.dim());
}

std::vector<std::vector<cplx>> to_modes(std::span<const double> slice, const ExtGrid& grid, spectral::Fft& fft) {
  const std::size_t np = grid.box().size();
  std::vector<std::vector<cplx>> c(grid.layers());
  for (std::size_t j = 0; j < grid.layers(); ++j) c[j] = fft.forward(slice.subspan(j * np, np));
  return c;
}

} // namespace

double energy_I(std::span<const double> slice, const ExtGrid& grid, const kernels::KernelParams& kp, double p) {
  spectral::Fft fft(grid.box());
  const auto c = to_modes(slice, grid, fft);
  return dirichlet_modes(c, grid) - boundary_potential(slice.subspan(0, grid.box().size()), grid.box(), kp, p);
}

double kaplan_J(std::span<const double> slice, const ExtGrid& grid, const kernels::KernelParams& kp, double k) {
  if (!(k > 0.0)) throw DomainError("kaplan_J needs k > 0");
  spectral::Fft fft(grid.box());
  const auto c = to_modes(slice, grid, fft);
  const auto w = kaplan_y_weights(grid, k);
  double acc = 0.0;
  for (std::size_t j = 0; j < grid.layers(); ++j) acc += w[j] * gaussian_pairing(c[j], grid.box(), k);
  return kaplan_prefactor(kp, k) * acc;
}

double top_mass_fraction(std::span<const double> slice, const ExtGrid& grid) {
  const std::size_t np = grid.box().size();
  double total = 0.0, top = 0.0;
  for (std::size_t j = 0; j < grid.layers(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < np; ++i) s += std::abs(slice[j * np + i]);
    s *= grid.masses()[j];
    total += s;
    if (grid.nodes()[j] > 0.75 * grid.y_max()) top += s;
  }
  return total > 0.0 ? top / total : 0.0;
}

ExtTrajectory extension_march(const mild::ProblemSpec& spec, const ExtOptions& opt) {
  spec.validate();
  const auto& kp = spec.params;
  const double sigma = kp.sigma;
  const double p = spec.p;
  const bool linear = static_cast<bool>(spec.source);

  auto box = std::make_shared<const spectral::BoxGrid>(kp.dim, spec.length, spec.n_x);
  auto grid = std::make_shared<const ExtGrid>(box, opt.n_y, opt.y_max, opt.grading, kp);
  spectral::Fft fft(*box);
  const auto lam = box->lambdas();
  const std::size_t nm = box->modes();
  const std::size_t np = box->size();
  const std::size_t nl = grid->layers();
  const auto mass = grid->masses();
  const auto face = grid->face_weights();

  std::vector<std::vector<double>> points(np);
  if (linear)
    for (std::size_t i = 0; i < np; ++i) points[i] = box->point(i);

  ExtTrajectory traj;
  traj.grid = grid;
  traj.params = kp;
  traj.p = p;
  traj.linear = linear;
  traj.kaplan_ks = opt.kaplan_ks;

  std::vector<std::vector<double>> kap_w;
  for (double k : opt.kaplan_ks) {
    if (!(k > 0.0)) throw std::invalid_argument("kaplan k values must be positive");
    kap_w.push_back(kaplan_y_weights(*grid, k));
  }

  // State in mode space, per layer.
  const Slice g = poisson_extend(spec.memory, *grid, kp);
  auto cur = to_modes(g, *grid, fft);
  std::vector<std::vector<cplx>> prev;

  std::vector<double> work(np);
  auto flux = [&](const std::vector<double>& trace, double t) {
    if (linear) {
      for (std::size_t i = 0; i < np; ++i) work[i] = spec.source(points[i], t);
    } else {
      for (std::size_t i = 0; i < np; ++i) work[i] = std::pow(std::max(trace[i], 0.0), p);
    }
    auto c = fft.forward(work);
    for (auto& v : c) v /= kp.kappa;
    return c;
  };

  auto physical_slice = [&](const std::vector<std::vector<cplx>>& c) {
    Slice s(nl * np);
    for (std::size_t j = 0; j < nl; ++j) fft.inverse(c[j], std::span<double>(s.data() + j * np, np));
    return s;
  };

  auto record = [&](double t, double dt, const std::vector<std::vector<cplx>>& c, bool keep) {
    std::vector<double> trace = fft.inverse(c[0]);
    traj.times.push_back(t);
    traj.sup_norms.push_back(sup_of(trace));
    traj.dts.push_back(dt);
    traj.energies.push_back(dirichlet_modes(c, *grid) - boundary_potential(trace, *box, kp, p));
    std::vector<double> js;
    for (std::size_t m = 0; m < opt.kaplan_ks.size(); ++m) {
      double acc = 0.0;
      for (std::size_t j = 0; j < nl; ++j) acc += kap_w[m][j] * gaussian_pairing(c[j], *box, opt.kaplan_ks[m]);
      js.push_back(kaplan_prefactor(kp, opt.kaplan_ks[m]) * acc);
    }
    traj.kaplan.push_back(std::move(js));
    traj.max_box_fraction =
        std::max(traj.max_box_fraction, spectral::boundary_mass_fraction(*box, trace, 0.25 * box->length()));
    if (keep) {
      auto s = physical_slice(c);
      traj.max_top_fraction = std::max(traj.max_top_fraction, top_mass_fraction(s, *grid));
      traj.slice_index.push_back(traj.times.size() - 1);
      traj.slices.push_back(std::move(s));
    }
    traj.traces.push_back(std::move(trace));
  };

  record(0.0, 0.0, cur, true);
  auto flux_cur = flux(traj.traces.back(), 0.0);
  std::vector<cplx> flux_prev;

  double t = 0.0, dt = std::min(spec.dt0, spec.t_max), dt_prev = 0.0;
  std::vector<double> diag(nl), off(nl - 1);
  std::vector<cplx> rhs(nl);
  std::size_t step = 0;
  traj.status = mild::RunStatus::completed_horizon;

  while (t < spec.t_max * (1.0 - 1e-14)) {
    dt = std::min(dt, spec.t_max - t);
    if (dt < spec.dt_floor) {
      const bool high = traj.sup_norms.back() >= spec.blowup_threshold;
      traj.status = high ? mild::RunStatus::blowup_detected : mild::RunStatus::step_failure;
      traj.message = "time step fell below dt_floor at t=" + std::to_string(t);
      break;
    }
    const double tn = t + dt;
    const bool bdf2 = !prev.empty();
    const double om = bdf2 ? dt / dt_prev : 0.0;
    const double a0 = bdf2 ? (1.0 + 2.0 * om) / (1.0 + om) : 1.0;
    const double a1 = bdf2 ? 1.0 + om : 1.0;
    const double a2 = bdf2 ? om * om / (1.0 + om) : 0.0;

    std::vector<cplx> bflux(nm);
    if (linear) {
      std::vector<double> dummy;
      bflux = flux(dummy, tn);
    } else if (bdf2) {
      for (std::size_t k = 0; k < nm; ++k) bflux[k] = (1.0 + om) * flux_cur[k] - om * flux_prev[k];
    } else {
      bflux = flux_cur;
    }

    std::vector<std::vector<cplx>> next(nl, std::vector<cplx>(nm));
    for (std::size_t k = 0; k < nm; ++k) {
      for (std::size_t j = 0; j < nl; ++j) {
        double d = a0 * mass[j] + dt * lam[k] * mass[j];
        if (j > 0) d += dt * face[j - 1];
        if (j + 1 < nl) d += dt * face[j];
        diag[j] = d;
        cplx r = mass[j] * (a1 * cur[j][k] - (bdf2 ? a2 * prev[j][k] : cplx(0.0)));
        if (j == 0) r += dt * bflux[k];
        rhs[j] = r;
      }
      for (std::size_t j = 0; j + 1 < nl; ++j) off[j] = -dt * face[j];
      thomas(diag, off, rhs);
      for (std::size_t j = 0; j < nl; ++j) next[j][k] = rhs[j];
    }

    bool finite = true;
    for (const auto& v : next[0]) finite = finite && std::isfinite(v.real()) && std::isfinite(v.imag());
    if (!finite) {
      dt *= 0.5;
      continue;
    }

    ++step;
    const bool keep = opt.slice_stride > 0 && step % static_cast<std::size_t>(opt.slice_stride) == 0;
    prev = std::move(cur);
    cur = std::move(next);
    dt_prev = dt;
    t = tn;
    record(t, dt, cur, keep);
    flux_prev = std::move(flux_cur);
    flux_cur = flux(traj.traces.back(), t);

    const double sup = traj.sup_norms.back();
    double nxt = std::min({dt * spec.dt_growth, spec.dt_max, spec.dt_grade * t});
    if (!linear && p > 1.0 && sup > 0.0) nxt = std::min(nxt, spec.dt_rate * std::pow(sup, -(p - 1.0) / sigma));
    nxt = std::min(nxt, 2.0 * dt); // BDF2 step-ratio stability
    if (sup >= spec.blowup_threshold && nxt <= spec.collapse_frac * t) {
      traj.status = mild::RunStatus::blowup_detected;
      traj.message = "sup norm above threshold with collapsed step";
      break;
    }
    dt = nxt;
  }
  if (traj.slice_index.empty() || traj.slice_index.back() != traj.times.size() - 1) {
    auto s = physical_slice(cur);
    traj.max_top_fraction = std::max(traj.max_top_fraction, top_mass_fraction(s, *grid));
    traj.slice_index.push_back(traj.times.size() - 1);
    traj.slices.push_back(std::move(s));
  }
  if (traj.max_top_fraction > opt.containment_limit && traj.message.empty())
    traj.message = "weighted mass near y_max exceeds the containment limit";
  return traj;
}

LevineResult levine_check(const ExtTrajectory& traj, double rel_tol) {
  LevineResult r;
  double scale = 0.0;
  for (double e : traj.energies) scale = std::max(scale, std::abs(e));
  const double tol = rel_tol * std::max(scale, 1e-300);
  for (std::size_t i = 0; i < traj.energies.size(); ++i) {
    if (traj.energies[i] < -tol) {
      r.negative_found = true;
      r.index = i;
      r.time = traj.times[i];
      break;
    }
  }
  return r;
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

void write_ext_run_dir(const ExtTrajectory& traj, const mild::ProblemSpec& spec, const ExtOptions& opt,
                       const std::filesystem::path& dir, const std::vector<std::string>& provenance) {
  std::filesystem::create_directories(dir / "slices");
  nlohmann::ordered_json meta;
  meta["format"] = "fracheat-ext-run/1";
  meta["sigma"] = spec.params.sigma;
  meta["dim"] = spec.params.dim;
  meta["p"] = spec.p;
  meta["memory"] = {{"family", memory::to_string(spec.memory.family())},
                    {"amplitude", spec.memory.amplitude()},
                    {"shift", spec.memory.shift()},
                    {"exponent", spec.memory.exponent()},
                    {"horizon", spec.memory.horizon()}};
  meta["grid"] = {{"length", spec.length}, {"n_x", spec.n_x}, {"n_y", opt.n_y}, {"y_max", opt.y_max},
                  {"grading", traj.grid->grading()}};
  meta["time"] = {{"dt0", spec.dt0}, {"t_max", spec.t_max}, {"dt_max", spec.dt_max}, {"dt_floor", spec.dt_floor}};
  meta["blowup_threshold"] = spec.blowup_threshold;
  meta["linear"] = traj.linear;
  meta["status"] = mild::to_string(traj.status);
  meta["message"] = traj.message;
  meta["steps"] = traj.times.size();
  meta["max_top_fraction"] = traj.max_top_fraction;
  meta["max_box_fraction"] = traj.max_box_fraction;
  meta["slice_times"] = traj.slice_index;
  meta["slice_format"] = "float64 little-endian, layer-major (y outer, x inner)";
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
      out << fmt17(traj.times[i]) << "," << fmt17(traj.sup_norms[i]) << "," << fmt17(traj.dts[i]) << ",0\n";
  }
  {
    auto out = open_out(dir / "energy.csv");
    header(out);
    out << "t,I_U";
    for (double k : traj.kaplan_ks) out << ",J_" << fmt17(k);
    out << "\n";
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
      out << fmt17(traj.times[i]) << "," << fmt17(traj.energies[i]);
      for (double j : traj.kaplan[i]) out << "," << fmt17(j);
      out << "\n";
    }
  }
  for (std::size_t s = 0; s < traj.slices.size(); ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "slice_%06zu.bin", traj.slice_index[s]);
    auto out = open_out(dir / "slices" / name);
    out.write(reinterpret_cast<const char*>(traj.slices[s].data()),
              static_cast<std::streamsize>(traj.slices[s].size() * sizeof(double)));
  }
}

} // namespace fracheat::ext
