// One line per acceptance criterion; exit status 1 if any fails.
#include "fracheat/cli.hpp"
#include "fracheat/extension_solver.hpp"
#include "fracheat/lab.hpp"
#include "fracheat/mild_solver.hpp"
#include "fracheat/spectral.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

using namespace fracheat;
using memory::MemoryData;
using mild::RunStatus;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail, double seconds) {
  std::printf("%s  %-34s %s  [%.1fs]\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str(), seconds);
  std::fflush(stdout);
  if (!ok) ++failures;
}

struct Clock {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const lab::ValidationReport& battery() {
  static const lab::ValidationReport rep = lab::validation_battery();
  return rep;
}

bool entries_pass(const std::string& prefix, std::string& detail) {
  bool ok = true;
  bool any = false;
  for (const auto& e : battery().entries) {
    if (e.name.rfind(prefix, 0) != 0) continue;
    any = true;
    ok = ok && e.pass;
    detail += e.name + "=" + fmt("%.2e", e.error);
    if (std::isfinite(e.order)) detail += fmt("(ord %.2f)", e.order);
    detail += " ";
  }
  return ok && any;
}

mild::ProblemSpec fujita_spec(double p, double a) {
  mild::ProblemSpec s;
  s.params = kernels::KernelParams::make(0.5, 1);
  s.p = p;
  s.memory = MemoryData::gaussian_bump(a, 1.0, 1);
  s.length = 200.0;
  s.n_x = 512;
  s.t_max = 100.0;
  s.dt0 = 1e-3;
  s.dt_max = 0.5;
  s.blowup_threshold = 1e3;
  return s;
}

// Largest ratio of a slice's negative part to what the grid can resolve: the coefficient mass
// in the upper half of the band (the Gibbs undershoot scale) plus a roundoff floor.
double negativity_ratio(const mild::Trajectory& tr) {
  spectral::Fft fft(*tr.grid);
  const auto wave = tr.grid->axis_wavenumbers();
  const auto mult = tr.grid->multiplicity();
  const int dim = tr.grid->dim();
  const int cut = tr.grid->points_per_axis() / 4;
  double worst = 0.0;
  for (std::size_t k = 0; k < tr.slices.size(); ++k) {
    double lo = 0.0;
    for (double v : tr.slices[k]) lo = std::min(lo, v);
    if (lo >= 0.0) continue;
    const auto c = fft.forward(tr.slices[k]);
    double tail = 0.0;
    for (std::size_t q = 0; q < c.size(); ++q) {
      int top = 0;
      for (int a = 0; a < dim; ++a) top = std::max(top, wave[q * dim + a]);
      if (top > cut) tail += mult[q] * std::abs(c[q]);
    }
    worst = std::max(worst, -lo / (tail + 1e-12 * tr.sup_norms[k]));
  }
  return worst;
}

bool levine_consistent(const ext::ExtTrajectory& tr) {
  return !(ext::levine_check(tr).negative_found && tr.status == RunStatus::completed_horizon);
}

bool energy_monotone(const ext::ExtTrajectory& tr) {
  for (std::size_t i = 1; i < tr.energies.size(); ++i)
    if (tr.energies[i] > tr.energies[i - 1] + 1e-10 * std::abs(tr.energies[i - 1])) return false;
  return true;
}

} // namespace

int main() {
  std::vector<ext::ExtTrajectory> ext_runs; // collected for the Levine assertion

  {
    Clock c;
    std::string d;
    const bool ok = entries_pass("marchaud_power_rule", d) & entries_pass("master_psi", d);
    report(ok, "closed-form battery", d, c.seconds());
  }
  {
    Clock c;
    std::string d;
    report(entries_pass("fundamental_solution", d), "fundamental solution", d, c.seconds());
  }
  {
    Clock c;
    std::string d;
    const bool ok = entries_pass("explicit_blowup", d) & entries_pass("explicit_global", d);
    report(ok, "explicit ODE solutions", d, c.seconds());
  }
  {
    Clock c;
    std::string d;
    report(entries_pass("conormal_consistency", d), "conormal/extension consistency", d, c.seconds());
  }

  {
    Clock c;
    bool ok = true;
    std::string d;
    for (double sigma : {0.3, 0.5, 0.7}) {
      mild::ProblemSpec s;
      s.params = kernels::KernelParams::make(sigma, 1);
      s.memory = MemoryData::gaussian_bump(1.0, 0.5, 1);
      s.length = 24.0;
      s.n_x = 128;
      s.t_max = 1.0;
      s.dt_max = 0.01;
      s.source = [](std::span<const double> x, double t) { return std::cos(t) * std::exp(-x[0] * x[0]); };
      const auto m = mild::mild_march(s);
      ext::ExtOptions o;
      o.n_y = 128;
      const auto e = ext::extension_march(s, o);
      ext_runs.push_back(e);
      double err = 0.0, scale = 0.0;
      std::size_t j = 0;
      for (std::size_t k = 0; k < m.times.size(); ++k) {
        while (j + 1 < e.times.size() && e.times[j + 1] < m.times[k]) ++j;
        const std::size_t j1 = std::min(j + 1, e.times.size() - 1);
        const double w = j1 == j ? 0.0 : (m.times[k] - e.times[j]) / (e.times[j1] - e.times[j]);
        for (std::size_t i = 0; i < m.slices[k].size(); ++i) {
          const double v = (1.0 - w) * e.traces[j][i] + w * e.traces[j1][i];
          err = std::max(err, std::abs(v - m.slices[k][i]));
          scale = std::max(scale, std::abs(m.slices[k][i]));
        }
      }
      ok = ok && err / scale < 2e-2;
      d += "sigma " + fmt("%.1f", sigma) + ": " + fmt("%.2e", err / scale) + "  ";
    }
    report(ok, "cross-solver equivalence", d, c.seconds());
  }

  std::vector<mild::Trajectory> fujita_small, fujita_large;
  {
    Clock c;
    bool ok = true;
    std::string d;
    for (double p : {1.2, 1.3, 1.7, 2.0}) {
      auto small = mild::mild_march(fujita_spec(p, 0.1));
      auto large = mild::mild_march(fujita_spec(p, 3.0));
      const bool small_up = small.status == RunStatus::blowup_detected;
      const bool large_up = large.status == RunStatus::blowup_detected;
      bool small_ok;
      if (p < lab::p_star(0.5, 1)) {
        small_ok = small_up;
      } else {
        // Completed horizon with a decaying sup norm: final value well below the peak.
        double peak = 0.0;
        for (double v : small.sup_norms) peak = std::max(peak, v);
        small_ok = small.status == RunStatus::completed_horizon && small.sup_norms.back() < 0.5 * peak &&
                   small.sup_norms.back() < small.sup_norms[small.sup_norms.size() / 2];
      }
      ok = ok && small_ok && large_up;
      d += "p=" + fmt("%.1f", p) + " small " + (small_up ? "escape@" + fmt("%.1f", small.times.back()) : "global") +
           " large " + (large_up ? "escape" : "global") + "; ";
      fujita_small.push_back(std::move(small));
      fujita_large.push_back(std::move(large));
    }
    report(ok, "Fujita phase diagram", d + "p*=1.5", c.seconds());
  }

  {
    Clock c;
    bool ok = true;
    std::string d;
    {
      auto s = fujita_spec(1.3, 0.1);
      s.blowup_threshold = 1e4;
      const auto tr = mild::mild_march(s);
      double beta = NAN;
      try {
        beta = lab::fit_rate(tr).rate_exp;
      } catch (const std::exception& e) {
        d += std::string(e.what()) + " ";
      }
      const double target = 0.5 / 0.3;
      ok = ok && std::abs(beta - target) <= 0.15 * target;
      d += "p=1.3: " + fmt("%.4f", beta) + " vs " + fmt("%.4f", target) + "; ";
    }
    {
      mild::ProblemSpec s;
      s.params = kernels::KernelParams::make(0.5, 1);
      s.p = 2.0;
      s.memory = MemoryData::explicit_blowup(2.0, 1.0);
      s.n_x = 1;
      s.length = 1.0;
      s.t_max = 2.0;
      s.dt_max = 0.0025;
      s.dt_rate = 0.005;
      const auto tr = mild::mild_march(s);
      double beta = NAN;
      try {
        beta = lab::fit_rate(tr).rate_exp;
      } catch (const std::exception& e) {
        d += std::string(e.what()) + " ";
      }
      ok = ok && std::abs(beta - 0.5) <= 0.05 * 0.5;
      d += "explicit z: " + fmt("%.4f", beta) + " vs 0.5";
    }
    report(ok, "blow-up rate", d, c.seconds());
  }

  {
    Clock c;
    std::string d;
    // Comparison on a shared time grid.
    mild::ProblemSpec s;
    s.p = 2.0;
    s.n_x = 128;
    s.length = 20.0;
    s.t_max = 1.0;
    s.dt0 = s.dt_max = 0.01;
    s.dt_growth = 1.0;
    s.dt_grade = 1e9;
    s.dt_rate = 1e9;
    s.memory = MemoryData::gaussian_bump(0.4, 1.0, 1);
    const auto lo = mild::mild_march(s);
    s.memory = MemoryData::gaussian_bump(0.5, 1.0, 1);
    const auto hi = mild::mild_march(s);
    double worst = lo.times.size() == hi.times.size() ? 0.0 : INFINITY;
    for (std::size_t k = 0; k < lo.times.size() && k < hi.times.size(); ++k)
      for (std::size_t i = 0; i < lo.slices[k].size(); ++i) worst = std::max(worst, lo.slices[k][i] - hi.slices[k][i]);
    const bool comparison = worst <= 1e-12;
    d += "comparison " + fmt("%.1e", worst);

    double neg = 0.0;
    for (const auto* runs : {&fujita_small, &fujita_large})
      for (const auto& tr : *runs) neg = std::max(neg, negativity_ratio(tr));
    const bool positivity = neg <= 1.0;
    d += ", positivity " + fmt("%.1e", neg) + " of resolution bound";

    // Extension runs: small data (global) and large data (blow-up) at p = 2.
    for (double a : {0.1, 3.0}) {
      auto es = fujita_spec(2.0, a);
      es.length = 40.0;
      es.n_x = 128;
      es.t_max = 10.0;
      ext::ExtOptions o;
      o.n_y = 96;
      ext_runs.push_back(ext::extension_march(es, o));
    }
    bool energy = true;
    for (const auto& tr : ext_runs)
      if (!tr.linear) energy = energy && energy_monotone(tr);
    d += std::string(", energy ") + (energy ? "nonincreasing" : "INCREASES");

    const auto box = std::make_shared<const spectral::BoxGrid>(1, 20.0, 64);
    const auto kp = kernels::KernelParams::make(0.5, 1);
    const ext::ExtGrid g(box, 128, 12.0, 0.0, kp);
    const double kap = std::abs(ext::kaplan_J(ext::Slice(g.layers() * box->size(), 1.0), g, kp, 1.0) - 1.0);
    const bool kaplan = kap < 1e-3;
    d += ", Kaplan " + fmt("%.1e", kap);

    bool levine = true;
    for (const auto& tr : ext_runs)
      if (!tr.linear) levine = levine && levine_consistent(tr);
    const auto& big = ext_runs.back();
    const auto lv = ext::levine_check(big);
    levine = levine && big.status == RunStatus::blowup_detected && lv.negative_found && lv.time < big.times.back();
    levine = levine && !ext::levine_check(ext_runs[ext_runs.size() - 2]).negative_found;
    d += std::string(", Levine ") + (levine ? "consistent" : "INCONSISTENT");

    // Artifacts: same config twice, byte-identical CSVs.
    bool same = true;
    const auto dir = std::filesystem::temp_directory_path() / "fracheat_acceptance";
    std::filesystem::remove_all(dir);
    const std::string sim = "[problem]\nsigma = 0.5\np = 2\nn_x = 64\nt_max = 0.5\n[memory]\nfamily = gaussian_bump\n"
                            "amplitude = 0.5\n";
    const std::string sweep = sim + "[sweep]\nps = 1.2, 2\ndata_scales = 0.1, 3\n";
    std::ostringstream sink;
    for (const char* run : {"a", "b"}) {
      cli::run(cli::parse_config(sim, cli::Command::simulate), dir / "sim" / run, sink);
      auto sw = cli::parse_config(sweep, cli::Command::sweep);
      sw.threads = run[0] == 'a' ? 1 : 2;
      cli::run(sw, dir / "sweep" / run, sink);
    }
    for (const char* f : {"sim/X/times.csv", "sim/X/supnorm.csv", "sweep/X/phase.csv"}) {
      std::string a = f, b = f;
      a.replace(a.find('X'), 1, "a");
      b.replace(b.find('X'), 1, "b");
      same = same && std::filesystem::exists(dir / a) && slurp(dir / a) == slurp(dir / b);
    }
    std::filesystem::remove_all(dir);
    d += std::string(", determinism ") + (same ? "identical" : "DIFFERS");

    report(comparison && positivity && energy && kaplan && levine && same, "property suite", d, c.seconds());
  }

  std::printf("%s\n", failures == 0 ? "ALL PRIMARY CRITERIA PASS" : "SOME PRIMARY CRITERIA FAIL");
  return failures == 0 ? 0 : 1;
}
