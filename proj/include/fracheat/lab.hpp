#pragma once

#include "fracheat/extension_solver.hpp"
#include "fracheat/kernels.hpp"
#include "fracheat/mild_solver.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace fracheat::lab {

class InsufficientData : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class RegimeKind { global_all, blowup_all, conditional };
std::string to_string(RegimeKind k);

struct Regime {
  RegimeKind kind;
  double p_star;
};

/// 1 + 2 sigma / (N + 2 (1 - sigma)).
double p_star(double sigma, int dim);
Regime fujita_classify(double p, double sigma, int dim);

/// c with c^{p-1} = Gamma(sigma p/(p-1)) / Gamma(sigma/(p-1)).
double explicit_blowup_constant(double p, double sigma);
/// z(t) = c (T - t)^{-sigma/(p-1)}.
std::function<double(double)> explicit_blowup(double p, double sigma, double horizon);

/// c_* with c_*^{p-1} = Gamma(1+nu) / Gamma(1+nu-sigma), nu = sigma/(1-p).
double explicit_global_constant(double p, double sigma);
/// c_* (t + t1)_+^nu.
std::function<double(double)> explicit_global(double p, double sigma, double t1);

/// Marchaud derivative of a scalar history v by adaptive quadrature, after integrating by
/// parts: (1/Gamma(1-sigma)) int_0^inf v'(t - tau) tau^{-sigma} dtau. Takes dv = v' and the
/// tau values where v' is not smooth.
double marchaud_quadrature(const std::function<double(double)>& dv, double t, double sigma,
                           std::vector<double> breaks = {});

struct BlowupReport {
  bool detected = false;
  double T_est = std::numeric_limits<double>::quiet_NaN();
  double rate_exp = std::numeric_limits<double>::quiet_NaN();
  double rate_ci = std::numeric_limits<double>::quiet_NaN(); ///< 1.96 standard errors of the slope
  double residual = std::numeric_limits<double>::quiet_NaN(); ///< rms of the log fit
  double window_start = 0.0;
  double window_end = 0.0;
  std::size_t points = 0;
};

/// Joint least-squares fit of log m = a - beta log(T - t) over the final decade of
/// growth of the running maximum m, restricted to m >= 10 * initial_scale.
/// Throws InsufficientData below 8 points.
BlowupReport fit_rate(std::span<const double> times, std::span<const double> sup_norms, double initial_scale);
BlowupReport fit_rate(const mild::Trajectory& traj);

struct LowerBoundReport {
  bool skipped = false;
  double c = 0.0;        ///< largest c with u >= c t^{sigma-1} K_t on the window
  std::size_t samples = 0;
};

/// Sampled over stored times t >= t0 and |x| <= L/4.
LowerBoundReport lower_bound_check(const mild::Trajectory& traj, double t0);

/// int_{t0}^{t} s^{(sigma-1)p} int K_s^p dx ds in closed form per time, integrated by quadrature.
double critical_reaction_integral(double sigma, int dim, double p, double t0, double t);

struct KaplanReport {
  double c1 = 0.0, c2 = 0.0;
  double crossover = 0.0;     ///< (c2/c1)^{1/(p-1)}
  std::size_t checked = 0;    ///< steps with J above the crossover
  std::size_t violations = 0; ///< steps where the discrete inequality fails beyond tol
  double worst = 0.0;         ///< largest relative shortfall
};

/// Discrete J_{i+1} - J_i >= dt [c1 J^p - c2 J]_{trapezoid} on the k = 1 monitor.
/// c1 = 2/(Gamma(1-sigma) kappa), c2 = 2N + 4(1-sigma).
KaplanReport kaplan_monitor(const ext::ExtTrajectory& traj, double rel_tol = 1e-2);

struct ValidationEntry {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  double order = std::numeric_limits<double>::quiet_NaN();
  bool pass = false;
};

struct ValidationOptions {
  double sigma = 0.5;
  int dim = 1;
  int marchaud_samples = 10000;
  int master_nx = 256;
  double master_dt = 1e-3;
  int conormal_ny = 128;
  double green_scale = 1.0; ///< multiplies the fundamental solution on t > 0 (mutation testing)
  unsigned seed = 1;
};

struct ValidationReport {
  std::vector<ValidationEntry> entries;
  bool all_pass() const;
  const ValidationEntry* find(const std::string& name) const;
};

ValidationReport validation_battery(const ValidationOptions& opt = {});
void write_validation_json(const ValidationReport& rep, const std::filesystem::path& path,
                           const std::vector<std::string>& provenance);

struct SweepSpec {
  std::vector<double> sigmas{0.5};
  std::vector<double> ps{1.2, 1.3, 1.7, 2.0};
  std::vector<double> data_scales{0.1, 3.0};
  int dim = 1;
  double bump_shift = 1.0;
  mild::ProblemSpec base; ///< memory, sigma, dim and p are overwritten per cell
  unsigned threads = 1;
};

struct SweepCell {
  double sigma = 0.0;
  int dim = 1;
  double p = 0.0;
  double data_scale = 0.0;
  mild::RunStatus status = mild::RunStatus::completed_horizon;
  double T_est = std::numeric_limits<double>::quiet_NaN();
  double rate_exp = std::numeric_limits<double>::quiet_NaN();
  double rate_ci = std::numeric_limits<double>::quiet_NaN();
  double sup_start = 0.0, sup_end = 0.0, sup_max = 0.0;
  /// -d log sup / d log t over the last fifth of the run (NaN if undefined).
  double decay_exp = std::numeric_limits<double>::quiet_NaN();
  std::string message;
};

struct PhaseLabel {
  double sigma = 0.0;
  int dim = 1;
  double p = 0.0;
  double p_star = 0.0;
  std::string label;  ///< blowup-all, conditional, global-observed, slow-indeterminate, inconclusive
  std::string theory; ///< regime from fujita_classify
  bool consistent = true;
};

/// Runs every (sigma, p, data_scale) cell; cells are independent and may run on `threads` workers.
/// Output order is fixed (sigma, p, data_scale) regardless of scheduling.
std::vector<SweepCell> run_sweep(const SweepSpec& spec);
std::vector<PhaseLabel> label_cells(const std::vector<SweepCell>& cells);
void write_phase_csv(const std::vector<SweepCell>& cells, const std::filesystem::path& path,
                     const std::vector<std::string>& provenance);
void write_labels_csv(const std::vector<PhaseLabel>& labels, const std::filesystem::path& path,
                      const std::vector<std::string>& provenance);

std::string format_double(double x);

} // namespace fracheat::lab
