#pragma once

#include "fracheat/kernels.hpp"
#include "fracheat/memory.hpp"
#include "fracheat/mild_solver.hpp"
#include "fracheat/spectral.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fracheat::ext {

/// Periodic box in x times a graded mesh y_j = Y (j/n_y)^q on [0, Y].
class ExtGrid {
public:
  /// q <= 0 selects the default grading max(1, 2/(1+gamma)).
  ExtGrid(std::shared_ptr<const spectral::BoxGrid> box, int n_y, double y_max, double q,
          const kernels::KernelParams& kp);

  const spectral::BoxGrid& box() const { return *box_; }
  std::shared_ptr<const spectral::BoxGrid> box_ptr() const { return box_; }
  int n_y() const { return n_y_; }
  double y_max() const { return y_max_; }
  double grading() const { return q_; }
  double weight_exponent() const { return gamma_; }
  std::size_t layers() const { return y_.size(); }

  std::span<const double> nodes() const { return y_; }
  /// int of y^gamma over the control volume of node j (exact).
  std::span<const double> masses() const { return mass_; }
  /// Exact two-point flux weight between nodes j and j+1: 2 sigma / (y_{j+1}^{2 sigma} - y_j^{2 sigma}).
  std::span<const double> face_weights() const { return face_; }

  /// int_0^Y y^gamma dy.
  double total_mass() const;

private:
  std::shared_ptr<const spectral::BoxGrid> box_;
  int n_y_;
  double y_max_;
  double q_;
  double gamma_;
  std::vector<double> y_, mass_, face_;
};

/// A slice U(x, y_j): layer-major, values[j * box.size() + i].
using Slice = std::vector<double>;

/// Caloric extension of the memory data at t = 0 on every node.
Slice poisson_extend(const memory::MemoryData& f, const ExtGrid& grid, const kernels::KernelParams& kp);

/// -kappa lim y^gamma dU/dy from the fit U ~ a + b y^{2 sigma} on the first two layers.
std::vector<double> conormal_trace(std::span<const double> slice, const ExtGrid& grid,
                                   const kernels::KernelParams& kp);

/// Weighted Dirichlet energy minus the boundary potential.
double energy_I(std::span<const double> slice, const ExtGrid& grid, const kernels::KernelParams& kp, double p);

/// int U phi_k d mu with phi_k = rho k^{(N+2-2 sigma)/2} exp(-k |X|^2).
double kaplan_J(std::span<const double> slice, const ExtGrid& grid, const kernels::KernelParams& kp, double k);

/// Fraction of weighted |U| mass in the top quarter of the y range.
double top_mass_fraction(std::span<const double> slice, const ExtGrid& grid);

struct ExtOptions {
  int n_y = 128;
  double y_max = 12.0;
  double grading = 0.0;       ///< 0: default
  int slice_stride = 0;       ///< keep every k-th slice (0: first and last only)
  std::vector<double> kaplan_ks{1.0};
  double containment_limit = 1e-3;
};

struct ExtTrajectory {
  std::shared_ptr<const ExtGrid> grid;
  kernels::KernelParams params;
  double p = 1.0;
  bool linear = false;

  std::vector<double> times;
  std::vector<std::vector<double>> traces; ///< U(., 0, t_i)
  std::vector<double> sup_norms;
  std::vector<double> dts;
  std::vector<double> energies;
  std::vector<std::vector<double>> kaplan; ///< kaplan[i][m] for kaplan_ks[m]
  std::vector<double> kaplan_ks;
  std::vector<std::size_t> slice_index;    ///< time indices of the kept slices
  std::vector<Slice> slices;
  double max_top_fraction = 0.0;
  double max_box_fraction = 0.0;
  mild::RunStatus status = mild::RunStatus::completed_horizon;
  std::string message;
};

/// IMEX BDF2 march of y^gamma U_t = div(y^gamma grad U) with the reaction entering as
/// boundary flux kappa^{-1} u^p at y = 0 (or kappa^{-1} h for the linear problem).
/// Step-size and blow-up rules follow the mild solver's spec fields.
ExtTrajectory extension_march(const mild::ProblemSpec& spec, const ExtOptions& opt);

struct LevineResult {
  bool negative_found = false;
  std::size_t index = 0;
  double time = 0.0;
};

/// First time with I_U below -tol (tol scaled by the largest |I_U| seen).
LevineResult levine_check(const ExtTrajectory& traj, double rel_tol = 1e-8);

/// Run directory with meta.json, times.csv, supnorm.csv, energy.csv and the kept slices.
void write_ext_run_dir(const ExtTrajectory& traj, const mild::ProblemSpec& spec, const ExtOptions& opt,
                       const std::filesystem::path& dir, const std::vector<std::string>& provenance);

} // namespace fracheat::ext
