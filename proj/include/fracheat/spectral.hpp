#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace fracheat::spectral {

using cplx = std::complex<double>;

/// Uniform periodic grid on [-L/2, L/2)^N with n points per axis.
///
/// Fourier coefficients are stored in the "centered" convention
///   u(x) = sum_k c_k exp(i xi_k . x),   c_k = |box|^{-1} int_box u(x) exp(-i xi_k . x) dx,
/// so that a Gaussian centered at the origin has real, positive coefficients.
/// n must be even, or 1 (a single space-homogeneous mode).
class BoxGrid {
public:
  BoxGrid(int dim, double length, int n);

  int dim() const { return dim_; }
  double length() const { return length_; }
  int points_per_axis() const { return n_; }
  double dx() const { return length_ / n_; }
  double volume() const;
  /// Volume of one grid cell (dx^N); equals the box volume when n == 1.
  double cell_volume() const;
  std::size_t size() const { return size_; }
  std::size_t modes() const { return modes_; }

  /// Coordinate of node `index` along every axis.
  std::vector<double> point(std::size_t index) const;
  double squared_radius(std::size_t index) const { return r2_[index]; }
  /// Node closest to the given point (per-axis rounding, periodic).
  std::size_t nearest_index(std::span<const double> x) const;

  /// |xi_k|^2 for every stored mode (half-spectrum layout of the real transform).
  std::span<const double> lambdas() const { return lambda_; }
  /// Multiplicity of each half-spectrum mode in the full spectrum (1 or 2).
  std::span<const double> multiplicity() const { return mult_; }
  /// |integer wavenumber| of mode m along axis a, stored at [m * dim + a].
  std::span<const int> axis_wavenumbers() const { return wave_; }
  /// 2 pi / L, the fundamental wavenumber.
  double base_wavenumber() const;

private:
  int dim_;
  double length_;
  int n_;
  std::size_t size_;
  std::size_t modes_;
  std::vector<double> r2_;
  std::vector<double> lambda_;
  std::vector<double> mult_;
  std::vector<double> sign_;
  std::vector<int> wave_;
  friend class Fft;
};

/// Real-to-complex transform pair bound to one grid. Not thread-safe per instance;
/// create one per worker.
class Fft {
public:
  explicit Fft(const BoxGrid& grid);
  ~Fft();
  Fft(Fft&&) noexcept;
  Fft& operator=(Fft&&) noexcept;
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  void forward(std::span<const double> values, std::span<cplx> coeffs);
  void inverse(std::span<const cplx> coeffs, std::span<double> values);

  std::vector<cplx> forward(std::span<const double> values);
  std::vector<double> inverse(std::span<const cplx> coeffs);

  const BoxGrid& grid() const { return *grid_; }

private:
  struct Impl;
  const BoxGrid* grid_;
  std::unique_ptr<Impl> impl_;
};

/// Applies a radial Fourier multiplier m(|xi|^2) to a grid function.
template <class Multiplier>
std::vector<double> apply_multiplier(Fft& fft, std::span<const double> values, Multiplier&& m) {
  auto coeffs = fft.forward(values);
  const auto lam = fft.grid().lambdas();
  for (std::size_t k = 0; k < coeffs.size(); ++k) coeffs[k] *= m(lam[k]);
  return fft.inverse(coeffs);
}

/// Mass fraction of |u| in the band within `width` of the box boundary (any axis).
double boundary_mass_fraction(const BoxGrid& grid, std::span<const double> values, double width);

} // namespace fracheat::spectral
