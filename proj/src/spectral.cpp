#include "fracheat/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace fracheat::spectral {

namespace {

// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::size_t ipow(std::size_t base, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

} // namespace

BoxGrid::BoxGrid(int dim, double length, int n) : dim_(dim), length_(length), n_(n) {
  if (dim < 1 || dim > 3) throw std::invalid_argument("BoxGrid: dim must be 1, 2 or 3");
  if (!(length > 0.0)) throw std::invalid_argument("BoxGrid: length must be positive");
  if (n < 1 || (n > 1 && n % 2 != 0))
    throw std::invalid_argument("BoxGrid: n must be 1 or even, got " + std::to_string(n));

  size_ = ipow(static_cast<std::size_t>(n), dim);
  const std::size_t half = static_cast<std::size_t>(n / 2 + 1);
  modes_ = (n == 1) ? 1 : ipow(static_cast<std::size_t>(n), dim - 1) * half;

  r2_.resize(size_);
  for (std::size_t idx = 0; idx < size_; ++idx) {
    std::size_t rem = idx;
    double r2 = 0.0;
    for (int a = dim - 1; a >= 0; --a) {
      const auto i = rem % static_cast<std::size_t>(n);
      rem /= static_cast<std::size_t>(n);
      const double x = (n == 1) ? 0.0 : -0.5 * length + static_cast<double>(i) * dx();
      r2 += x * x;
    }
    r2_[idx] = r2;
  }

  lambda_.resize(modes_);
  mult_.resize(modes_);
  sign_.resize(modes_);
  wave_.assign(modes_ * static_cast<std::size_t>(dim), 0);
  const double kscale = 2.0 * std::numbers::pi / length;
  for (std::size_t m = 0; m < modes_; ++m) {
    if (n == 1) {
      lambda_[m] = 0.0;
      mult_[m] = 1.0;
      sign_[m] = 1.0;
      continue;
    }
    std::size_t rem = m;
    double lam = 0.0;
    int parity = 0;
    double mult = 1.0;
    for (int a = dim - 1; a >= 0; --a) {
      const std::size_t extent = (a == dim - 1) ? half : static_cast<std::size_t>(n);
      const auto k = static_cast<long>(rem % extent);
      rem /= extent;
      const long ks = (k > n / 2) ? k - n : k;
      wave_[m * static_cast<std::size_t>(dim) + static_cast<std::size_t>(a)] = static_cast<int>(std::labs(ks));
      const double xi = kscale * static_cast<double>(ks);
      lam += xi * xi;
      parity += static_cast<int>(k % 2);
      if (a == dim - 1 && k != 0 && k != n / 2) mult = 2.0;
    }
    lambda_[m] = lam;
    mult_[m] = mult;
    sign_[m] = (parity % 2 == 0) ? 1.0 : -1.0;
  }
}

double BoxGrid::base_wavenumber() const { return 2.0 * std::numbers::pi / length_; }

double BoxGrid::volume() const { return std::pow(length_, dim_); }

double BoxGrid::cell_volume() const { return std::pow(dx(), dim_); }

std::vector<double> BoxGrid::point(std::size_t index) const {
  std::vector<double> x(static_cast<std::size_t>(dim_), 0.0);
  std::size_t rem = index;
  for (int a = dim_ - 1; a >= 0; --a) {
    const auto i = rem % static_cast<std::size_t>(n_);
    rem /= static_cast<std::size_t>(n_);
    x[static_cast<std::size_t>(a)] = (n_ == 1) ? 0.0 : -0.5 * length_ + static_cast<double>(i) * dx();
  }
  return x;
}

std::size_t BoxGrid::nearest_index(std::span<const double> x) const {
  if (n_ == 1) return 0;
  std::size_t idx = 0;
  for (int a = 0; a < dim_; ++a) {
    const double pos = (x[static_cast<std::size_t>(a)] + 0.5 * length_) / dx();
    long i = std::lround(pos) % n_;
    if (i < 0) i += n_;
    idx = idx * static_cast<std::size_t>(n_) + static_cast<std::size_t>(i);
  }
  return idx;
}

struct Fft::Impl {
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;

  ~Impl() {
    std::lock_guard lock(planner_mutex());
    if (fwd) fftw_destroy_plan(fwd);
    if (inv) fftw_destroy_plan(inv);
    if (real) fftw_free(real);
    if (spec) fftw_free(spec);
  }
};

Fft::Fft(const BoxGrid& grid) : grid_(&grid), impl_(std::make_unique<Impl>()) {
  if (grid.points_per_axis() == 1) return;
  std::lock_guard lock(planner_mutex());
  impl_->real = fftw_alloc_real(grid.size());
  impl_->spec = fftw_alloc_complex(grid.modes());
  std::vector<int> dims(static_cast<std::size_t>(grid.dim()), grid.points_per_axis());
  impl_->fwd = fftw_plan_dft_r2c(grid.dim(), dims.data(), impl_->real, impl_->spec, FFTW_ESTIMATE);
  impl_->inv = fftw_plan_dft_c2r(grid.dim(), dims.data(), impl_->spec, impl_->real, FFTW_ESTIMATE);
  if (!impl_->fwd || !impl_->inv) throw std::runtime_error("FFTW planning failed");
}

Fft::~Fft() = default;
Fft::Fft(Fft&&) noexcept = default;
Fft& Fft::operator=(Fft&&) noexcept = default;

void Fft::forward(std::span<const double> values, std::span<cplx> coeffs) {
  const BoxGrid& g = *grid_;
  if (values.size() != g.size() || coeffs.size() != g.modes())
    throw std::invalid_argument("Fft::forward: size mismatch");
  if (g.points_per_axis() == 1) {
    coeffs[0] = values[0];
    return;
  }
  std::copy(values.begin(), values.end(), impl_->real);
  fftw_execute(impl_->fwd);
  const double scale = 1.0 / static_cast<double>(g.size());
  for (std::size_t m = 0; m < g.modes(); ++m)
    coeffs[m] = cplx(impl_->spec[m][0], impl_->spec[m][1]) * (scale * g.sign_[m]);
}

void Fft::inverse(std::span<const cplx> coeffs, std::span<double> values) {
  const BoxGrid& g = *grid_;
  if (values.size() != g.size() || coeffs.size() != g.modes())
    throw std::invalid_argument("Fft::inverse: size mismatch");
  if (g.points_per_axis() == 1) {
    values[0] = coeffs[0].real();
    return;
  }
  for (std::size_t m = 0; m < g.modes(); ++m) {
    impl_->spec[m][0] = coeffs[m].real() * g.sign_[m];
    impl_->spec[m][1] = coeffs[m].imag() * g.sign_[m];
  }
  fftw_execute(impl_->inv);
  std::copy(impl_->real, impl_->real + g.size(), values.begin());
}

std::vector<cplx> Fft::forward(std::span<const double> values) {
  std::vector<cplx> c(grid_->modes());
  forward(values, c);
  return c;
}

std::vector<double> Fft::inverse(std::span<const cplx> coeffs) {
  std::vector<double> v(grid_->size());
  inverse(coeffs, v);
  return v;
}

double boundary_mass_fraction(const BoxGrid& grid, std::span<const double> values, double width) {
  if (grid.points_per_axis() == 1) return 0.0;
  double total = 0.0;
  double near = 0.0;
  const double inner = 0.5 * grid.length() - width;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double a = std::abs(values[i]);
    total += a;
    const auto x = grid.point(i);
    bool edge = false;
    for (double xi : x) edge = edge || std::abs(xi) > inner;
    if (edge) near += a;
  }
  return total > 0.0 ? near / total : 0.0;
}

} // namespace fracheat::spectral
