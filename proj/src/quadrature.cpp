#include "fracheat/quadrature.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

namespace fracheat::quad {

double finite(const std::function<double(double)>& f, double a, double b, double rel_tol) {
  if (a == b) return 0.0;
  thread_local boost::math::quadrature::tanh_sinh<double> integrator(12);
  return integrator.integrate(f, a, b, rel_tol);
}

double half_line(const std::function<double(double)>& f, double a, double rel_tol) {
  thread_local boost::math::quadrature::exp_sinh<double> integrator(12);
  if (a == 0.0) return integrator.integrate(f, rel_tol);
  return integrator.integrate([&](double w) { return f(a + w); }, rel_tol);
}

} // namespace fracheat::quad
