#pragma once

#include <functional>

namespace fracheat::quad {

/// Integral over [a,b] of a function that may be singular (integrably) at either end.
double finite(const std::function<double(double)>& f, double a, double b, double rel_tol = 1e-12);

/// Integral over [a, inf) of a decaying function, possibly singular at a.
double half_line(const std::function<double(double)>& f, double a, double rel_tol = 1e-12);

} // namespace fracheat::quad
