#ifndef DECAYLAB_QUADRATURE_HPP
#define DECAYLAB_QUADRATURE_HPP

#include <complex>
#include <functional>

namespace decaylab
{
struct QuadratureResult
{
    std::complex<double> value;
    double error_estimate = 0.0;
    int intervals = 0;
    bool converged = false;
};

struct QuadratureOptions
{
    double rel_tol = 1e-10;
    double abs_tol = 1e-15;
    int max_intervals = 4000;
};

// Globally adaptive 7/15-point Gauss-Kronrod on [a, b] for a complex
// integrand. The interval with the largest Kronrod-Gauss difference is
// bisected until the summed error estimate is below
// max(abs_tol, rel_tol * |value|) or max_intervals is reached.
QuadratureResult integrate_gauss_kronrod(const std::function<std::complex<double>(double)> &f,
                                         double a, double b,
                                         const QuadratureOptions &options = {});

} // namespace decaylab

#endif // DECAYLAB_QUADRATURE_HPP
