#include "decaylab/quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <vector>

namespace decaylab
{
namespace
{
// Kronrod nodes on [0, 1] (symmetric, the last is the centre); odd indices
// are shared with the 7-point Gauss rule.
constexpr std::array<double, 8> kNodes{
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kKronrodWeights{
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kGaussWeights{
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment
{
    double a, b;
    std::complex<double> value;
    double error;
    bool operator<(const Segment &other) const { return error < other.error; }
};

Segment apply_rule(const std::function<std::complex<double>(double)> &f, double a, double b)
{
    const double centre = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const std::complex<double> fc = f(centre);
    std::complex<double> kronrod = kKronrodWeights[7] * fc;
    std::complex<double> gauss = kGaussWeights[3] * fc;
    for (int j = 0; j < 7; ++j)
    {
        const double dx = half * kNodes[j];
        const std::complex<double> sum = f(centre - dx) + f(centre + dx);
        kronrod += kKronrodWeights[j] * sum;
        if (j % 2 == 1)
            gauss += kGaussWeights[j / 2] * sum;
    }
    return {a, b, kronrod * half, std::abs((kronrod - gauss) * half)};
}
} // namespace

QuadratureResult integrate_gauss_kronrod(const std::function<std::complex<double>(double)> &f,
                                         double a, double b, const QuadratureOptions &options)
{
    std::priority_queue<Segment> queue;
    Segment first = apply_rule(f, a, b);
    std::complex<double> total = first.value;
    double error = first.error;
    queue.push(first);

    QuadratureResult result;
    while (true)
    {
        const double target = std::max(options.abs_tol, options.rel_tol * std::abs(total));
        if (error <= target)
        {
            result.converged = true;
            break;
        }
        if (static_cast<int>(queue.size()) >= options.max_intervals)
            break;
        Segment worst = queue.top();
        queue.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b))
            break; // interval exhausted at machine precision
        Segment left = apply_rule(f, worst.a, mid);
        Segment right = apply_rule(f, mid, worst.b);
        total += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        queue.push(left);
        queue.push(right);
    }

    // Re-sum from the segments to shed the drift of the running updates.
    std::vector<Segment> segments;
    segments.reserve(queue.size());
    while (!queue.empty())
    {
        segments.push_back(queue.top());
        queue.pop();
    }
    std::sort(segments.begin(), segments.end(),
              [](const Segment &l, const Segment &r) { return l.a < r.a; });
    result.value = 0.0;
    result.error_estimate = 0.0;
    for (const auto &s : segments)
    {
        result.value += s.value;
        result.error_estimate += s.error;
    }
    result.intervals = static_cast<int>(segments.size());
    if (!result.converged)
        result.converged = result.error_estimate <=
                           std::max(options.abs_tol, options.rel_tol * std::abs(result.value));
    return result;
}

} // namespace decaylab
