#include "decaylab/analytic.hpp"

#include "decaylab/errors.hpp"
#include "decaylab/quadrature.hpp"

#include <cmath>
#include <sstream>

namespace decaylab::analytic
{
namespace
{
void require_nearest(const ChainParams &params)
{
    if (!params.nearest_neighbour_only())
        throw ValidationError("analytic module requires q=0 (and q0=0)");
}

// Principal-root product sqrt(E + 2k) sqrt(E - 2k); cut only on [-2k, 2k].
cplx root_product(double kappa, cplx e)
{
    // A signed zero imaginary part would select the lower lip of the cut.
    if (e.imag() == 0.0)
        e = cplx(e.real(), 0.0);
    return std::sqrt(e + 2.0 * kappa) * std::sqrt(e - 2.0 * kappa);
}

double sign_for(Sheet sheet, cplx e)
{
    if (sheet == Sheet::second && e.imag() < 0.0)
        return -1.0;
    return 1.0;
}

// 1/G^II in the lower half-plane and its derivative.
cplx continued_inverse(const ChainParams &params, cplx e)
{
    const double half_l2 = 0.5 * params.lambda() * params.lambda();
    return e - params.eps() - half_l2 * e - half_l2 * root_product(params.kappa(), e);
}

cplx continued_inverse_derivative(const ChainParams &params, cplx e)
{
    const double half_l2 = 0.5 * params.lambda() * params.lambda();
    return 1.0 - half_l2 - half_l2 * e / root_product(params.kappa(), e);
}
} // namespace

cplx inverse_propagator(const ChainParams &params, cplx e, Sheet sheet)
{
    require_nearest(params);
    const double kappa = params.kappa();
    if (e.imag() == 0.0 && std::abs(std::abs(e.real()) - 2.0 * kappa) == 0.0)
        throw ValidationError("propagator: energy sits on a branch point");
    if (sheet == Sheet::physical && e.imag() == 0.0 && std::abs(e.real()) < 2.0 * kappa)
        throw ValidationError("propagator: physical sheet is discontinuous on the cut");

    const double half_l2 = 0.5 * params.lambda() * params.lambda();
    return e - params.eps() - half_l2 * e + sign_for(sheet, e) * half_l2 * root_product(kappa, e);
}

cplx propagator(const ChainParams &params, cplx e, Sheet sheet)
{
    return 1.0 / inverse_propagator(params, e, sheet);
}

PoleData pole(const ChainParams &params)
{
    require_nearest(params);
    const double kappa = params.kappa();
    const double eps = params.eps();
    const double l2 = params.lambda() * params.lambda();
    const double detuning2 = (eps / (2.0 * kappa)) * (eps / (2.0 * kappa));
    const double radicand = 1.0 - l2 - detuning2;
    if (l2 >= 1.0)
        throw NumericError("no decaying pole: closed form needs lambda < 1");
    if (radicand <= 0.0)
        throw NumericError("no decaying pole: 1 - lambda^2 - (eps/2kappa)^2 <= 0");

    PoleData data;
    data.e_pole_closed =
        cplx((1.0 - 0.5 * l2) * eps, -l2 * kappa * std::sqrt(radicand)) / (1.0 - l2);

    cplx e = data.e_pole_closed;
    for (int iter = 0; iter < 60; ++iter)
    {
        const cplx step = continued_inverse(params, e) / continued_inverse_derivative(params, e);
        e -= step;
        if (std::abs(step) <= 1e-16 * (std::abs(e) + kappa))
            break;
    }
    data.e_pole = e;
    data.root_residual = std::abs(continued_inverse(params, e));
    if (!(data.root_residual < 1e-12) || !(e.imag() <= 0.0))
    {
        std::ostringstream msg;
        msg << "pole refinement failed: residual " << data.root_residual << " at " << e;
        throw NumericError(msg.str());
    }

    data.delta = e.real();
    data.gamma = -2.0 * e.imag();
    data.residue = 1.0 / continued_inverse_derivative(params, e);
    data.z_factor = std::norm(data.residue);
    data.z_factor_closed =
        1.0 + l2 / (1.0 - l2) * (1.0 - 0.75 * l2 - detuning2) / (1.0 - l2 - detuning2);

    const double abs_eps = std::abs(eps);
    data.strip_valid = 0.5 * l2 < (2.0 * kappa - abs_eps) / (4.0 * kappa - abs_eps);
    data.unstable = instability_margin(params) > 0.0;
    data.status = data.strip_valid ? "ok"
                                   : "pole outside the strip below the cut; closed form may not "
                                     "describe the dominant pole";
    return data;
}

double decay_rate_fgr(const ChainParams &params)
{
    require_nearest(params);
    const double ratio = params.eps() / (2.0 * params.kappa());
    if (std::abs(ratio) >= 1.0)
        throw ValidationError("defect outside band: golden rule density of states vanishes");
    return 2.0 * params.lambda() * params.lambda() * params.kappa() * std::sqrt(1.0 - ratio * ratio);
}

ZenoTime zeno_time(const ChainParams &params)
{
    if (params.kappa0() == 0.0)
        throw ValidationError("no decay channel: kappa0 = 0");
    ZenoTime z;
    z.tau_coupling = 1.0 / params.kappa0();
    z.tau_z = 1.0 / std::hypot(params.kappa0(), params.q0());
    z.next_nearest_correction = params.q0() != 0.0;
    return z;
}

cplx edge_integrand(const ChainParams &params, int sigma, double x)
{
    const double kappa = params.kappa();
    const double l2 = params.lambda() * params.lambda();
    const double s = sigma > 0 ? 1.0 : -1.0;
    const cplx i(0.0, 1.0);
    const cplx base = (1.0 - 0.5 * l2) * (2.0 * s * kappa - i * x) - params.eps();
    const cplx denom = base * base + 0.25 * l2 * l2 * (4.0 * i * s * kappa + x) * x;
    return std::sqrt(cplx(4.0 * kappa, -s * x)) / denom;
}

cplx cut_amplitude(const ChainParams &params, double t, const CutOptions &options)
{
    require_nearest(params);
    if (!(t >= 0.0))
        throw ValidationError("cut_amplitude: t must be non-negative");

    const double kappa = params.kappa();
    const double l2 = params.lambda() * params.lambda();
    const double phase = 2.0 * kappa * t + 0.25 * M_PI;
    const cplx phase_plus = std::polar(1.0, -phase);
    const cplx phase_minus = std::polar(1.0, phase);

    // x = u^2 removes the sqrt(x) endpoint behaviour; u = c s / (1 - s) maps
    // [0, inf) onto [0, 1) with c matched to the decay scale of exp(-x t).
    const double c = 1.0 / std::sqrt(t + 1.0 / kappa);
    auto integrand = [&](double s) -> cplx {
        const double u = c * s / (1.0 - s);
        const double x = u * u;
        const double damping = x * t;
        if (damping > 700.0)
            return 0.0;
        const cplx edges = phase_plus * edge_integrand(params, +1, x) +
                           phase_minus * edge_integrand(params, -1, x);
        const double jacobian = 2.0 * u * u * c / ((1.0 - s) * (1.0 - s));
        return edges * (jacobian * std::exp(-damping));
    };

    QuadratureOptions quad;
    quad.rel_tol = options.rel_tol;
    quad.abs_tol = options.abs_tol;
    quad.max_intervals = options.max_intervals;
    const QuadratureResult r = integrate_gauss_kronrod(integrand, 0.0, 1.0, quad);
    if (!r.converged)
    {
        std::ostringstream msg;
        msg << "cut_amplitude quadrature did not converge at t = " << t << ": error estimate "
            << r.error_estimate << " vs |value| " << std::abs(r.value);
        throw NumericError(msg.str());
    }
    return -l2 / (2.0 * M_PI) * r.value;
}

AsymptoteData power_law_asymptote(const ChainParams &params)
{
    require_nearest(params);
    if (!params.edge_formula_valid())
        throw ValidationError("power_law_asymptote: |q/kappa| >= 1/4");
    const double kappa = params.kappa();
    const double eps = params.eps();
    const double l2 = params.lambda() * params.lambda();
    const double edge = kappa * (2.0 - l2);
    if (std::abs(eps) >= edge)
        throw ValidationError("power_law_asymptote: |eps| >= kappa (2 - lambda^2), the pole "
                              "collides with a band edge");

    AsymptoteData a;
    a.edge_coeff_plus = 2.0 * std::sqrt(kappa) / ((edge - eps) * (edge - eps));
    a.edge_coeff_minus = 2.0 * std::sqrt(kappa) / ((edge + eps) * (edge + eps));
    const double cp2 = a.edge_coeff_plus * a.edge_coeff_plus;
    const double cm2 = a.edge_coeff_minus * a.edge_coeff_minus;
    a.c_cubed = l2 * l2 * (cp2 + cm2) / (16.0 * M_PI);
    a.c_len = std::cbrt(a.c_cubed);
    a.c_cubed_closed = l2 * l2 * kappa / (2.0 * M_PI) *
                       (1.0 / std::pow(edge + eps, 4) + 1.0 / std::pow(edge - eps, 4));
    a.c_len_closed = std::cbrt(a.c_cubed_closed);
    a.osc_omega = 4.0 * kappa;
    a.osc_amp = 2.0 * a.edge_coeff_plus * a.edge_coeff_minus / (cp2 + cm2);
    // |e^{-i(2kt + pi/4)} C_+ + e^{+i(2kt + pi/4)} C_-|^2 carries cos(4 kappa t + pi/2).
    a.osc_phase = 0.5 * M_PI;
    return a;
}

TransitionTimes transition_times(const ChainParams &params)
{
    require_nearest(params);
    const PoleData p = pole(params);
    if (!(p.gamma > 0.0))
        throw NumericError("no exponential/power-law crossover: pole does not decay");

    TransitionTimes tt;
    tt.tau_z = 1.0 / params.kappa0();
    tt.lifetime = 1.0 / p.gamma;
    tt.tau_zero = 0.5 * p.gamma * tt.tau_z * tt.tau_z;
    const double ratio = params.eps() / (2.0 * params.kappa());
    tt.tau_zero_small_coupling = std::sqrt(std::max(0.0, 1.0 - ratio * ratio)) / params.kappa();

    AsymptoteData asym;
    try
    {
        asym = power_law_asymptote(params);
    }
    catch (const ValidationError &e)
    {
        throw NumericError(std::string("no exponential/power-law crossover: ") + e.what());
    }

    // log(Z e^{-gamma tau}) - log(C / tau^3): concave with its maximum at 3/gamma,
    // so the largest root lies beyond max(tau_zero, 3/gamma).
    const double log_z = std::log(p.z_factor);
    const double log_c = std::log(asym.c_cubed);
    auto mismatch = [&](double tau) { return log_z - p.gamma * tau - log_c + 3.0 * std::log(tau); };

    double lo = std::max(tt.tau_zero, 3.0 / p.gamma);
    double hi = 1e6 * tt.tau_z;
    if (!(mismatch(lo) > 0.0) || !(mismatch(hi) < 0.0))
        throw NumericError("no exponential/power-law crossover");
    for (int iter = 0; iter < 400 && hi - lo > 1e-15 * hi; ++iter)
    {
        const double mid = 0.5 * (lo + hi);
        (mismatch(mid) > 0.0 ? lo : hi) = mid;
    }
    tt.tau_inf = 0.5 * (lo + hi);
    tt.crossover_residual = std::abs(std::expm1(mismatch(tt.tau_inf)));
    return tt;
}

} // namespace decaylab::analytic
