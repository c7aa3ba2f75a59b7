#ifndef DECAYLAB_ANALYTIC_HPP
#define DECAYLAB_ANALYTIC_HPP

#include "decaylab/model.hpp"

#include <complex>
#include <string>

// Closed-form resolvent machinery of the nearest-neighbour chain (q = q0 = 0).
// Every entry point refuses next-nearest couplings with a ValidationError:
// no closed forms exist there and the numerical evolution is the reference.
namespace decaylab::analytic
{
using cplx = std::complex<double>;

// physical: G(E) = <0|(E - H)^-1|0> on the cut plane.
// second:   continuation of the physical sheet from above through the cut
//           [-2 kappa, 2 kappa]. Identical to the physical sheet for
//           Im E >= 0 (and on the real axis outside the band); differs below
//           the cut, where the decay pole lives.
enum class Sheet
{
    physical,
    second,
};

// 1 / G(E) = E - eps - (lambda^2/2) E +/- (lambda^2/2) sqrt(E + 2k) sqrt(E - 2k)
// with principal roots: "+" on the physical sheet, "-" on the continuation.
cplx inverse_propagator(const ChainParams &params, cplx e, Sheet sheet);
cplx propagator(const ChainParams &params, cplx e, Sheet sheet);

struct PoleData
{
    cplx e_pole;         // Newton-refined root of 1/G^II, mm^-1
    cplx e_pole_closed;  // closed-form starting point
    double delta = 0.0;  // Re E_p
    double gamma = 0.0;  // -2 Im E_p
    cplx residue;        // residue of G^II at E_p
    double z_factor = 0.0;        // |residue|^2
    double z_factor_closed = 0.0; // closed-form wavefunction renormalization
    double root_residual = 0.0;   // |1/G^II(E_p)|
    bool strip_valid = false;     // pole between the vertical half-lines below +/-2 kappa
    bool unstable = false;        // instability_margin > 0: full decay expected
    std::string status;           // "ok" or a warning
};

PoleData pole(const ChainParams &params);

// Golden-rule rate 2 lambda^2 kappa sqrt(1 - (eps / 2 kappa)^2).
double decay_rate_fgr(const ChainParams &params);

struct ZenoTime
{
    double tau_z = 0.0;        // (<H^2> - <H>^2)^-1/2 = 1 / sqrt(kappa0^2 + q0^2)
    double tau_coupling = 0.0; // 1 / kappa0, independent of q and q0
    bool next_nearest_correction = false; // q0 != 0, the two values differ
};

// Accepts any q; kappa0 = 0 throws ("no decay channel").
ZenoTime zeno_time(const ChainParams &params);

struct CutOptions
{
    double rel_tol = 1e-10;
    double abs_tol = 1e-14;
    int max_intervals = 4000;
};

// Branch-cut part of the survival amplitude, a(t) - Z exp(-i E_p t).
cplx cut_amplitude(const ChainParams &params, double t, const CutOptions &options = {});

// Edge integrand C_sigma(x) of the cut amplitude, sigma = +1 or -1.
cplx edge_integrand(const ChainParams &params, int sigma, double x);

// Long-time law p(t) ~ (c_cubed / t^3) (1 + osc_amp cos(osc_omega t + osc_phase)).
struct AsymptoteData
{
    double edge_coeff_plus = 0.0;  // C_+(0)
    double edge_coeff_minus = 0.0; // C_-(0)
    double c_cubed = 0.0;          // mm^3, lambda^4 (C_+^2 + C_-^2) / 16 pi
    double c_len = 0.0;            // mm, cbrt(c_cubed)
    double c_cubed_closed = 0.0;   // mm^3, the alternative closed form (twice c_cubed)
    double c_len_closed = 0.0;     // mm
    double osc_omega = 0.0;        // 4 kappa, mm^-1
    double osc_amp = 0.0;          // 2 C_+ C_- / (C_+^2 + C_-^2)
    double osc_phase = 0.0;        // rad
};

AsymptoteData power_law_asymptote(const ChainParams &params);

struct TransitionTimes
{
    double tau_zero = 0.0; // closest approach of Zeno parabola and exponential, mm
    double tau_inf = 0.0;  // exponential / power-law crossover (largest root), mm
    double tau_z = 0.0;    // mm
    double lifetime = 0.0; // 1 / gamma, mm
    double tau_zero_small_coupling = 0.0; // (1/kappa) sqrt(1 - (eps/2kappa)^2)
    double crossover_residual = 0.0;      // relative mismatch of the two sides at tau_inf
};

TransitionTimes transition_times(const ChainParams &params);

} // namespace decaylab::analytic

#endif // DECAYLAB_ANALYTIC_HPP
