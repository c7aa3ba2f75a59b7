#ifndef DECAYLAB_ANALYSIS_HPP
#define DECAYLAB_ANALYSIS_HPP

#include "decaylab/analytic.hpp"
#include "decaylab/evolve.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

// Regime fits on sampled survival traces: Zeno parabola, log-linear
// exponential, period-averaged power law and band-edge oscillation.
namespace decaylab::analysis
{
enum class Selection
{
    manual,
    automatic,
};

struct FitWindow
{
    double t_lo = 0.0;
    double t_hi = 0.0;
    Selection selection = Selection::manual;
};

struct AnalysisConfig
{
    double slope_spread = 0.05;   // max |s - mean| / mean of the local log-slope
    int stencil_points = 5;       // finite-difference stencil for the local slope
    int min_window_samples = 8;
    double min_efolds = 1.0;      // exponential window must span gamma * width >= this
    double zeno_fraction = 0.2;   // default Zeno window [0, zeno_fraction / kappa0]
    double zeno_limit = 0.3;      // t_hi <= zeno_limit / kappa0 when kappa0 is known
    double power_window_fraction = 0.55; // default power/oscillation window [f T, T]
    double power_exponent_tolerance = 0.5;
    double contrast_threshold = 0.05;
    double plateau_tolerance = 0.05;
    double no_decay_threshold = 1e-6; // min p > 1 - this: "no decay"
};

struct ZenoFit
{
    double tau_z_est = 0.0;
    double rms = 0.0; // residual of 1 - p against slope * t^2
    FitWindow window;
    int n_points = 0;
};

struct ExponentialFit
{
    double z_est = 0.0;
    double gamma_est = 0.0;
    double rms = 0.0; // residual of ln p
    FitWindow window;
    int n_points = 0;
};

struct PowerFit
{
    double exponent = 0.0;
    double prefactor = 0.0; // mm, p = (prefactor / t)^3 convention: exp(intercept / 3)
    double rms = 0.0;       // residual of ln of the period-averaged p
    double exponential_rms = 0.0; // residual of a log-linear fit to the same averaged data
    double period = 0.0;    // averaging period, 0 when no averaging was applied
    double c_len_measured = 0.0; // mm, cbrt(mean of t^3 * averaged p) over the window
    FitWindow window;
    int n_points = 0;
};

struct OscillationFit
{
    double omega_est = 0.0; // mm^-1, 0 when no peak was found
    double contrast = 0.0;  // relative modulation amplitude of t^3 p
    bool suppressed = true;
    double rms = 0.0;       // residual of the sinusoid fit to the detrended signal
    FitWindow window;
    int n_points = 0;
};

// Slope of (1 - p) against t^2 through the origin. When the trace carries its
// parameters, t_hi must not exceed config.zeno_limit / kappa0.
ZenoFit fit_zeno(const SurvivalTrace &trace, const FitWindow &window,
                 const AnalysisConfig &config = {});

// Largest window of constant local decay rate after the Zeno stage.
FitWindow select_exp_window(const SurvivalTrace &trace, const AnalysisConfig &config = {});

// Least squares on (t, ln p). With sigma_p (one entry per trace sample) the
// residuals are weighted by p / sigma_p.
ExponentialFit fit_exponential(const SurvivalTrace &trace, const FitWindow &window,
                               const std::vector<double> *sigma_p = nullptr);

// Least squares on (ln t, ln pbar) with pbar the moving average of p over one
// period 2 pi / (4 kappa). The period comes from trace.params unless given;
// with neither, p is fitted unaveraged.
PowerFit fit_power_law(const SurvivalTrace &trace, const FitWindow &window,
                       std::optional<double> period = std::nullopt);

// Least-squares periodogram of t^3 p, detrended by its cubic trend.
OscillationFit oscillation_frequency(const SurvivalTrace &trace, const FitWindow &window,
                                     const AnalysisConfig &config = {});

FitWindow default_zeno_window(const ChainParams &params, const AnalysisConfig &config = {});
FitWindow default_tail_window(const SurvivalTrace &trace, const AnalysisConfig &config = {});

// Values quoted for the experiment, printed next to computed counterparts.
struct LiteratureValues
{
    double z_experimental = 1.23;
    double c_inf_quoted_mm = 9.48;
    std::string note;
};

LiteratureValues literature_values();

struct AnalyticPredictions
{
    std::optional<analytic::PoleData> pole;
    std::optional<analytic::TransitionTimes> times;
    std::optional<analytic::AsymptoteData> asymptote;
    std::optional<double> gamma_fgr;
};

struct PlateauData
{
    double early_mean = 0.0; // mean p over [T/2, 3T/4]
    double late_mean = 0.0;  // mean p over [3T/4, T]
    double level = 0.0;      // mean p over [T/2, T]
    std::optional<double> predicted; // sum of squared bound-state weights
    bool flat = false;
};

struct RegimeFit
{
    bool no_decay = false;
    std::optional<ZenoFit> zeno;
    std::optional<ExponentialFit> exponential;
    std::optional<PowerFit> power;
    std::optional<OscillationFit> oscillation;
    std::optional<PlateauData> plateau;

    bool zeno_detected = false;
    bool exponential_detected = false;
    bool power_detected = false;
    bool oscillation_detected = false;
    bool plateau_detected = false;

    std::optional<analytic::ZenoTime> zeno_time;
    AnalyticPredictions predictions;
    LiteratureValues literature;
    std::map<std::string, std::string> absent; // field -> reason
};

// Runs every fit with automatic windows. Sub-fit failures become entries of
// RegimeFit::absent instead of exceptions.
RegimeFit regime_report(const ChainParams &params, const SurvivalTrace &trace,
                        const AnalysisConfig &config = {});

} // namespace decaylab::analysis

#endif // DECAYLAB_ANALYSIS_HPP
