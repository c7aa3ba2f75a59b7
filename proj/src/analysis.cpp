#include "decaylab/analysis.hpp"

#include "decaylab/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace decaylab::analysis
{
namespace
{
void check_trace(const SurvivalTrace &trace)
{
    if (trace.t.size() != trace.p.size())
        throw ValidationError("trace: t and p differ in length");
    if (trace.t.size() < 2)
        throw ValidationError("trace: needs at least two samples");
    for (std::size_t i = 1; i < trace.t.size(); ++i)
    {
        if (!(trace.t[i] > trace.t[i - 1]))
            throw ValidationError("trace: sample times must be strictly increasing");
    }
}

std::vector<std::size_t> window_indices(const SurvivalTrace &trace, const FitWindow &window,
                                        int min_samples)
{
    if (!(window.t_lo < window.t_hi))
        throw ValidationError("fit window needs t_lo < t_hi");
    const double slack = 1e-9 * std::max(1.0, std::abs(window.t_hi));
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < trace.t.size(); ++i)
    {
        if (trace.t[i] >= window.t_lo - slack && trace.t[i] <= window.t_hi + slack)
            idx.push_back(i);
    }
    if (static_cast<int>(idx.size()) < min_samples)
    {
        std::ostringstream msg;
        msg << "fit window [" << window.t_lo << ", " << window.t_hi << "] holds " << idx.size()
            << " samples, need at least " << min_samples;
        throw ValidationError(msg.str());
    }
    return idx;
}

struct Line
{
    double intercept = 0.0;
    double slope = 0.0;
    double rms = 0.0;
};

// Weighted least-squares line through centred data.
Line fit_line(const std::vector<double> &x, const std::vector<double> &y,
              const std::vector<double> &w)
{
    const double sw = std::accumulate(w.begin(), w.end(), 0.0);
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        mx += w[i] * x[i];
        my += w[i] * y[i];
    }
    mx /= sw;
    my /= sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        sxx += w[i] * (x[i] - mx) * (x[i] - mx);
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0))
        throw ValidationError("line fit: abscissae are degenerate");
    Line line;
    line.slope = sxy / sxx;
    line.intercept = my - line.slope * mx;
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        const double r = y[i] - line.intercept - line.slope * x[i];
        ss += r * r;
    }
    line.rms = std::sqrt(ss / x.size());
    return line;
}

Line fit_line(const std::vector<double> &x, const std::vector<double> &y)
{
    return fit_line(x, y, std::vector<double>(x.size(), 1.0));
}

// Derivative at x[at] of the interpolating polynomial through x[first .. first+m).
double stencil_derivative(const std::vector<double> &x, const std::vector<double> &y,
                          std::size_t first, std::size_t m, std::size_t at)
{
    double d = 0.0;
    for (std::size_t j = first; j < first + m; ++j)
    {
        double lj = 0.0;
        for (std::size_t k = first; k < first + m; ++k)
        {
            if (k == j)
                continue;
            double term = 1.0 / (x[j] - x[k]);
            for (std::size_t l = first; l < first + m; ++l)
            {
                if (l != j && l != k)
                    term *= (x[at] - x[l]) / (x[j] - x[l]);
            }
            lj += term;
        }
        d += lj * y[j];
    }
    return d;
}

std::optional<double> oscillation_period(const SurvivalTrace &trace)
{
    if (trace.params)
        return 2.0 * M_PI / (4.0 * trace.params->kappa());
    return std::nullopt;
}

// Cumulative trapezoid of p, evaluated at arbitrary t inside the trace.
class RunningIntegral
{
public:
    explicit RunningIntegral(const SurvivalTrace &trace) : t_(trace.t), p_(trace.p), s_(t_.size())
    {
        for (std::size_t i = 1; i < t_.size(); ++i)
            s_[i] = s_[i - 1] + 0.5 * (t_[i] - t_[i - 1]) * (p_[i] + p_[i - 1]);
    }

    double at(double x) const
    {
        auto it = std::upper_bound(t_.begin(), t_.end(), x);
        std::size_t k = it == t_.begin() ? 0 : static_cast<std::size_t>(it - t_.begin()) - 1;
        k = std::min(k, t_.size() - 2);
        const double h = t_[k + 1] - t_[k];
        const double dx = x - t_[k];
        const double px = p_[k] + (p_[k + 1] - p_[k]) * dx / h;
        return s_[k] + 0.5 * dx * (p_[k] + px);
    }

private:
    const std::vector<double> &t_;
    const std::vector<double> &p_;
    std::vector<double> s_;
};

struct SinusoidFit
{
    double power = 0.0; // reduction of the residual sum of squares
    double amplitude = 0.0;
    double rss = 0.0;
};

SinusoidFit fit_sinusoid(const std::vector<double> &t, const std::vector<double> &r, double omega,
                         double rss0)
{
    Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < t.size(); ++i)
    {
        const Eigen::Vector3d row(std::cos(omega * t[i]), std::sin(omega * t[i]), 1.0);
        a += row * row.transpose();
        b += row * r[i];
    }
    const Eigen::Vector3d coef = a.ldlt().solve(b);
    SinusoidFit fit;
    for (std::size_t i = 0; i < t.size(); ++i)
    {
        const double e = r[i] - coef[0] * std::cos(omega * t[i]) - coef[1] * std::sin(omega * t[i]) -
                         coef[2];
        fit.rss += e * e;
    }
    fit.power = rss0 - fit.rss;
    fit.amplitude = std::hypot(coef[0], coef[1]);
    return fit;
}
} // namespace

ZenoFit fit_zeno(const SurvivalTrace &trace, const FitWindow &window, const AnalysisConfig &config)
{
    check_trace(trace);
    if (trace.params && trace.params->kappa0() > 0.0)
    {
        const double limit = config.zeno_limit / trace.params->kappa0();
        if (window.t_hi > limit * (1.0 + 1e-12))
        {
            std::ostringstream msg;
            msg << "Zeno window ends at " << window.t_hi << " mm, beyond " << config.zeno_limit
                << "/kappa0 = " << limit << " mm";
            throw ValidationError(msg.str());
        }
    }
    const auto idx = window_indices(trace, window, config.min_window_samples);

    double s_num = 0.0, s_den = 0.0;
    for (std::size_t i : idx)
    {
        const double t2 = trace.t[i] * trace.t[i];
        s_num += t2 * (1.0 - trace.p[i]);
        s_den += t2 * t2;
    }
    if (!(s_den > 0.0) || !(s_num > 0.0))
        throw NumericError("no curvature: 1 - p does not grow with t^2 on the Zeno window");
    const double slope = s_num / s_den;

    ZenoFit fit;
    fit.tau_z_est = 1.0 / std::sqrt(slope);
    double ss = 0.0;
    for (std::size_t i : idx)
    {
        const double r = 1.0 - trace.p[i] - slope * trace.t[i] * trace.t[i];
        ss += r * r;
    }
    fit.rms = std::sqrt(ss / idx.size());
    fit.window = window;
    fit.n_points = static_cast<int>(idx.size());
    return fit;
}

FitWindow select_exp_window(const SurvivalTrace &trace, const AnalysisConfig &config)
{
    check_trace(trace);
    const std::size_t m = static_cast<std::size_t>(config.stencil_points);
    const std::size_t min_len = static_cast<std::size_t>(config.min_window_samples);

    // Usable prefix: ln p needs p > 0.
    std::size_t n = 0;
    while (n < trace.p.size() && trace.p[n] > 0.0)
        ++n;
    if (n < std::max(min_len, m) || n < 2)
        throw NumericError("no exponential regime detected: too few positive samples");

    std::vector<double> log_p(n);
    for (std::size_t i = 0; i < n; ++i)
        log_p[i] = std::log(trace.p[i]);

    std::vector<double> rate(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        const std::size_t half = m / 2;
        std::size_t first = i >= half ? i - half : 0;
        first = std::min(first, n - m);
        rate[i] = -stencil_derivative(trace.t, log_p, first, m, i);
    }

    // Zeno time from the first step, tau ~ t / sqrt(1 - p), then the closest
    // approach of parabola and exponential, rate * tau^2 / 2. No drop below
    // one at the first step (e.g. Z > 1 data without a Zeno stage): start at 0.
    const double drop = 1.0 - trace.p[1];
    double tau_zero = 0.0;
    if (drop > 0.0)
    {
        const double tau_z = (trace.t[1] - trace.t[0]) / std::sqrt(drop);
        const double rate_max = *std::max_element(rate.begin(), rate.end());
        tau_zero = trace.t[0] + 0.5 * rate_max * tau_z * tau_z;
    }
    std::size_t start = 0;
    while (start + 1 < n && trace.t[start + 1] <= tau_zero)
        ++start;

    std::size_t best_i = 0, best_len = 0;
    for (std::size_t i = start; i + min_len <= n; ++i)
    {
        double sum = 0.0;
        double lo = rate[i], hi = rate[i];
        for (std::size_t j = i; j < n; ++j)
        {
            sum += rate[j];
            lo = std::min(lo, rate[j]);
            hi = std::max(hi, rate[j]);
            const std::size_t len = j - i + 1;
            if (len < min_len || len <= best_len)
                continue;
            const double mean = sum / len;
            if (!(mean > 0.0))
                continue;
            const double spread = std::max(hi - mean, mean - lo) / mean;
            const double efolds = mean * (trace.t[j] - trace.t[i]);
            if (spread <= config.slope_spread && efolds >= config.min_efolds)
            {
                best_i = i;
                best_len = len;
            }
        }
    }
    if (best_len == 0)
        throw NumericError("no exponential regime detected");
    return {trace.t[best_i], trace.t[best_i + best_len - 1], Selection::automatic};
}

ExponentialFit fit_exponential(const SurvivalTrace &trace, const FitWindow &window,
                               const std::vector<double> *sigma_p)
{
    check_trace(trace);
    if (sigma_p && sigma_p->size() != trace.p.size())
        throw ValidationError("fit_exponential: sigma_p must match the trace length");
    const auto idx = window_indices(trace, window, 8);

    std::vector<double> x, y, w;
    for (std::size_t i : idx)
    {
        if (!(trace.p[i] > 0.0))
            throw ValidationError("fit_exponential: p must be positive on the fit window");
        x.push_back(trace.t[i]);
        y.push_back(std::log(trace.p[i]));
        if (sigma_p)
        {
            const double s = (*sigma_p)[i];
            if (!(s > 0.0))
                throw ValidationError("fit_exponential: sigma_p must be positive");
            w.push_back((trace.p[i] / s) * (trace.p[i] / s));
        }
        else
        {
            w.push_back(1.0);
        }
    }
    const Line line = fit_line(x, y, w);
    ExponentialFit fit;
    fit.z_est = std::exp(line.intercept);
    fit.gamma_est = -line.slope;
    fit.rms = line.rms;
    fit.window = window;
    fit.n_points = static_cast<int>(idx.size());
    return fit;
}

PowerFit fit_power_law(const SurvivalTrace &trace, const FitWindow &window,
                       std::optional<double> period)
{
    check_trace(trace);
    if (!period)
        period = oscillation_period(trace);
    const double per = period.value_or(0.0);
    if (per < 0.0)
        throw ValidationError("fit_power_law: period must be non-negative");
    if (per > 0.0 && window.t_hi - window.t_lo < 2.0 * per)
    {
        std::ostringstream msg;
        msg << "power-law window of " << window.t_hi - window.t_lo
            << " mm is shorter than two oscillation periods (" << 2.0 * per << " mm)";
        throw ValidationError(msg.str());
    }
    const auto idx = window_indices(trace, window, 8);

    const RunningIntegral integral(trace);
    std::vector<double> log_t, log_p, t_used, p_used;
    for (std::size_t i : idx)
    {
        const double t = trace.t[i];
        double value = trace.p[i];
        if (per > 0.0)
        {
            if (t - 0.5 * per < trace.t.front() || t + 0.5 * per > trace.t.back())
                continue;
            value = (integral.at(t + 0.5 * per) - integral.at(t - 0.5 * per)) / per;
        }
        if (!(t > 0.0) || !(value > 0.0))
            throw ValidationError("fit_power_law: t and p must be positive on the fit window");
        log_t.push_back(std::log(t));
        log_p.push_back(std::log(value));
        t_used.push_back(t);
        p_used.push_back(value);
    }
    if (log_t.size() < 8)
        throw ValidationError("fit_power_law: fewer than 8 samples have a full averaging period");

    const Line line = fit_line(log_t, log_p);
    PowerFit fit;
    fit.exponent = line.slope;
    fit.prefactor = std::exp(line.intercept / 3.0);
    fit.rms = line.rms;
    fit.exponential_rms = fit_line(t_used, log_p).rms;
    fit.period = per;
    double mean_t3p = 0.0;
    for (std::size_t i = 0; i < t_used.size(); ++i)
        mean_t3p += t_used[i] * t_used[i] * t_used[i] * p_used[i];
    fit.c_len_measured = std::cbrt(mean_t3p / t_used.size());
    fit.window = window;
    fit.n_points = static_cast<int>(t_used.size());
    return fit;
}

OscillationFit oscillation_frequency(const SurvivalTrace &trace, const FitWindow &window,
                                     const AnalysisConfig &config)
{
    check_trace(trace);
    const auto idx = window_indices(trace, window, config.min_window_samples);
    const double length = trace.t[idx.back()] - trace.t[idx.front()];
    if (const auto per = oscillation_period(trace); per && length < 3.0 * *per)
    {
        std::ostringstream msg;
        msg << "oscillation window of " << length << " mm spans fewer than three periods of "
            << *per << " mm";
        throw ValidationError(msg.str());
    }

    std::vector<double> t, y;
    for (std::size_t i : idx)
    {
        if (!(trace.p[i] > 0.0))
            throw ValidationError("oscillation_frequency: p must be positive on the window");
        t.push_back(trace.t[i]);
        y.push_back(trace.t[i] * trace.t[i] * trace.t[i] * trace.p[i]);
    }
    const std::size_t n = t.size();

    // Cubic trend in a normalized abscissa, then the relative modulation.
    const double mid = 0.5 * (t.front() + t.back());
    const double half = 0.5 * length;
    Eigen::MatrixXd basis(n, 4);
    Eigen::VectorXd rhs(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        const double u = (t[i] - mid) / half;
        basis.row(i) << 1.0, u, u * u, u * u * u;
        rhs[i] = y[i];
    }
    const Eigen::VectorXd trend = basis * basis.colPivHouseholderQr().solve(rhs);
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        if (!(trend[i] > 0.0))
            throw NumericError("oscillation_frequency: cubic trend of t^3 p is not positive");
        r[i] = y[i] / trend[i] - 1.0;
    }
    const double mean_r = std::accumulate(r.begin(), r.end(), 0.0) / n;
    double rss0 = 0.0;
    for (double v : r)
        rss0 += (v - mean_r) * (v - mean_r);

    OscillationFit fit;
    fit.window = window;
    fit.n_points = static_cast<int>(n);
    fit.rms = std::sqrt(rss0 / n);
    if (!(rss0 > 0.0))
        return fit;

    std::vector<double> steps(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i)
        steps[i] = t[i + 1] - t[i];
    std::nth_element(steps.begin(), steps.begin() + steps.size() / 2, steps.end());
    const double dt = steps[steps.size() / 2];

    const double resolution = 2.0 * M_PI / length;
    const double omega_lo = 2.0 * resolution;
    const double omega_hi = M_PI / dt;
    const double d_omega = resolution / 16.0;
    double best_omega = 0.0;
    double best_power = 0.0;
    for (double omega = omega_lo; omega <= omega_hi; omega += d_omega)
    {
        const double power = fit_sinusoid(t, r, omega, rss0).power;
        if (power > best_power)
        {
            best_power = power;
            best_omega = omega;
        }
    }
    if (best_omega == 0.0)
        return fit;

    // Golden-section refinement around the grid maximum.
    double a = best_omega - d_omega;
    double b = best_omega + d_omega;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a);
    double d = a + g * (b - a);
    double fc = fit_sinusoid(t, r, c, rss0).power;
    double fd = fit_sinusoid(t, r, d, rss0).power;
    for (int iter = 0; iter < 60; ++iter)
    {
        if (fc > fd)
        {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = fit_sinusoid(t, r, c, rss0).power;
        }
        else
        {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = fit_sinusoid(t, r, d, rss0).power;
        }
    }
    const double omega = 0.5 * (a + b);
    const SinusoidFit peak = fit_sinusoid(t, r, omega, rss0);
    fit.omega_est = omega;
    fit.contrast = peak.amplitude;
    fit.rms = std::sqrt(peak.rss / n);
    fit.suppressed = fit.contrast < config.contrast_threshold;
    return fit;
}

FitWindow default_zeno_window(const ChainParams &params, const AnalysisConfig &config)
{
    if (!(params.kappa0() > 0.0))
        throw ValidationError("no decay channel: kappa0 = 0");
    return {0.0, config.zeno_fraction / params.kappa0(), Selection::automatic};
}

FitWindow default_tail_window(const SurvivalTrace &trace, const AnalysisConfig &config)
{
    check_trace(trace);
    const double end = trace.t.back();
    return {std::max(trace.t.front(), config.power_window_fraction * end), end,
            Selection::automatic};
}

LiteratureValues literature_values()
{
    LiteratureValues lit;
    lit.note = "Experimental fit values from the waveguide-array measurement (nominal row A for "
               "Z, fitted strong-coupling curve for C_inf). They are listed for comparison only "
               "and are not reproduced by the model; see the computed counterparts.";
    return lit;
}

namespace
{
double mean_over(const SurvivalTrace &trace, double lo, double hi)
{
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < trace.t.size(); ++i)
    {
        if (trace.t[i] >= lo && trace.t[i] <= hi)
        {
            sum += trace.p[i];
            ++count;
        }
    }
    return count > 0 ? sum / count : 0.0;
}

template <typename F>
void attempt(RegimeFit &report, const std::string &field, F &&body)
{
    try
    {
        body();
    }
    catch (const std::exception &e)
    {
        report.absent[field] = e.what();
    }
}
} // namespace

RegimeFit regime_report(const ChainParams &params, const SurvivalTrace &input,
                        const AnalysisConfig &config)
{
    check_trace(input);
    SurvivalTrace trace = input;
    if (!trace.params)
        trace.params = params;

    RegimeFit report;
    report.literature = literature_values();

    const double min_p = *std::min_element(trace.p.begin(), trace.p.end());
    report.no_decay = min_p > 1.0 - config.no_decay_threshold;
    if (report.no_decay)
    {
        for (const char *field : {"zeno", "exponential", "power", "oscillation"})
            report.absent[field] = "no decay";
    }
    else
    {
        attempt(report, "zeno", [&] {
            report.zeno = fit_zeno(trace, default_zeno_window(params, config), config);
            report.zeno_detected = true;
        });
        attempt(report, "exponential", [&] {
            report.exponential = fit_exponential(trace, select_exp_window(trace, config));
            report.exponential_detected = true;
        });
        const FitWindow tail = default_tail_window(trace, config);
        attempt(report, "power", [&] {
            report.power = fit_power_law(trace, tail);
            report.power_detected =
                report.power->rms < report.power->exponential_rms &&
                std::abs(report.power->exponent + 3.0) <= config.power_exponent_tolerance;
        });
        attempt(report, "oscillation", [&] {
            report.oscillation = oscillation_frequency(trace, tail, config);
            report.oscillation_detected = !report.oscillation->suppressed;
        });
    }

    attempt(report, "plateau", [&] {
        const double end = trace.t.back();
        const double start = trace.t.front();
        PlateauData plateau;
        plateau.early_mean = mean_over(trace, start + 0.5 * (end - start), start + 0.75 * (end - start));
        plateau.late_mean = mean_over(trace, start + 0.75 * (end - start), end);
        plateau.level = mean_over(trace, start + 0.5 * (end - start), end);
        const double scale = std::max(plateau.early_mean, plateau.late_mean);
        plateau.flat = scale > 0.0 &&
                       std::abs(plateau.early_mean - plateau.late_mean) <= config.plateau_tolerance * scale;
        report.plateau = plateau;
        report.plateau_detected = plateau.flat && !report.no_decay;
    });
    attempt(report, "plateau_prediction", [&] {
        double sum = 0.0;
        for (const BoundState &b : bound_state_weights(params))
            sum += b.weight * b.weight;
        if (report.plateau)
            report.plateau->predicted = sum;
    });

    attempt(report, "zeno_time", [&] { report.zeno_time = analytic::zeno_time(params); });
    if (params.nearest_neighbour_only())
    {
        attempt(report, "pole", [&] { report.predictions.pole = analytic::pole(params); });
        attempt(report, "transition_times",
                [&] { report.predictions.times = analytic::transition_times(params); });
        attempt(report, "asymptote",
                [&] { report.predictions.asymptote = analytic::power_law_asymptote(params); });
        attempt(report, "gamma_fgr",
                [&] { report.predictions.gamma_fgr = analytic::decay_rate_fgr(params); });
    }
    else
    {
        const std::string reason = "analytic predictions require q = q0 = 0";
        for (const char *field : {"pole", "transition_times", "asymptote", "gamma_fgr"})
            report.absent[field] = reason;
    }
    return report;
}

} // namespace decaylab::analysis
