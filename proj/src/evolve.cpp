#include "decaylab/evolve.hpp"

#include "decaylab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace decaylab
{
namespace
{
constexpr int kMinStartSites = 64;

// Light-cone starting size: sites reachable at the maximal group velocity.
int light_cone_sites(const ChainParams &params, double t_max)
{
    const double reach = 2.0 * (params.kappa() + 2.0 * std::abs(params.q())) * t_max;
    return std::max(kMinStartSites, static_cast<int>(std::ceil(reach)));
}

// Time step for scanning the guard region: a fraction of the fastest phase
// rotation in the spectrum.
double guard_scan_step(const SpectralDecomposition &spec, double t_max)
{
    const double spread = spec.eigenvalues.back() - spec.eigenvalues.front();
    double step = spread > 0.0 ? 1.0 / spread : t_max;
    return std::min(step, t_max / 32.0);
}

double survival_probability(const SpectralDecomposition &spec, double t)
{
    return std::norm(survival_amplitude(spec, t));
}

} // namespace

SpectralDecomposition diagonalize(const Eigen::MatrixXd &matrix)
{
    if (matrix.rows() != matrix.cols() || matrix.rows() == 0)
        throw ValidationError("diagonalize: matrix must be square and non-empty");
    const Eigen::Index n = matrix.rows();
    for (Eigen::Index i = 0; i < n; ++i)
    {
        for (Eigen::Index j = i + 1; j < n; ++j)
        {
            if (matrix(i, j) != matrix(j, i))
                throw ValidationError("diagonalize: matrix is not symmetric");
        }
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(matrix, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success)
        throw NumericError("diagonalize: eigensolver did not converge");

    SpectralDecomposition spec;
    spec.n_sites = static_cast<int>(n);
    spec.vectors = solver.eigenvectors();
    const Eigen::VectorXd &values = solver.eigenvalues();
    spec.eigenvalues.assign(values.data(), values.data() + n);
    spec.weights.resize(n);
    for (Eigen::Index k = 0; k < n; ++k)
        spec.weights[k] = spec.vectors(0, k) * spec.vectors(0, k);

    const double scale = matrix.cwiseAbs().maxCoeff();
    const Eigen::MatrixXd defect = matrix * spec.vectors - spec.vectors * values.asDiagonal();
    spec.residual = defect.cwiseAbs().maxCoeff() / (scale > 0.0 ? scale : 1.0);
    if (spec.residual > 1e-10)
        throw NumericError("diagonalize: reconstruction residual " + std::to_string(spec.residual));
    return spec;
}

std::complex<double> survival_amplitude(const SpectralDecomposition &spec, double t)
{
    if (t == 0.0)
        return 1.0;
    double re = 0.0;
    double im = 0.0;
    for (std::size_t k = 0; k < spec.eigenvalues.size(); ++k)
    {
        const double phase = spec.eigenvalues[k] * t;
        re += spec.weights[k] * std::cos(phase);
        im -= spec.weights[k] * std::sin(phase);
    }
    return {re, im};
}

std::vector<double> site_populations(const SpectralDecomposition &spec, double t)
{
    const Eigen::Index n = spec.n_sites;
    if (t == 0.0)
    {
        std::vector<double> initial(n, 0.0);
        initial[0] = 1.0;
        return initial;
    }
    Eigen::VectorXd c_re(n), c_im(n);
    for (Eigen::Index k = 0; k < n; ++k)
    {
        const double phase = spec.eigenvalues[k] * t;
        c_re[k] = spec.vectors(0, k) * std::cos(phase);
        c_im[k] = -spec.vectors(0, k) * std::sin(phase);
    }
    const Eigen::VectorXd re = spec.vectors * c_re;
    const Eigen::VectorXd im = spec.vectors * c_im;
    std::vector<double> pops(n);
    for (Eigen::Index i = 0; i < n; ++i)
        pops[i] = re[i] * re[i] + im[i] * im[i];
    return pops;
}

std::vector<double> site_populations(const ChainParams &params, double t, int n_sites)
{
    return site_populations(diagonalize(build_hamiltonian(params, n_sites)), t);
}

TimeGrid TimeGrid::uniform_step(double t_max, double step, double t_min)
{
    if (!(step > 0.0) || !(t_max > t_min))
        throw ValidationError("time grid needs step > 0 and t_max > t_min");
    TimeGrid grid;
    grid.t_min = t_min;
    grid.t_max = t_max;
    grid.n_samples = static_cast<int>(std::llround((t_max - t_min) / step)) + 1;
    grid.spacing = Spacing::uniform;
    return grid;
}

std::vector<double> TimeGrid::points() const
{
    if (!(t_min >= 0.0) || !(t_max > t_min) || n_samples < 2)
        throw ValidationError("time grid needs 0 <= t_min < t_max and n_samples >= 2");

    std::vector<double> pts(n_samples);
    const double h = (t_max - t_min) / (n_samples - 1);
    for (int i = 0; i < n_samples; ++i)
        pts[i] = t_min + h * i;
    pts.back() = t_max;

    if (spacing == Spacing::log_augmented)
    {
        const double lo = t_min > 0.0 ? t_min : h / 16.0;
        const double ratio = std::log(t_max / lo) / (n_samples - 1);
        for (int i = 0; i < n_samples; ++i)
            pts.push_back(lo * std::exp(ratio * i));
        std::sort(pts.begin(), pts.end());
        // Merge points closer than a small fraction of the uniform spacing.
        std::vector<double> merged;
        for (double v : pts)
        {
            if (merged.empty() || v - merged.back() > 1e-9 * h)
                merged.push_back(v);
        }
        merged.back() = t_max;
        pts = std::move(merged);
    }
    return pts;
}

double guard_population(const SpectralDecomposition &spec, double t_max, double guard_fraction)
{
    const int n = spec.n_sites;
    const int guard = std::max(1, static_cast<int>(std::ceil(guard_fraction * n)));
    const Eigen::MatrixXd tail = spec.vectors.bottomRows(guard);
    Eigen::VectorXd c_re(n), c_im(n);

    const double step = guard_scan_step(spec, t_max);
    const int steps = static_cast<int>(std::ceil(t_max / step));
    double worst = 0.0;
    for (int s = 1; s <= steps; ++s)
    {
        const double t = std::min(t_max, s * step);
        for (int k = 0; k < n; ++k)
        {
            const double phase = spec.eigenvalues[k] * t;
            c_re[k] = spec.vectors(0, k) * std::cos(phase);
            c_im[k] = -spec.vectors(0, k) * std::sin(phase);
        }
        const double pop = (tail * c_re).squaredNorm() + (tail * c_im).squaredNorm();
        worst = std::max(worst, pop);
    }
    return worst;
}

int choose_truncation(const ChainParams &params, double t_max, double tol,
                      const TruncationOptions &options)
{
    if (!(t_max > 0.0))
        throw ValidationError("choose_truncation: t_max must be positive");
    if (!(tol > 0.0 && tol < 1.0))
        throw ValidationError("choose_truncation: tol must lie in (0, 1)");

    const bool next_nearest = params.q() != 0.0 || params.q0() != 0.0;
    const int min_sites = next_nearest ? 3 : 2;
    int n = options.start_sites > 0 ? options.start_sites : light_cone_sites(params, t_max);
    n = std::max(n, min_sites);
    if (options.waive_guard)
        return n;

    std::optional<SpectralDecomposition> current;
    double last_guard = 0.0;
    while (n <= options.hard_cap)
    {
        if (!current)
            current = diagonalize(build_hamiltonian(params, n));
        last_guard = guard_population(*current, t_max, options.guard_fraction);

        SpectralDecomposition doubled = diagonalize(build_hamiltonian(params, 2 * n));
        if (last_guard < tol)
        {
            const double change = std::abs(survival_probability(*current, t_max) -
                                           survival_probability(doubled, t_max));
            if (change < tol)
                return n;
        }
        current = std::move(doubled);
        n *= 2;
    }
    throw NumericError("truncation not converged: guard population " + std::to_string(last_guard) +
                       " at N = " + std::to_string(n / 2) + " (cap " +
                       std::to_string(options.hard_cap) + ")");
}

namespace
{
SurvivalTrace evaluate_trace(const ChainParams &params, const std::vector<double> &t,
                             const SpectralDecomposition &spec)
{
    SurvivalTrace trace;
    trace.t = t;
    trace.params = params;
    trace.n_sites = spec.n_sites;
    trace.a.reserve(t.size());
    trace.p.reserve(t.size());
    for (double ti : t)
    {
        const std::complex<double> a = survival_amplitude(spec, ti);
        trace.a.push_back(a);
        trace.p.push_back(std::norm(a));
    }
    return trace;
}
} // namespace

SurvivalTrace survival_trace(const ChainParams &params, const TimeGrid &grid, double tol)
{
    const std::vector<double> t = grid.points();
    const int n = choose_truncation(params, t.back(), tol);
    SurvivalTrace trace = evaluate_trace(params, t, diagonalize(build_hamiltonian(params, n)));
    trace.guard_ok = true;
    return trace;
}

SurvivalTrace survival_trace_fixed(const ChainParams &params, const TimeGrid &grid, int n_sites)
{
    const std::vector<double> t = grid.points();
    const SpectralDecomposition spec = diagonalize(build_hamiltonian(params, n_sites));
    SurvivalTrace trace = evaluate_trace(params, t, spec);
    trace.guard_ok = guard_population(spec, t.back(), 0.1) < 1e-10;
    return trace;
}

std::vector<BoundState> bound_state_weights(const ChainParams &params)
{
    if (params.kappa0() == 0.0 && params.q0() == 0.0)
        return {{params.eps(), 1.0}};

    const BandInfo band = band_edges(params);
    constexpr double kWeightFloor = 1e-10;
    constexpr double kSettle = 1e-8;
    constexpr int kMaxSites = 4096;

    auto outside = [&](int n) {
        const SpectralDecomposition spec = diagonalize(build_hamiltonian(params, n));
        std::vector<BoundState> found;
        for (std::size_t k = 0; k < spec.eigenvalues.size(); ++k)
        {
            const double e = spec.eigenvalues[k];
            if ((e < band.e_min || e > band.e_max) && spec.weights[k] >= kWeightFloor)
                found.push_back({e, spec.weights[k]});
        }
        return found;
    };

    std::vector<BoundState> previous = outside(kMinStartSites);
    std::string diagnostics;
    for (int n = 2 * kMinStartSites; n <= kMaxSites; n *= 2)
    {
        std::vector<BoundState> next = outside(n);
        bool settled = next.size() == previous.size();
        for (std::size_t i = 0; settled && i < next.size(); ++i)
        {
            settled = std::abs(next[i].energy - previous[i].energy) <= kSettle * params.kappa() &&
                      std::abs(next[i].weight - previous[i].weight) <= kSettle;
        }
        if (settled)
            return next;
        diagnostics = "N = " + std::to_string(n) + ": " + std::to_string(next.size()) +
                      " out-of-band states vs " + std::to_string(previous.size()) + " at N/2";
        previous = std::move(next);
    }
    throw NumericError("bound_state_weights did not settle (" + diagnostics + ")");
}

} // namespace decaylab
