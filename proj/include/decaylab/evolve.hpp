#ifndef DECAYLAB_EVOLVE_HPP
#define DECAYLAB_EVOLVE_HPP

#include "decaylab/model.hpp"

#include <Eigen/Dense>

#include <complex>
#include <optional>
#include <vector>

namespace decaylab
{
// Eigenpairs of a truncated Hamiltonian. weights[k] = |<0|E_k>|^2; the
// eigenvector columns share the ordering of the ascending eigenvalues.
struct SpectralDecomposition
{
    std::vector<double> eigenvalues;
    std::vector<double> weights;
    Eigen::MatrixXd vectors;
    int n_sites = 0;
    // max |M V - V Lambda| / max |M|
    double residual = 0.0;
};

SpectralDecomposition diagonalize(const Eigen::MatrixXd &matrix);

// <0| exp(-i t H) |0> = sum_k w_k exp(-i E_k t), summed in eigenvalue order.
std::complex<double> survival_amplitude(const SpectralDecomposition &spec, double t);

// |<n| exp(-i t H) |0>|^2 for every site n.
std::vector<double> site_populations(const SpectralDecomposition &spec, double t);
std::vector<double> site_populations(const ChainParams &params, double t, int n_sites);

enum class Spacing
{
    uniform,
    log_augmented, // uniform samples merged with log-spaced ones
};

struct TimeGrid
{
    double t_min = 0.0;
    double t_max = 90.0;
    int n_samples = 901;
    Spacing spacing = Spacing::uniform;

    static TimeGrid uniform_step(double t_max, double step, double t_min = 0.0);
    // Strictly increasing sample points; throws ValidationError on a bad grid.
    std::vector<double> points() const;
};

struct SurvivalTrace
{
    std::vector<double> t;
    std::vector<double> p;
    std::vector<std::complex<double>> a; // empty when only p is known
    std::optional<ChainParams> params;
    int n_sites = 0;
    bool guard_ok = false;
};

struct TruncationOptions
{
    double guard_fraction = 0.1;
    int start_sites = 0; // 0: light-cone estimate
    int hard_cap = 4096;
    bool waive_guard = false;
};

// Smallest N on the doubling schedule such that the population in the last
// guard_fraction of sites stays below tol for all t <= t_max, and doubling N
// moves p(t_max) by less than tol.
int choose_truncation(const ChainParams &params, double t_max, double tol,
                      const TruncationOptions &options = {});

// Largest population found in the guard region over [0, t_max].
double guard_population(const SpectralDecomposition &spec, double t_max, double guard_fraction);

SurvivalTrace survival_trace(const ChainParams &params, const TimeGrid &grid, double tol = 1e-10);
// Fixed truncation, e.g. the physical 40-waveguide array. guard_ok reports
// whether the 10% guard region stayed below 1e-10 over the grid.
SurvivalTrace survival_trace_fixed(const ChainParams &params, const TimeGrid &grid, int n_sites);

struct BoundState
{
    double energy = 0.0;
    double weight = 0.0;
};

// Discrete eigenvalues outside the continuum band with their defect-site
// weights, extrapolated over N = 64, 128, ... until energies and weights
// settle to 1e-8. Empty when the defect fully decays.
std::vector<BoundState> bound_state_weights(const ChainParams &params);

} // namespace decaylab

#endif // DECAYLAB_EVOLVE_HPP
