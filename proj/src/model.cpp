#include "decaylab/model.hpp"

#include "decaylab/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace decaylab
{
namespace
{
struct PresetRow
{
    std::string_view name;
    double kappa0, kappa, eps, q;
};

// Nominal array parameters and the fitted strong-coupling curves, mm^-1.
constexpr std::array<PresetRow, 5> kPresets{{
    {"A", 0.045, 0.119, -0.08, 0.005},
    {"B", 0.118, 0.132, 0.10, 0.01},
    {"C", 0.183, 0.158, 0.0, 0.01},
    {"B-fit", 0.119, 0.132, 0.12, 0.01},
    {"C-fit", 0.205, 0.160, 0.0, 0.01},
}};
} // namespace

ChainParams ChainParams::make(double kappa0, double kappa, double eps, double q, double q0)
{
    for (double v : {kappa0, kappa, eps, q, q0})
    {
        if (!std::isfinite(v))
            throw ValidationError("coupling values must be finite");
    }
    if (!(kappa > 0.0))
        throw ValidationError("degenerate chain: kappa must be positive");
    if (kappa0 < 0.0)
        throw ValidationError("kappa0 must be non-negative");
    return ChainParams(kappa0, kappa, eps, q, q0);
}

bool ChainParams::edge_formula_valid() const
{
    return std::abs(Q()) < 0.25;
}

ChainParams ChainParams::without_next_nearest() const
{
    return ChainParams(kappa0_, kappa_, eps_, 0.0, 0.0);
}

double BandInfo::dispersion(double k) const
{
    return 2.0 * kappa * std::cos(k) + 2.0 * q * std::cos(2.0 * k);
}

ChainParams validate_params(const std::map<std::string, double> &raw)
{
    auto get = [&](const char *key) {
        auto it = raw.find(key);
        if (it == raw.end())
            throw ValidationError(std::string("missing parameter '") + key + "'");
        return it->second;
    };
    return ChainParams::make(get("kappa0"), get("kappa"), get("eps"), get("q"), get("q0"));
}

ChainParams preset(std::string_view name)
{
    for (const auto &row : kPresets)
    {
        if (row.name == name)
            return ChainParams::make(row.kappa0, row.kappa, row.eps, row.q, row.q);
    }
    throw ValidationError("unknown preset '" + std::string(name) + "'");
}

std::vector<std::string> preset_names()
{
    std::vector<std::string> names;
    for (const auto &row : kPresets)
        names.emplace_back(row.name);
    return names;
}

BandInfo band_edges(const ChainParams &params)
{
    BandInfo band;
    band.kappa = params.kappa();
    band.q = params.q();

    // Candidates: k -> 0, k -> pi, and the interior stationary point
    // cos k = -kappa / (4 q) when it exists.
    std::vector<double> candidates{band.dispersion(0.0), band.dispersion(M_PI)};
    if (params.q() != 0.0)
    {
        const double c = -params.kappa() / (4.0 * params.q());
        if (std::abs(c) < 1.0)
            candidates.push_back(2.0 * params.kappa() * c + 2.0 * params.q() * (2.0 * c * c - 1.0));
    }
    const auto [lo, hi] = std::minmax_element(candidates.begin(), candidates.end());
    band.e_min = *lo;
    band.e_max = *hi;
    return band;
}

double instability_margin(const ChainParams &params)
{
    const double lambda = params.lambda();
    return 1.0 - std::abs(params.eps()) / (2.0 * params.kappa()) - lambda * lambda;
}

Eigen::MatrixXd build_hamiltonian(const ChainParams &params, int n_sites)
{
    const bool next_nearest = params.q() != 0.0 || params.q0() != 0.0;
    const int min_sites = next_nearest ? 3 : 2;
    if (n_sites < min_sites)
        throw ValidationError("n_sites too small: need at least " + std::to_string(min_sites));

    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n_sites, n_sites);
    auto couple = [&h](int i, int j, double v) {
        h(i, j) = v;
        h(j, i) = v;
    };
    h(0, 0) = params.eps();
    couple(0, 1, params.kappa0());
    if (n_sites > 2)
        couple(0, 2, params.q0());
    for (int n = 1; n + 1 < n_sites; ++n)
        couple(n, n + 1, params.kappa());
    for (int n = 1; n + 2 < n_sites; ++n)
        couple(n, n + 2, params.q());
    return h;
}

} // namespace decaylab
