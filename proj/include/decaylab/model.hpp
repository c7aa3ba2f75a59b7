#ifndef DECAYLAB_MODEL_HPP
#define DECAYLAB_MODEL_HPP

#include <Eigen/Dense>

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace decaylab
{
// Couplings of a defect site attached to the end of a semi-infinite
// tight-binding chain. All values in mm^-1; the propagation coordinate plays
// the role of time.
//
// Construct through ChainParams::make (or validate_params / preset), which
// enforces kappa > 0, kappa0 >= 0 and finiteness. Derived ratios are computed
// on access so they can never drift from the stored couplings.
class ChainParams
{
public:
    static ChainParams make(double kappa0, double kappa, double eps, double q, double q0);

    double kappa0() const { return kappa0_; }
    double kappa() const { return kappa_; }
    double eps() const { return eps_; }
    double q() const { return q_; }
    double q0() const { return q0_; }

    double lambda() const { return kappa0_ / kappa_; }
    double Q() const { return q_ / kappa_; }

    // |q/kappa| < 1/4: band edges sit at k = 0, pi and the edge-driven
    // long-time law keeps its nearest-neighbour form.
    bool edge_formula_valid() const;

    // q == q0 == 0, the case covered by the closed-form resolvent.
    bool nearest_neighbour_only() const { return q_ == 0.0 && q0_ == 0.0; }

    // Same couplings with q = q0 = 0.
    ChainParams without_next_nearest() const;

    bool operator==(const ChainParams &) const = default;

private:
    ChainParams(double kappa0, double kappa, double eps, double q, double q0)
        : kappa0_(kappa0), kappa_(kappa), eps_(eps), q_(q), q0_(q0)
    {
    }

    double kappa0_;
    double kappa_;
    double eps_;
    double q_;
    double q0_;
};

struct BandInfo
{
    double e_min = 0.0;
    double e_max = 0.0;
    double kappa = 0.0;
    double q = 0.0;

    double width() const { return e_max - e_min; }
    // Chain dispersion 2 kappa cos k + 2 q cos 2k, k in (0, pi).
    double dispersion(double k) const;
};

// Keys: kappa0, kappa, eps, q, q0 (all required).
ChainParams validate_params(const std::map<std::string, double> &raw);

// "A", "B", "C" (nominal array rows, q0 = q) and "B-fit", "C-fit" (fitted
// curves of the strong-coupling arrays). Throws ValidationError otherwise.
ChainParams preset(std::string_view name);
std::vector<std::string> preset_names();

BandInfo band_edges(const ChainParams &params);

// 1 - |eps|/(2 kappa) - lambda^2. Positive means the nearest-neighbour model
// predicts complete decay (no bound state). Only the sign is meaningful, and
// only as a q = 0 heuristic.
double instability_margin(const ChainParams &params);

// Dense symmetric matrix of the chain truncated to n_sites (site 0 is the
// defect). Entries are assigned pairwise so the result is bitwise symmetric.
Eigen::MatrixXd build_hamiltonian(const ChainParams &params, int n_sites);

} // namespace decaylab

#endif // DECAYLAB_MODEL_HPP
