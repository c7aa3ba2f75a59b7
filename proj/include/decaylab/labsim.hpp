#ifndef DECAYLAB_LABSIM_HPP
#define DECAYLAB_LABSIM_HPP

#include "decaylab/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

// Emulated scattered-light measurement: image stacks with propagation loss,
// static speckle and multi-exposure quantization, HDR fusion, and extraction
// of the survival probability P_1 / P_tot.
namespace decaylab::labsim
{
struct LabConfig
{
    double loss_db_per_cm = 0.6;
    double speckle_rel_sigma = 0.05; // per pixel, static across exposures
    double scatter_rel_sigma = 0.05; // per scan position, common to all waveguides
    std::vector<double> exposures_ms = default_exposures();
    int bit_depth = 8;
    double window_mm = 0.4;
    double step_mm = 0.5;
    double length_mm = 90.0;
    std::uint64_t seed = 1;
    int pixels_per_waveguide = 20;
    int columns_per_window = 4; // samples along t inside one integration window
    int n_waveguides = 40;
    double saturation_fill = 0.9; // brightest t = 0 pixel of the shortest exposure
    bool quantize = true;

    // 1 ms to 63 ms, seven geometric steps.
    static std::vector<double> default_exposures();
    // Throws ValidationError when an invariant is broken.
    void validate() const;
};

struct ImageStack
{
    std::vector<double> positions_mm;
    std::vector<double> exposures_ms;
    int n_waveguides = 0;
    int pixels_per_waveguide = 0;
    int columns_per_window = 0;
    int bit_depth = 8;
    double window_mm = 0.0;
    double loss_db_per_cm = 0.0;
    std::uint64_t seed = 0;
    double gain = 0.0; // counts per ms at unit population
    bool quantized = true; // false: ideal sensor, fusion reads expected_rate directly

    // frames[position][exposure][pixel], pixel = (column * n_waveguides + waveguide)
    // * pixels_per_waveguide + k
    std::vector<std::vector<std::vector<std::uint16_t>>> frames;

    // Ground truth, not part of the exported file.
    std::vector<double> p_true;   // window average of p over the column samples
    std::vector<double> p_center; // p at the scan position
    std::vector<std::vector<double>> expected_rate; // [position][pixel], counts per ms before quantization

    int ceiling() const { return (1 << bit_depth) - 1; }
    int pixels_per_frame() const { return n_waveguides * pixels_per_waveguide * columns_per_window; }
    int waveguide_of(int pixel) const { return (pixel / pixels_per_waveguide) % n_waveguides; }
};

ImageStack synthesize_stack(const ChainParams &params, const LabConfig &lab);

struct Reconstruction
{
    std::vector<double> positions_mm;
    std::vector<std::vector<double>> rate; // [position][pixel], counts per ms
    std::vector<std::vector<int>> exposure_used; // index into exposures_ms, -1 when saturated
    std::vector<bool> valid; // false when some pixel saturates even in the shortest exposure
};

// Per pixel, the longest exposure below the ceiling divided by its duration.
// strict: throw ValidationError listing the positions with saturated pixels.
Reconstruction hdr_reconstruct(const ImageStack &stack, bool strict = false);

struct HdrProfile
{
    std::vector<double> t;
    std::vector<double> p1;
    std::vector<double> p_tot;
    std::vector<double> p;
    std::vector<double> sigma_p;
    std::vector<double> sigma_t;
    std::vector<double> dropped_positions; // invalid (saturated) windows
    double window_mm = 0.0;
    double loss_db_per_cm = 0.0;
    double sigma_p_over_p = 0.0;
    bool nondecaying_warning = false;
};

struct Uncertainty
{
    double sigma_p_over_p = 0.0;
    double sigma_t = 0.0;
    bool nondecaying_warning = false; // P_tot does not fall although loss is configured
};

// Exponential fit of P_tot; relative residual RMS and w / sqrt(12).
Uncertainty estimate_uncertainty(const HdrProfile &profile);

HdrProfile extract_survival(const Reconstruction &recon, const ImageStack &stack);

// Largest / smallest non-zero reconstructed pixel rate over the whole stack.
double dynamic_range(const Reconstruction &recon);

// "DECAYSTACK 1" text header of key=value lines closed by "END", followed by
// the frames as little-endian uint16 in [position][exposure][pixel] order.
void write_stack(std::ostream &out, const ImageStack &stack);
ImageStack read_stack(std::istream &in);

} // namespace decaylab::labsim

#endif // DECAYLAB_LABSIM_HPP
