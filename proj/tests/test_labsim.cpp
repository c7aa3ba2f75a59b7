#include "decaylab/errors.hpp"
#include "decaylab/evolve.hpp"
#include "decaylab/labsim.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

using namespace decaylab;
using namespace decaylab::labsim;

namespace
{
LabConfig noiseless(double loss, bool quantize = true)
{
    LabConfig lab;
    lab.loss_db_per_cm = loss;
    lab.speckle_rel_sigma = 0.0;
    lab.scatter_rel_sigma = 0.0;
    lab.quantize = quantize;
    return lab;
}

// Relative rounding error bound of the waveguide-0 signal at position k.
double quantization_step(const Reconstruction &recon, const ImageStack &stack, std::size_t k)
{
    double step = 0.0, sum = 0.0;
    for (int i = 0; i < stack.pixels_per_frame(); ++i)
    {
        if (stack.waveguide_of(i) != 0)
            continue;
        step += 0.5 / stack.exposures_ms[recon.exposure_used[k][i]];
        sum += recon.rate[k][i];
    }
    return step / sum;
}

ImageStack manual_stack(std::vector<double> exposures, std::vector<std::vector<std::uint16_t>> frames)
{
    ImageStack stack;
    stack.positions_mm = {0.0};
    stack.exposures_ms = std::move(exposures);
    stack.n_waveguides = 1;
    stack.pixels_per_waveguide = static_cast<int>(frames.front().size());
    stack.columns_per_window = 1;
    stack.bit_depth = 8;
    stack.frames = {std::move(frames)};
    return stack;
}
} // namespace

TEST_SUITE("labsim")
{
    TEST_CASE("config validation")
    {
        LabConfig lab;
        CHECK_NOTHROW(lab.validate());
        CHECK(lab.exposures_ms.size() == 7);
        CHECK(lab.exposures_ms.front() == doctest::Approx(1.0));
        CHECK(lab.exposures_ms.back() == doctest::Approx(63.0));

        lab.exposures_ms = {1.0, 4.0, 4.0};
        CHECK_THROWS_AS(lab.validate(), ValidationError);
        lab = {};
        lab.bit_depth = 0;
        CHECK_THROWS_AS(lab.validate(), ValidationError);
        lab = {};
        lab.window_mm = 0.0;
        CHECK_THROWS_AS(lab.validate(), ValidationError);
    }

    TEST_CASE("noiseless frames follow populations and exposure")
    {
        auto lab = noiseless(0.0, false);
        lab.length_mm = 20.0;
        const auto stack = synthesize_stack(preset("B-fit"), lab);
        const auto spec = diagonalize(build_hamiltonian(preset("B-fit"), lab.n_waveguides));
        const std::size_t k = 10; // t = 5 mm
        const double t = stack.positions_mm[k];
        for (int c = 0; c < lab.columns_per_window; ++c)
        {
            const double tc = t + lab.window_mm * ((c + 0.5) / lab.columns_per_window - 0.5);
            const auto pops = site_populations(spec, tc);
            for (int n : {0, 3, 9})
            {
                const int pixel = (c * lab.n_waveguides + n) * lab.pixels_per_waveguide;
                CHECK(stack.expected_rate[k][pixel] == doctest::Approx(stack.gain * pops[n]).epsilon(1e-12));
            }
        }
        for (std::size_t e = 0; e < lab.exposures_ms.size(); ++e)
        {
            for (int i = 0; i < stack.pixels_per_frame(); i += 37)
            {
                const double counts = stack.expected_rate[k][i] * lab.exposures_ms[e];
                CHECK(stack.frames[k][e][i] == std::min<double>(stack.ceiling(), std::round(counts)));
            }
        }
    }

    TEST_CASE("propagation loss scales the total power")
    {
        auto lab = noiseless(0.6, false);
        lab.length_mm = 10.0;
        const auto stack = synthesize_stack(preset("B-fit"), lab);
        const auto &first = stack.expected_rate.front();
        const auto &last = stack.expected_rate.back();
        const double ratio = std::accumulate(last.begin(), last.end(), 0.0) / std::accumulate(first.begin(), first.end(), 0.0);
        CHECK(stack.positions_mm.back() == 10.0);
        CHECK(ratio == doctest::Approx(std::pow(10.0, -0.06)).epsilon(1e-12));
        CHECK(ratio == doctest::Approx(0.871).epsilon(1e-3));
    }

    TEST_CASE("exposure ratio")
    {
        const auto stack = synthesize_stack(preset("A"), LabConfig{});
        int compared = 0;
        for (std::size_t k = 0; k < stack.frames.size(); k += 9)
        {
            const auto &shortest = stack.frames[k].front();
            const auto &longest = stack.frames[k].back();
            for (std::size_t i = 0; i < shortest.size(); ++i)
            {
                if (longest[i] < stack.ceiling() && shortest[i] >= 2)
                {
                    CHECK(std::abs(longest[i] - 63.0 * shortest[i]) <= 0.5 + 63 * 0.5);
                    ++compared;
                }
            }
        }
        CHECK(compared > 0);
        for (std::size_t e = 0; e + 1 < stack.exposures_ms.size(); ++e)
            CHECK(stack.exposures_ms[e + 1] / stack.exposures_ms[e] == doctest::Approx(std::pow(63.0, 1.0 / 6)));
    }

    TEST_CASE("exposure fusion")
    {
        // Single unsaturated frame: rate = value / exposure.
        auto stack = manual_stack({4.0}, {{0, 17, 254, 100}});
        auto recon = hdr_reconstruct(stack);
        CHECK(recon.valid[0]);
        CHECK(recon.rate[0] == std::vector<double>{0.0, 17.0 / 4, 254.0 / 4, 25.0});

        // A pixel at the ceiling is excluded in favour of a shorter exposure.
        stack = manual_stack({1.0, 10.0}, {{20, 3}, {255, 30}});
        recon = hdr_reconstruct(stack);
        CHECK(recon.exposure_used[0] == std::vector<int>{0, 1});
        CHECK(recon.rate[0] == std::vector<double>{20.0, 3.0});

        // Saturated in every exposure: the position is invalid.
        stack = manual_stack({1.0, 10.0}, {{255, 3}, {255, 30}});
        CHECK_FALSE(hdr_reconstruct(stack).valid[0]);
        CHECK_THROWS_AS(hdr_reconstruct(stack, true), ValidationError);

        // Four decades inside one frame set, each within its quantization error.
        const std::vector<double> exposures = LabConfig::default_exposures();
        const double bright = 250.0, dim = 0.025;
        std::vector<std::vector<std::uint16_t>> frames;
        for (double e : exposures)
            frames.push_back({static_cast<std::uint16_t>(std::min(255.0, std::round(bright * e))),
                              static_cast<std::uint16_t>(std::min(255.0, std::round(dim * e)))});
        recon = hdr_reconstruct(manual_stack(exposures, frames));
        CHECK(bright / dim == doctest::Approx(1e4));
        CHECK(std::abs(recon.rate[0][0] - bright) <= 0.5 / exposures[recon.exposure_used[0][0]]);
        CHECK(std::abs(recon.rate[0][1] - dim) <= 0.5 / exposures[recon.exposure_used[0][1]]);
        CHECK(recon.rate[0][0] / recon.rate[0][1] > 5e3);
    }

    TEST_CASE("fusion is independent of the exposure used")
    {
        const auto stack = synthesize_stack(preset("C-fit"), LabConfig{});
        for (std::size_t k = 0; k < stack.frames.size(); k += 20)
        {
            for (int i = 0; i < stack.pixels_per_frame(); i += 13)
            {
                double lo = -1e300, hi = 1e300;
                for (std::size_t e = 0; e < stack.exposures_ms.size(); ++e)
                {
                    const int v = stack.frames[k][e][i];
                    if (v == stack.ceiling())
                        continue;
                    const double step = 0.5 / stack.exposures_ms[e];
                    lo = std::max(lo, v / stack.exposures_ms[e] - step);
                    hi = std::min(hi, v / stack.exposures_ms[e] + step);
                }
                CHECK(lo <= hi + 1e-12);
            }
        }
    }

    TEST_CASE("noiseless extraction recovers the window average")
    {
        for (double loss : {0.0, 0.6, 3.0})
        {
            const auto stack = synthesize_stack(preset("B-fit"), noiseless(loss, false));
            const auto profile = extract_survival(hdr_reconstruct(stack), stack);
            CHECK(profile.dropped_positions.empty());
            for (std::size_t i = 0; i < profile.t.size(); ++i)
                CHECK(profile.p[i] == doctest::Approx(stack.p_true[i]).epsilon(1e-12));
        }

        auto lab = noiseless(0.6, false);
        lab.columns_per_window = 1;
        auto stack = synthesize_stack(preset("A"), lab);
        auto profile = extract_survival(hdr_reconstruct(stack), stack);
        CHECK(profile.t.front() == 0.0);
        CHECK(profile.p.front() == doctest::Approx(1.0).epsilon(1e-14));

        stack = synthesize_stack(preset("A"), noiseless(0.6, true));
        profile = extract_survival(hdr_reconstruct(stack), stack);
        CHECK(profile.p.front() == doctest::Approx(1.0).epsilon(2e-3));
        CHECK(profile.sigma_p_over_p < 1.0 / stack.ceiling());
    }

    TEST_CASE("loss cancels in the ratio")
    {
        const auto reference = synthesize_stack(preset("B-fit"), noiseless(0.0, false));
        const auto lossy = synthesize_stack(preset("B-fit"), noiseless(0.6, false));
        const auto p0 = extract_survival(hdr_reconstruct(reference), reference);
        const auto p1 = extract_survival(hdr_reconstruct(lossy), lossy);
        REQUIRE(p0.t == p1.t);
        for (std::size_t i = 0; i < p0.t.size(); ++i)
            CHECK(std::abs(p0.p[i] - p1.p[i]) <= 1e-13 * p0.p[i]);

        // Quantized: agreement within two quantization steps.
        const auto q_ref = synthesize_stack(preset("B-fit"), noiseless(0.0, true));
        const auto q_loss = synthesize_stack(preset("B-fit"), noiseless(0.6, true));
        const auto r_ref = hdr_reconstruct(q_ref);
        const auto r_loss = hdr_reconstruct(q_loss);
        const auto e_ref = extract_survival(r_ref, q_ref);
        const auto e_loss = extract_survival(r_loss, q_loss);
        for (std::size_t i = 0; i < e_ref.t.size(); ++i)
        {
            const auto k = static_cast<std::size_t>(std::lround(e_ref.t[i] / 0.5));
            REQUIRE(e_loss.t[i] == e_ref.t[i]);
            const double steps = quantization_step(r_ref, q_ref, k) + quantization_step(r_loss, q_loss, k);
            CAPTURE(e_ref.t[i]);
            CHECK(std::abs(e_ref.p[i] - e_loss.p[i]) <= 2.0 * steps * e_ref.p[i]);
        }
    }

    TEST_CASE("uncertainty model")
    {
        const auto stack = synthesize_stack(preset("B-fit"), LabConfig{});
        const auto profile = extract_survival(hdr_reconstruct(stack), stack);
        for (double s : profile.sigma_t)
            CHECK(s == doctest::Approx(0.4 / std::sqrt(12.0)));
        CHECK(profile.sigma_t.front() == doctest::Approx(0.1155).epsilon(1e-3));
        for (std::size_t i = 0; i < profile.t.size(); ++i)
        {
            CHECK(profile.p[i] == doctest::Approx(profile.p1[i] / profile.p_tot[i]).epsilon(1e-15));
            CHECK(profile.sigma_p[i] == doctest::Approx(profile.sigma_p_over_p * profile.p[i]).epsilon(1e-15));
        }
        const auto u = estimate_uncertainty(profile);
        CHECK(u.sigma_p_over_p == profile.sigma_p_over_p);
        CHECK_FALSE(u.nondecaying_warning);

        HdrProfile tiny;
        tiny.t = {0.0, 1.0};
        tiny.p_tot = {1.0, 1.0};
        CHECK_THROWS_AS(estimate_uncertainty(tiny), ValidationError);
    }

    TEST_CASE("Monte Carlo over seeds")
    {
        const auto params = preset("B-fit");
        LabConfig lab;
        const int seeds = 500;
        double sigma_sum = 0.0;
        std::vector<double> bias;
        int pixels = lab.pixels_per_waveguide * lab.columns_per_window;
        for (int s = 1; s <= seeds; ++s)
        {
            lab.seed = s;
            const auto stack = synthesize_stack(params, lab);
            const auto profile = extract_survival(hdr_reconstruct(stack), stack);
            sigma_sum += profile.sigma_p_over_p;
            double rel = 0.0;
            int n = 0;
            for (std::size_t i = 0; i < profile.t.size(); ++i)
            {
                const auto k = static_cast<std::size_t>(std::lround(profile.t[i] / lab.step_mm));
                rel += profile.p[i] / stack.p_true[k] - 1.0;
                ++n;
            }
            bias.push_back(rel / n);
        }
        const double mean_bias = std::accumulate(bias.begin(), bias.end(), 0.0) / seeds;
        CHECK(std::abs(mean_bias) < 2.0 * lab.speckle_rel_sigma / std::sqrt(pixels));
        CHECK(sigma_sum / seeds == doctest::Approx(0.05).epsilon(0.2));
    }

    TEST_CASE("determinism and stack archive round trip")
    {
        LabConfig lab;
        lab.seed = 7;
        const auto a = synthesize_stack(preset("B-fit"), lab);
        const auto b = synthesize_stack(preset("B-fit"), lab);
        CHECK(a.frames == b.frames);
        lab.seed = 8;
        CHECK(synthesize_stack(preset("B-fit"), lab).frames != a.frames);

        std::stringstream buffer;
        write_stack(buffer, a);
        const std::string bytes = buffer.str();
        std::stringstream again;
        write_stack(again, b);
        CHECK(again.str() == bytes);

        std::istringstream in(bytes);
        const auto loaded = read_stack(in);
        CHECK(loaded.frames == a.frames);
        CHECK(loaded.positions_mm == a.positions_mm);
        CHECK(loaded.exposures_ms == a.exposures_ms);
        CHECK(loaded.gain == a.gain);
        const auto pa = extract_survival(hdr_reconstruct(a), a);
        const auto pl = extract_survival(hdr_reconstruct(loaded), loaded);
        CHECK(pa.p == pl.p);

        std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
        CHECK_THROWS_AS(read_stack(truncated), ValidationError);
        std::istringstream extra(bytes + "x");
        CHECK_THROWS_AS(read_stack(extra), ValidationError);
        std::istringstream garbage("NOT A STACK\n");
        CHECK_THROWS_AS(read_stack(garbage), ValidationError);
    }

    TEST_CASE("round trip against ground truth")
    {
        for (const auto &name : {"A", "B-fit", "C-fit"})
        {
            const auto stack = synthesize_stack(preset(name), LabConfig{});
            const auto recon = hdr_reconstruct(stack);
            const auto profile = extract_survival(recon, stack);
            int within = 0;
            for (std::size_t i = 0; i < profile.t.size(); ++i)
            {
                const auto k = static_cast<std::size_t>(std::lround(profile.t[i] / 0.5));
                within += std::abs(profile.p[i] - stack.p_true[k]) <= 2.0 * profile.sigma_p[i];
            }
            CAPTURE(name);
            CHECK(within >= 0.95 * profile.t.size());
            CHECK(dynamic_range(recon) > 1e4);
        }
    }
}
