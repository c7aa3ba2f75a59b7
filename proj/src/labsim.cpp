#include "decaylab/labsim.hpp"

#include "decaylab/errors.hpp"
#include "decaylab/evolve.hpp"
#include "decaylab/numfmt.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

namespace decaylab::labsim
{
namespace
{
std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream per scan position.
std::mt19937_64 position_stream(std::uint64_t seed, std::size_t position)
{
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(position + 1)));
}

double noisy_factor(std::mt19937_64 &rng, double sigma)
{
    if (sigma == 0.0)
        return 1.0;
    std::normal_distribution<double> normal(0.0, sigma);
    return std::max(0.0, 1.0 + normal(rng));
}

std::string join(const std::vector<double> &values)
{
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i)
    {
        if (i)
            out += ',';
        out += format_double(values[i]);
    }
    return out;
}

std::vector<double> split_numbers(const std::string &text, const std::string &what)
{
    std::vector<double> values;
    std::size_t start = 0;
    while (start <= text.size())
    {
        const std::size_t comma = std::min(text.find(',', start), text.size());
        values.push_back(parse_double(std::string_view(text).substr(start, comma - start), what));
        start = comma + 1;
    }
    return values;
}
} // namespace

std::vector<double> LabConfig::default_exposures()
{
    std::vector<double> e(7);
    for (int i = 0; i < 7; ++i)
        e[i] = std::pow(63.0, i / 6.0);
    e.back() = 63.0;
    return e;
}

void LabConfig::validate() const
{
    auto fail = [](const std::string &msg) { throw ValidationError("lab config: " + msg); };
    if (exposures_ms.empty())
        fail("exposures_ms must not be empty");
    for (std::size_t i = 0; i < exposures_ms.size(); ++i)
    {
        if (!(exposures_ms[i] > 0.0))
            fail("exposures must be positive");
        if (i > 0 && !(exposures_ms[i] > exposures_ms[i - 1]))
            fail("exposures must be strictly increasing");
    }
    if (bit_depth < 1 || bit_depth > 16)
        fail("bit_depth must lie in [1, 16]");
    if (!(window_mm > 0.0))
        fail("window_mm must be positive");
    if (!(step_mm > 0.0))
        fail("step_mm must be positive");
    if (!(length_mm >= 0.0))
        fail("length_mm must be non-negative");
    if (!(loss_db_per_cm >= 0.0) || !std::isfinite(loss_db_per_cm))
        fail("loss_db_per_cm must be finite and non-negative");
    if (!(speckle_rel_sigma >= 0.0) || !(scatter_rel_sigma >= 0.0))
        fail("noise levels must be non-negative");
    if (pixels_per_waveguide < 1 || columns_per_window < 1)
        fail("pixels_per_waveguide and columns_per_window must be positive");
    if (n_waveguides < 3)
        fail("n_waveguides must be at least 3");
    if (!(saturation_fill > 0.0 && saturation_fill <= 1.0))
        fail("saturation_fill must lie in (0, 1]");
}

ImageStack synthesize_stack(const ChainParams &params, const LabConfig &lab)
{
    lab.validate();
    ImageStack stack;
    stack.exposures_ms = lab.exposures_ms;
    stack.n_waveguides = lab.n_waveguides;
    stack.pixels_per_waveguide = lab.pixels_per_waveguide;
    stack.columns_per_window = lab.columns_per_window;
    stack.bit_depth = lab.bit_depth;
    stack.window_mm = lab.window_mm;
    stack.loss_db_per_cm = lab.loss_db_per_cm;
    stack.seed = lab.seed;
    stack.quantized = lab.quantize;

    const auto n_positions = static_cast<std::size_t>(std::floor(lab.length_mm / lab.step_mm + 1e-9)) + 1;
    for (std::size_t k = 0; k < n_positions; ++k)
        stack.positions_mm.push_back(k * lab.step_mm);

    const SpectralDecomposition spec = diagonalize(build_hamiltonian(params, lab.n_waveguides));
    const int ppw = lab.pixels_per_waveguide;
    const int columns = lab.columns_per_window;
    const int n_wg = lab.n_waveguides;
    const int n_pixels = stack.pixels_per_frame();

    stack.expected_rate.assign(n_positions, std::vector<double>(n_pixels));
    stack.p_true.resize(n_positions);
    stack.p_center.resize(n_positions);
    for (std::size_t k = 0; k < n_positions; ++k)
    {
        const double t = stack.positions_mm[k];
        // Loss is evaluated at the scan position: the whole window shares it.
        const double loss = std::pow(10.0, -lab.loss_db_per_cm * t / 100.0);
        std::mt19937_64 rng = position_stream(lab.seed, k);
        const double scatter = noisy_factor(rng, lab.scatter_rel_sigma);

        double first = 0.0, total = 0.0;
        for (int c = 0; c < columns; ++c)
        {
            const double tc = std::max(0.0, t + lab.window_mm * ((c + 0.5) / columns - 0.5));
            const std::vector<double> pops = site_populations(spec, tc);
            for (int n = 0; n < n_wg; ++n)
            {
                total += pops[n];
                for (int j = 0; j < ppw; ++j)
                {
                    const double speckle = noisy_factor(rng, lab.speckle_rel_sigma);
                    stack.expected_rate[k][(c * n_wg + n) * ppw + j] = pops[n] * loss * scatter * speckle;
                }
            }
            first += pops[0];
        }
        stack.p_true[k] = first / total;
        const std::vector<double> centre = site_populations(spec, t);
        double centre_total = 0.0;
        for (double v : centre)
            centre_total += v;
        stack.p_center[k] = centre[0] / centre_total;
    }

    const double brightest =
        *std::max_element(stack.expected_rate[0].begin(), stack.expected_rate[0].end());
    if (!(brightest > 0.0))
        throw NumericError("labsim: no signal at t = 0");
    const int ceiling = stack.ceiling();
    stack.gain = lab.saturation_fill * ceiling / (brightest * lab.exposures_ms.front());

    stack.frames.assign(n_positions, std::vector<std::vector<std::uint16_t>>(
                                         lab.exposures_ms.size(), std::vector<std::uint16_t>(n_pixels)));
    for (std::size_t k = 0; k < n_positions; ++k)
    {
        for (double &rate : stack.expected_rate[k])
            rate *= stack.gain;
        for (std::size_t e = 0; e < lab.exposures_ms.size(); ++e)
        {
            auto &frame = stack.frames[k][e];
            for (int i = 0; i < n_pixels; ++i)
            {
                const double counts = stack.expected_rate[k][i] * lab.exposures_ms[e];
                frame[i] = static_cast<std::uint16_t>(std::min<double>(ceiling, std::round(counts)));
            }
        }
    }
    return stack;
}

Reconstruction hdr_reconstruct(const ImageStack &stack, bool strict)
{
    const std::size_t n_positions = stack.frames.size();
    const int n_pixels = stack.pixels_per_frame();
    const int ceiling = stack.ceiling();
    const int n_exposures = static_cast<int>(stack.exposures_ms.size());

    Reconstruction recon;
    recon.positions_mm = stack.positions_mm;
    recon.rate.assign(n_positions, std::vector<double>(n_pixels, 0.0));
    recon.exposure_used.assign(n_positions, std::vector<int>(n_pixels, -1));
    recon.valid.assign(n_positions, true);

    std::vector<double> saturated;
    for (std::size_t k = 0; k < n_positions; ++k)
    {
        if (!stack.quantized)
        {
            recon.rate[k] = stack.expected_rate.at(k);
            std::fill(recon.exposure_used[k].begin(), recon.exposure_used[k].end(), n_exposures - 1);
            continue;
        }
        for (int i = 0; i < n_pixels; ++i)
        {
            for (int e = n_exposures - 1; e >= 0; --e)
            {
                const int value = stack.frames[k][e][i];
                if (value < ceiling)
                {
                    recon.rate[k][i] = value / stack.exposures_ms[e];
                    recon.exposure_used[k][i] = e;
                    break;
                }
            }
            if (recon.exposure_used[k][i] < 0)
            {
                recon.rate[k][i] = std::nan("");
                recon.valid[k] = false;
            }
        }
        if (!recon.valid[k])
            saturated.push_back(stack.positions_mm[k]);
    }
    if (strict && !saturated.empty())
    {
        std::ostringstream msg;
        msg << "saturated in every exposure at t =";
        for (double t : saturated)
            msg << ' ' << t;
        msg << " mm";
        throw ValidationError(msg.str());
    }
    return recon;
}

Uncertainty estimate_uncertainty(const HdrProfile &profile)
{
    const std::size_t n = profile.t.size();
    if (n < 10 || profile.p_tot.size() != n)
        throw ValidationError("estimate_uncertainty: needs at least 10 positions");
    double mt = 0.0, my = 0.0;
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        if (!(profile.p_tot[i] > 0.0))
            throw ValidationError("estimate_uncertainty: P_tot must be positive");
        y[i] = std::log(profile.p_tot[i]);
        mt += profile.t[i];
        my += y[i];
    }
    mt /= n;
    my /= n;
    double stt = 0.0, sty = 0.0;
    for (std::size_t i = 0; i < n; ++i)
    {
        stt += (profile.t[i] - mt) * (profile.t[i] - mt);
        sty += (profile.t[i] - mt) * (y[i] - my);
    }
    const double slope = sty / stt;
    const double intercept = my - slope * mt;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i)
    {
        const double fitted = std::exp(intercept + slope * profile.t[i]);
        const double r = profile.p_tot[i] / fitted - 1.0;
        ss += r * r;
    }
    Uncertainty u;
    u.sigma_p_over_p = std::sqrt(ss / n);
    u.sigma_t = profile.window_mm / std::sqrt(12.0);
    u.nondecaying_warning = profile.loss_db_per_cm > 0.0 && slope >= 0.0;
    return u;
}

HdrProfile extract_survival(const Reconstruction &recon, const ImageStack &stack)
{
    HdrProfile profile;
    profile.window_mm = stack.window_mm;
    profile.loss_db_per_cm = stack.loss_db_per_cm;
    const int n_pixels = stack.pixels_per_frame();
    for (std::size_t k = 0; k < recon.positions_mm.size(); ++k)
    {
        if (!recon.valid[k])
        {
            profile.dropped_positions.push_back(recon.positions_mm[k]);
            continue;
        }
        double first = 0.0, total = 0.0;
        for (int i = 0; i < n_pixels; ++i)
        {
            total += recon.rate[k][i];
            if (stack.waveguide_of(i) == 0)
                first += recon.rate[k][i];
        }
        if (!(total > 0.0))
        {
            profile.dropped_positions.push_back(recon.positions_mm[k]);
            continue;
        }
        profile.t.push_back(recon.positions_mm[k]);
        profile.p1.push_back(first);
        profile.p_tot.push_back(total);
        profile.p.push_back(first / total);
    }
    if (profile.t.empty())
        throw ValidationError("extract_survival: every window is saturated or dark");

    const Uncertainty u = estimate_uncertainty(profile);
    profile.sigma_p_over_p = u.sigma_p_over_p;
    profile.nondecaying_warning = u.nondecaying_warning;
    for (double p : profile.p)
    {
        profile.sigma_p.push_back(p * u.sigma_p_over_p);
        profile.sigma_t.push_back(u.sigma_t);
    }
    return profile;
}

double dynamic_range(const Reconstruction &recon)
{
    double hi = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < recon.rate.size(); ++k)
    {
        if (!recon.valid[k])
            continue;
        for (double r : recon.rate[k])
        {
            if (r > 0.0)
            {
                hi = std::max(hi, r);
                lo = std::min(lo, r);
            }
        }
    }
    return hi > 0.0 ? hi / lo : 0.0;
}

void write_stack(std::ostream &out, const ImageStack &stack)
{
    out << "DECAYSTACK 1\n"
        << "n_positions=" << stack.frames.size() << '\n'
        << "n_exposures=" << stack.exposures_ms.size() << '\n'
        << "n_waveguides=" << stack.n_waveguides << '\n'
        << "pixels_per_waveguide=" << stack.pixels_per_waveguide << '\n'
        << "columns_per_window=" << stack.columns_per_window << '\n'
        << "bit_depth=" << stack.bit_depth << '\n'
        << "window_mm=" << format_double(stack.window_mm) << '\n'
        << "loss_db_per_cm=" << format_double(stack.loss_db_per_cm) << '\n'
        << "seed=" << stack.seed << '\n'
        << "gain=" << format_double(stack.gain) << '\n'
        << "exposures_ms=" << join(stack.exposures_ms) << '\n'
        << "positions_mm=" << join(stack.positions_mm) << '\n'
        << "END\n";
    std::vector<char> bytes;
    for (const auto &position : stack.frames)
    {
        for (const auto &frame : position)
        {
            bytes.resize(2 * frame.size());
            for (std::size_t i = 0; i < frame.size(); ++i)
            {
                bytes[2 * i] = static_cast<char>(frame[i] & 0xff);
                bytes[2 * i + 1] = static_cast<char>(frame[i] >> 8);
            }
            out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        }
    }
    if (!out)
        throw ValidationError("write_stack: output stream failed");
}

ImageStack read_stack(std::istream &in)
{
    std::string line;
    if (!std::getline(in, line) || line != "DECAYSTACK 1")
        throw ValidationError("read_stack: missing 'DECAYSTACK 1' header");
    std::map<std::string, std::string> header;
    bool closed = false;
    while (std::getline(in, line))
    {
        if (line == "END")
        {
            closed = true;
            break;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("read_stack: malformed header line '" + line + "'");
        header[line.substr(0, eq)] = line.substr(eq + 1);
    }
    if (!closed)
        throw ValidationError("read_stack: header not terminated by END");
    auto field = [&](const std::string &key) -> const std::string & {
        const auto it = header.find(key);
        if (it == header.end())
            throw ValidationError("read_stack: missing header key '" + key + "'");
        return it->second;
    };

    ImageStack stack;
    const auto n_positions = parse_integer(field("n_positions"), "n_positions");
    const auto n_exposures = parse_integer(field("n_exposures"), "n_exposures");
    stack.n_waveguides = static_cast<int>(parse_integer(field("n_waveguides"), "n_waveguides"));
    stack.pixels_per_waveguide =
        static_cast<int>(parse_integer(field("pixels_per_waveguide"), "pixels_per_waveguide"));
    stack.columns_per_window =
        static_cast<int>(parse_integer(field("columns_per_window"), "columns_per_window"));
    stack.bit_depth = static_cast<int>(parse_integer(field("bit_depth"), "bit_depth"));
    stack.window_mm = parse_double(field("window_mm"), "window_mm");
    stack.loss_db_per_cm = parse_double(field("loss_db_per_cm"), "loss_db_per_cm");
    stack.seed = static_cast<std::uint64_t>(std::stoull(field("seed")));
    stack.gain = parse_double(field("gain"), "gain");
    stack.exposures_ms = split_numbers(field("exposures_ms"), "exposures_ms");
    stack.positions_mm = split_numbers(field("positions_mm"), "positions_mm");
    if (n_positions < 0 || n_exposures < 1 || stack.n_waveguides < 1 ||
        stack.pixels_per_waveguide < 1 || stack.columns_per_window < 1 || stack.bit_depth < 1 ||
        stack.bit_depth > 16)
        throw ValidationError("read_stack: header dimensions out of range");
    if (static_cast<long long>(stack.exposures_ms.size()) != n_exposures ||
        static_cast<long long>(stack.positions_mm.size()) != n_positions)
        throw ValidationError("read_stack: header lists disagree with the declared counts");

    const int n_pixels = stack.pixels_per_frame();
    std::vector<char> bytes(2 * static_cast<std::size_t>(n_pixels));
    stack.frames.assign(n_positions, std::vector<std::vector<std::uint16_t>>(
                                         n_exposures, std::vector<std::uint16_t>(n_pixels)));
    for (auto &position : stack.frames)
    {
        for (auto &frame : position)
        {
            if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size())))
                throw ValidationError("read_stack: payload truncated");
            for (int i = 0; i < n_pixels; ++i)
            {
                frame[i] = static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[2 * i]) |
                                                      (static_cast<unsigned char>(bytes[2 * i + 1]) << 8));
                if (frame[i] > stack.ceiling())
                    throw ValidationError("read_stack: pixel value above the saturation ceiling");
            }
        }
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw ValidationError("read_stack: trailing bytes after the payload");
    return stack;
}

} // namespace decaylab::labsim
