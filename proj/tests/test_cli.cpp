#include "decaylab/cli.hpp"
#include "decaylab/errors.hpp"
#include "decaylab/io.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sys/wait.h>
#include <numeric>
#include <sstream>

using namespace decaylab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace
{
struct Run
{
    int code = 0;
    std::string out, err;
};

Run run(std::vector<std::string> args)
{
    args.insert(args.begin(), "decaylab");
    std::vector<const char *> argv;
    for (const auto &a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = cli::main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch(const std::string &name)
{
    const auto dir = fs::temp_directory_path() / ("decaylab_cli_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path &path)
{
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

json load_json(const fs::path &path)
{
    return json::parse(slurp(path));
}
} // namespace

TEST_SUITE("cli")
{
    TEST_CASE("simulate writes trace, overlay and plot script")
    {
        const auto dir = scratch("simulate");
        const auto r = run({"simulate", "--preset", "A", "--tmax", "88", "--step", "0.1", "--out", dir.string()});
        REQUIRE(r.code == 0);
        const auto trace = io::read_csv_file(dir / "trace.csv");
        CHECK(trace.header == std::vector<std::string>{"t_mm", "p", "re_a", "im_a"});
        CHECK(trace.rows() == 881);
        CHECK(trace.column("t_mm").back() == doctest::Approx(88.0));

        const auto overlay = io::read_csv_file(dir / "overlay.csv");
        CHECK(overlay.header ==
              std::vector<std::string>{"t_mm", "pole_cut", "parabola", "exponential", "power_law", "power_law_mean"});
        const auto &t = overlay.column("t_mm");
        const auto &parabola = overlay.column("parabola");
        for (std::size_t i = 0; i < t.size(); i += 50)
            CHECK(parabola[i] == doctest::Approx(1.0 - std::pow(t[i] / (1.0 / 0.045), 2)).epsilon(1e-12));
        CHECK(overlay.column("exponential").front() == doctest::Approx(1.175).epsilon(1e-3));
        CHECK(fs::exists(dir / "plot.gp"));

        // Every emitted CSV survives a second write unchanged.
        std::stringstream again;
        io::write_csv(again, overlay);
        CHECK(again.str() == slurp(dir / "overlay.csv"));

        const auto doc = load_json(dir / "simulate.json");
        CHECK(doc["schema_version"] == cli::kSchemaVersion);
        CHECK(doc["config"]["grid"]["tmax"] == 88.0);
        CHECK(doc["params"]["kappa0_per_mm"] == 0.045);
        fs::remove_all(dir);
    }

    TEST_CASE("C-fit trace oscillates with the band-edge period")
    {
        const auto dir = scratch("cfit");
        REQUIRE(run({"simulate", "--preset", "C-fit", "--out", dir.string(), "--format", "csv"}).code == 0);
        CHECK_FALSE(fs::exists(dir / "simulate.json"));
        const auto tr = io::trace_from_table(io::read_csv_file(dir / "trace.csv"));
        // Local maxima of t^3 p over the tail.
        std::vector<double> peaks;
        std::vector<double> y;
        for (std::size_t i = 0; i < tr.t.size(); ++i)
            y.push_back(std::pow(tr.t[i], 3) * tr.p[i]);
        for (std::size_t i = 1; i + 1 < y.size(); ++i)
            if (tr.t[i] > 40.0 && y[i] > y[i - 1] && y[i] >= y[i + 1])
                peaks.push_back(tr.t[i]);
        REQUIRE(peaks.size() >= 3);
        const double period = (peaks.back() - peaks.front()) / (peaks.size() - 1);
        CHECK(period == doctest::Approx(9.8).epsilon(0.05));
        fs::remove_all(dir);
    }

    TEST_CASE("invalid preset exits 1 without output")
    {
        const auto dir = scratch("badpreset");
        const auto r = run({"simulate", "--preset", "Q", "--out", dir.string()});
        CHECK(r.code == 1);
        CHECK(r.err.find("unknown preset") != std::string::npos);
        CHECK_FALSE(fs::exists(dir));
        CHECK(run({"fly"}).code == 1);
        CHECK(run({"simulate"}).code == 1);
        CHECK(run({"simulate", "--preset", "A", "--params", "x.ini"}).code == 1);
        CHECK(run({"simulate", "--preset", "A", "--format", "xml"}).code == 1);
        CHECK(run({"simulate", "--preset", "A", "--set", "grid.bogus=1"}).code == 1);
        CHECK(run({"--help"}).code == 0);
    }

    TEST_CASE("numeric failure exits 2")
    {
        const auto dir = scratch("numeric");
        const auto r = run({"simulate", "--preset", "A", "--tmax", "40000", "--step", "100", "--out", dir.string()});
        CHECK(r.code == 2);
        CHECK_FALSE(r.err.empty());
        fs::remove_all(dir);
    }

    TEST_CASE("analyze")
    {
        const auto dir = scratch("analyze");
        REQUIRE(run({"simulate", "--preset", "A", "--out", dir.string()}).code == 0);
        auto r = run({"analyze", "--preset", "A", "--trace", (dir / "trace.csv").string(), "--out", dir.string()});
        REQUIRE(r.code == 0);
        auto doc = load_json(dir / "report.json");
        CHECK(doc["schema_version"] == 1);
        CHECK(doc["regimes"]["zeno"]["tau_z_est_mm"].get<double>() == doctest::Approx(22.2).epsilon(0.03));
        CHECK(doc["regimes"]["exponential"]["z_est"].get<double>() > 1.0);
        CHECK(doc["regimes"]["validity"]["pole"] == false);
        CHECK(doc["regimes"]["absent"].contains("pole"));
        CHECK(doc["config"]["run"]["preset"] == "A");

        // q = 0 analysis carries the pole and transition times.
        const auto p0 = dir / "a0.ini";
        std::ofstream(p0) << "[params]\nkappa0 = 0.045\nkappa = 0.119\neps = -0.08\nq = 0\nq0 = 0\n";
        REQUIRE(run({"simulate", "--params", p0.string(), "--out", (dir / "a0").string()}).code == 0);
        r = run({"analyze", "--params", p0.string(), "--trace", (dir / "a0" / "trace.csv").string(), "--out",
                 (dir / "a0").string()});
        REQUIRE(r.code == 0);
        doc = load_json(dir / "a0" / "report.json");
        CHECK(doc["regimes"]["analytic"]["pole"]["z_factor"].get<double>() == doctest::Approx(1.175).epsilon(1e-3));
        CHECK(doc["regimes"]["analytic"]["transition_times"]["tau_zero_mm"].get<double>() ==
              doctest::Approx(8.46).epsilon(5e-3));
        CHECK(doc["regimes"]["comparisons"].size() >= 3);

        // Decoupled defect.
        const auto p_off = dir / "off.ini";
        std::ofstream(p_off) << "kappa0 = 0\nkappa = 0.119\neps = -0.08\nq = 0\nq0 = 0\n";
        REQUIRE(run({"simulate", "--params", p_off.string(), "--out", (dir / "off").string()}).code == 0);
        r = run({"analyze", "--params", p_off.string(), "--trace", (dir / "off" / "trace.csv").string(), "--out",
                 (dir / "off").string()});
        REQUIRE(r.code == 0);
        doc = load_json(dir / "off" / "report.json");
        CHECK(doc["regimes"]["status"] == "no decay");
        CHECK(doc["regimes"]["no_decay"] == true);

        // Malformed CSV.
        const auto bad = dir / "bad.csv";
        std::ofstream(bad) << "t_mm,p\n0,1\n0.1,0.99,7\n";
        r = run({"analyze", "--preset", "A", "--trace", bad.string(), "--out", dir.string()});
        CHECK(r.code == 1);
        CHECK(r.err.find("line 3") != std::string::npos);
        CHECK(run({"analyze", "--preset", "A", "--out", dir.string()}).code == 1);
        fs::remove_all(dir);
    }

    TEST_CASE("B-fit report")
    {
        const auto dir = scratch("bfit");
        REQUIRE(run({"simulate", "--preset", "B-fit", "--out", dir.string()}).code == 0);
        REQUIRE(run({"analyze", "--preset", "B-fit", "--trace", (dir / "trace.csv").string(), "--out", dir.string()})
                    .code == 0);
        const auto doc = load_json(dir / "report.json");
        CHECK(doc["regimes"]["power_law"]["power_exponent"].get<double>() == doctest::Approx(-3.0).epsilon(0.1));
        CHECK(doc["regimes"]["oscillation"].contains("suppressed"));
        fs::remove_all(dir);
    }

    TEST_CASE("report prints experimental values next to computed ones")
    {
        const auto dir = scratch("report");
        const auto r = run({"report", "--preset", "A", "--out", dir.string()});
        REQUIRE(r.code == 0);
        CHECK(r.out.find("1.23") != std::string::npos);
        CHECK(r.out.find("9.48") != std::string::npos);
        const auto doc = load_json(dir / "report.json");
        const auto &lit = doc["literature_comparison"];
        CHECK(lit["z"]["quoted"] == 1.23);
        CHECK(lit["z"]["computed_row_a_q0"].get<double>() == doctest::Approx(1.175).epsilon(1e-3));
        CHECK(lit["c_inf_mm"]["quoted"] == 9.48);
        CHECK(lit["c_inf_mm"]["c_len_closed_form_mm"].get<double>() ==
              doctest::Approx(std::cbrt(2.0) * lit["c_inf_mm"]["c_len_edge_coefficients_mm"].get<double>()));
        CHECK_FALSE(lit["note"].get<std::string>().empty());
        fs::remove_all(dir);
    }

    TEST_CASE("labsim outputs")
    {
        const auto d1 = scratch("lab1");
        REQUIRE(run({"labsim", "--preset", "B-fit", "--seed", "7", "--out", d1.string()}).code == 0);
        std::map<std::string, std::string> first;
        for (const char *name : {"stack.bin", "profile.csv", "comparison.csv", "labsim.json"})
            first[name] = slurp(d1 / name);
        REQUIRE(run({"labsim", "--preset", "B-fit", "--seed", "7", "--out", d1.string()}).code == 0);
        for (const auto &[name, bytes] : first)
        {
            CAPTURE(name);
            CHECK(slurp(d1 / name) == bytes);
        }

        const auto comparison = io::read_csv_file(d1 / "comparison.csv");
        const auto &within = comparison.column("within_2sigma");
        CHECK(std::accumulate(within.begin(), within.end(), 0.0) >= 0.95 * within.size());
        CHECK(comparison.column("pixel_dynamic_range").front() >= 1e4);
        const auto doc = load_json(d1 / "labsim.json");
        CHECK(doc["dynamic_range"].get<double>() >= 1e4);
        CHECK(doc["config"]["lab"]["seed"] == 7);

        // Zero noise: extracted p is independent of loss.
        const auto l0 = scratch("loss0"), l6 = scratch("loss6");
        const std::vector<std::string> quiet{"--set", "lab.speckle_rel_sigma=0", "--set", "lab.scatter_rel_sigma=0",
                                             "--set", "lab.quantize=false"};
        auto a0 = std::vector<std::string>{"labsim", "--preset", "B-fit", "--out", l0.string(), "--set", "lab.loss_db_per_cm=0"};
        auto a6 = std::vector<std::string>{"labsim", "--preset", "B-fit", "--out", l6.string(), "--set", "lab.loss_db_per_cm=0.6"};
        a0.insert(a0.end(), quiet.begin(), quiet.end());
        a6.insert(a6.end(), quiet.begin(), quiet.end());
        REQUIRE(run(a0).code == 0);
        REQUIRE(run(a6).code == 0);
        const auto p0 = io::read_csv_file(l0 / "profile.csv").column("p");
        const auto p6 = io::read_csv_file(l6 / "profile.csv").column("p");
        REQUIRE(p0.size() == p6.size());
        for (std::size_t i = 0; i < p0.size(); ++i)
            CHECK(std::abs(p0[i] - p6[i]) <= 1e-13 * p0[i]);
        for (const auto &d : {d1, l0, l6})
            fs::remove_all(d);
    }

    TEST_CASE("configuration file, overrides and dump")
    {
        const auto dir = scratch("config");
        fs::create_directories(dir);
        const auto ini = dir / "run.ini";
        std::ofstream(ini) << "[run]\npreset = C-fit\nformat = json\n[grid]\ntmax = 30\nstep = 0.5\n[lab]\nseed = 3\n";

        auto r = run({"--config", ini.string(), "--dump-config"});
        REQUIRE(r.code == 0);
        CHECK(r.out.find("preset = C-fit") != std::string::npos);
        CHECK(r.out.find("tmax = 30") != std::string::npos);

        // Flags win over the file.
        r = run({"--config", ini.string(), "--tmax", "20", "--seed", "9", "--dump-config"});
        CHECK(r.out.find("tmax = 20") != std::string::npos);
        CHECK(r.out.find("seed = 9") != std::string::npos);

        // The dump loads back to the same configuration.
        const auto dumped = dir / "dumped.ini";
        std::ofstream(dumped) << r.out;
        CHECK(run({"--config", dumped.string(), "--dump-config"}).out == r.out);

        cli::RunConfig config;
        cli::load_config_file(config, ini);
        CHECK(config.preset == "C-fit");
        CHECK(config.t_max == 30.0);
        CHECK(config.lab.seed == 3);
        CHECK(config.formats == std::vector<std::string>{"json"});
        CHECK_THROWS_AS(cli::apply_setting(config, "lab", "bit_depth", "eight"), ValidationError);
        CHECK_THROWS_AS(cli::apply_setting(config, "params", "lambda", "0.3"), ValidationError);

        // Defaults are printable without any other input.
        r = run({"--dump-config"});
        CHECK(r.code == 0);
        CHECK(r.out.find("[analysis]") != std::string::npos);
        CHECK(r.out.find("slope_spread = 0.05") != std::string::npos);

        r = run({"simulate", "--config", ini.string(), "--out", dir.string()});
        REQUIRE(r.code == 0);
        CHECK(fs::exists(dir / "simulate.json"));
        CHECK_FALSE(fs::exists(dir / "trace.csv"));
        CHECK(load_json(dir / "simulate.json")["samples"] == 61);

        const auto broken = dir / "broken.ini";
        std::ofstream(broken) << "[grid]\ntmax = soon\n";
        CHECK(run({"simulate", "--preset", "A", "--config", broken.string()}).code == 1);
        fs::remove_all(dir);
    }
}

TEST_SUITE("cli")
{
    TEST_CASE("installed binary reports exit codes")
    {
        const auto dir = scratch("binary");
        const std::string exe = DECAYLAB_CLI_PATH;
        auto status = [&](const std::string &args) {
            const int raw = std::system((exe + " " + args + " > /dev/null 2>&1").c_str());
            return WEXITSTATUS(raw);
        };
        CHECK(status("simulate --preset A --tmax 5 --out " + dir.string()) == 0);
        CHECK(status("simulate --preset nope --out " + dir.string()) == 1);
        CHECK(status("simulate --preset A --tmax 40000 --step 100 --out " + dir.string()) == 2);
        fs::remove_all(dir);
    }
}
