#include "decaylab/errors.hpp"
#include "decaylab/evolve.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace decaylab;

TEST_SUITE("evolve")
{
    TEST_CASE("diagonalize small matrices")
    {
        Eigen::MatrixXd one(1, 1);
        one << 0.3;
        auto spec = diagonalize(one);
        CHECK(spec.eigenvalues[0] == 0.3);
        CHECK(spec.weights[0] == 1.0);

        Eigen::MatrixXd dimer(2, 2);
        dimer << 0, 0.2, 0.2, 0;
        spec = diagonalize(dimer);
        CHECK(spec.eigenvalues[0] == doctest::Approx(-0.2));
        CHECK(spec.eigenvalues[1] == doctest::Approx(0.2));
        CHECK(spec.weights[0] == doctest::Approx(0.5));
        CHECK(spec.weights[1] == doctest::Approx(0.5));
    }

    TEST_CASE("uniform open chain has the Toeplitz spectrum")
    {
        const double kappa = 0.7;
        const int n = 60;
        const auto spec = diagonalize(build_hamiltonian(ChainParams::make(kappa, kappa, 0.0, 0.0, 0.0), n));
        std::vector<double> expected;
        for (int j = 1; j <= n; ++j)
            expected.push_back(2 * kappa * std::cos(j * std::numbers::pi / (n + 1)));
        std::sort(expected.begin(), expected.end());
        for (int j = 0; j < n; ++j)
            CHECK(spec.eigenvalues[j] == doctest::Approx(expected[j]).epsilon(1e-12));
        CHECK(std::accumulate(spec.weights.begin(), spec.weights.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        for (double w : spec.weights)
        {
            CHECK(w >= 0.0);
            CHECK(w <= 1.0);
        }
    }

    TEST_CASE("dimer oscillates at the coupling frequency")
    {
        const auto p = ChainParams::make(0.045, 0.119, 0.0, 0.0, 0.0);
        const auto spec = diagonalize(build_hamiltonian(p, 2));
        CHECK(survival_amplitude(spec, 0.0) == std::complex<double>(1.0, 0.0));
        for (double t : {0.5, 3.0, 17.0, 80.0})
        {
            const auto a = survival_amplitude(spec, t);
            CHECK(a.real() == doctest::Approx(std::cos(0.045 * t)).epsilon(1e-12));
            CHECK(std::abs(a.imag()) < 1e-12);
            const auto pops = site_populations(p, t, 2);
            CHECK(pops[0] == doctest::Approx(std::pow(std::cos(0.045 * t), 2)).epsilon(1e-12));
            CHECK(pops[1] == doctest::Approx(std::pow(std::sin(0.045 * t), 2)).epsilon(1e-12));
        }
    }

    TEST_CASE("uniform semi-infinite chain follows the Bessel law")
    {
        const double kappa = 0.1;
        const auto trace = survival_trace(ChainParams::make(kappa, kappa, 0.0, 0.0, 0.0),
                                          TimeGrid::uniform_step(50.0 / kappa, 0.5));
        double worst = 0.0;
        for (std::size_t i = 0; i < trace.t.size(); ++i)
            worst = std::max(worst, std::abs(trace.p[i] - oracle::uniform_chain_p(kappa, trace.t[i])));
        CHECK(worst < 1e-8);
    }

    TEST_CASE("Bessel oracle agrees with the standard library")
    {
        for (double x : {0.0, 0.3, 1.0, 5.5, 12.0, 19.9, 20.1, 24.9, 40.0, 99.0})
            CHECK(oracle::bessel_j1(x) == doctest::Approx(std::cyl_bessel_j(1.0, x)).epsilon(1e-11).scale(1e-12));
    }

    TEST_CASE("trace invariants")
    {
        const auto trace = survival_trace(preset("B-fit"), TimeGrid::uniform_step(90.0, 0.1));
        CHECK(trace.p.front() == 1.0);
        CHECK(trace.guard_ok);
        for (std::size_t i = 0; i < trace.t.size(); ++i)
        {
            CHECK(std::abs(trace.p[i] - std::norm(trace.a[i])) < 1e-14);
            CHECK(trace.p[i] >= 0.0);
            CHECK(trace.p[i] <= 1.0 + 1e-12);
        }
    }

    TEST_CASE("decoupled defect never decays")
    {
        const auto trace = survival_trace(ChainParams::make(0.0, 0.1, -0.08, 0.0, 0.0), TimeGrid::uniform_step(90.0, 1.0));
        for (double p : trace.p)
            CHECK(p == doctest::Approx(1.0).epsilon(1e-14));
    }

    TEST_CASE("short times follow the Zeno parabola")
    {
        const auto trace = survival_trace(preset("A"), TimeGrid::uniform_step(5.0, 5.0));
        CHECK(trace.p.back() == doctest::Approx(1.0 - std::pow(5.0 / 22.22, 2)).epsilon(2e-3));

        // (1 - p) / t^2 -> kappa0^2 independent of q, by Richardson extrapolation.
        for (double q : {0.0, 0.005, 0.01})
        {
            const auto p = ChainParams::make(0.045, 0.119, -0.08, q, 0.0);
            const auto spec = diagonalize(build_hamiltonian(p, 64));
            auto ratio = [&](double t) { return (1.0 - std::norm(survival_amplitude(spec, t))) / (t * t); };
            const double h = 0.2;
            const double limit = (4.0 * ratio(h / 2) - ratio(h)) / 3.0;
            CAPTURE(q);
            CHECK(limit == doctest::Approx(0.045 * 0.045).epsilon(1e-3));
        }
    }

    TEST_CASE("amplitude is conjugate under time reversal")
    {
        const auto spec = diagonalize(build_hamiltonian(preset("C-fit"), 128));
        for (double t : {0.7, 13.0, 61.0})
        {
            const auto forward = survival_amplitude(spec, t);
            const auto backward = survival_amplitude(spec, -t);
            CHECK(std::abs(backward - std::conj(forward)) < 1e-12);
        }
    }

    TEST_CASE("site populations are normalized")
    {
        const auto first = site_populations(preset("A"), 0.0, 50);
        CHECK(first[0] == 1.0);
        CHECK(std::accumulate(first.begin() + 1, first.end(), 0.0) == 0.0);
        for (const auto &name : {"A", "B-fit", "C-fit"})
        {
            for (int n : {16, 256, 1024})
            {
                const auto spec = diagonalize(build_hamiltonian(preset(name), n));
                for (double t : {1.0, 45.0, 90.0})
                {
                    const auto pops = site_populations(spec, t);
                    CHECK(std::abs(std::accumulate(pops.begin(), pops.end(), 0.0) - 1.0) < 1e-10);
                }
            }
        }
    }

    TEST_CASE("truncation satisfies guard and doubling criteria")
    {
        const auto p = preset("B-fit");
        const int n = choose_truncation(p, 88.0, 1e-10);
        const auto spec = diagonalize(build_hamiltonian(p, n));
        const auto doubled = diagonalize(build_hamiltonian(p, 2 * n));
        CHECK(guard_population(spec, 88.0, 0.1) < 1e-10);
        for (double t = 0.0; t <= 88.0; t += 4.0)
            CHECK(std::abs(std::norm(survival_amplitude(spec, t)) - std::norm(survival_amplitude(doubled, t))) < 1e-10);

        CHECK(choose_truncation(ChainParams::make(0.2, 0.1, 0.0, 0.0, 0.0), 10.0, 1e-10,
                                {.start_sites = 2, .waive_guard = true}) == 2);
        CHECK_THROWS_AS(choose_truncation(p, 88.0, 1e-10, {.start_sites = 4, .hard_cap = 16}), NumericError);
        CHECK_THROWS_AS(choose_truncation(p, -1.0, 1e-10), ValidationError);
    }

    TEST_CASE("forty-waveguide array: light stops short of the far end")
    {
        const auto spec = diagonalize(build_hamiltonian(preset("B"), 40));
        double max29 = 0.0, max39 = 0.0;
        for (double t = 0.0; t <= 88.0; t += 0.5)
        {
            const auto pops = site_populations(spec, t);
            max29 = std::max(max29, pops[29]);
            max39 = std::max(max39, pops[39]);
        }
        CHECK(max29 > 1e-4);
        CHECK(max39 < 1e-6);
        const auto fixed = survival_trace_fixed(preset("B"), TimeGrid::uniform_step(88.0, 0.5), 40);
        CHECK(fixed.n_sites == 40);
    }

    TEST_CASE("spectral evolution matches direct integration")
    {
        for (const auto &name : {"A", "B-fit", "C-fit"})
        {
            const auto p = preset(name);
            const auto trace = survival_trace(p, TimeGrid::uniform_step(90.0, 2.5));
            const auto psi = oracle::rk4_evolve(build_hamiltonian(p, trace.n_sites), trace.t, 0.001 / p.kappa());
            for (std::size_t i = 0; i < trace.t.size(); ++i)
            {
                const double p_ode = std::norm(psi[i][0]);
                CAPTURE(name);
                CAPTURE(trace.t[i]);
                CHECK(std::abs(trace.p[i] - p_ode) <= 1e-8 * p_ode);
            }
        }
    }

    TEST_CASE("bound states")
    {
        CHECK(bound_state_weights(ChainParams::make(0.03, 0.1, 0.0, 0.0, 0.0)).empty());

        auto states = bound_state_weights(ChainParams::make(0.0, 0.119, -0.08, 0.0, 0.0));
        REQUIRE(states.size() == 1);
        CHECK(states[0].energy == -0.08);
        CHECK(states[0].weight == 1.0);

        // lambda^2 = 1.64 lies below the q = 0 threshold 2 - |eps|/kappa: no state survives.
        CHECK(bound_state_weights(ChainParams::make(std::sqrt(1.64) * 0.16, 0.16, 0.0, 0.0, 0.0)).empty());

        // lambda^2 = 2.5: E_b = +/- lambda^2 kappa / sqrt(lambda^2 - 1), weight (lambda^2 - 2) / (2 (lambda^2 - 1)).
        states = bound_state_weights(ChainParams::make(std::sqrt(2.5) * 0.1, 0.1, 0.0, 0.0, 0.0));
        REQUIRE(states.size() == 2);
        CHECK(states[0].energy == doctest::Approx(-states[1].energy).epsilon(1e-10));
        CHECK(states[0].weight == doctest::Approx(states[1].weight).epsilon(1e-8));
        CHECK(states[0].weight == doctest::Approx(1.0 / 6.0).epsilon(1e-7));
        CHECK(std::abs(states[1].energy) == doctest::Approx(2.5 * 0.1 / std::sqrt(1.5)).epsilon(1e-8));
    }
}
