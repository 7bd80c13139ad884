#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

#include "hqn/cavity_source.hpp"
#include "hqn/interference.hpp"

using namespace hqn;

namespace {

CavityParams coupled_cavity() {
    CavityParams p;
    p.g = kTwoPi * 15.0;
    p.kappa = kTwoPi * 12.0;
    p.gamma = kTwoPi * 3.0;
    return p;
}

}  // namespace

TEST_CASE("emission probability and cooperativity by hand") {
    auto p = coupled_cavity();
    p.t1 = 2e-6;
    p.t2 = 100e-6;
    p.h = 2e-6;
    const double expected = (100.0 / 106.0) * (225.0 / (36.0 + 225.0));
    CHECK(emission_probability(p) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(emission_bound(p) == doctest::Approx(225.0 / 261.0).epsilon(1e-12));
    CHECK(cooperativity(p) == doctest::Approx(3.125).epsilon(1e-12));
}

TEST_CASE("kappa from mirrors") {
    CavityParams p = coupled_cavity();
    p.t1 = 2e-6;
    p.t2 = 50e-6;
    p.h = 2e-6;
    p.cavity_length = 100.0;
    CHECK(kappa_from_mirrors(p) == doctest::Approx(2.99792458e8 * 56e-6 / 400.0).epsilon(1e-12));
    p.cavity_length = 0.0;
    CHECK_THROWS(kappa_from_mirrors(p));
}

TEST_CASE("parameter validation") {
    auto p = coupled_cavity();
    p.kappa = -1.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.kappa = std::nan("");
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    CHECK_THROWS(emission_probability(coupled_cavity()));  // no mirror losses given
}

TEST_CASE("sweep recomputes kappa and matches the serial reference") {
    CavityParams base;
    base.g = kTwoPi * 15.0;
    base.gamma = kTwoPi * 3.0;
    base.t1 = 2e-6;
    base.h = 2e-6;
    base.cavity_length = 100.0;
    std::vector<double> t2;
    for (int i = 1; i <= 40; ++i) t2.push_back(i * 1.5e-6);
    const auto rows = sweep_asymmetry(base, t2);
    const auto ref = serial::sweep_asymmetry(base, t2);
    REQUIRE(rows.size() == t2.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto p = base;
        p.t2 = t2[i];
        p.kappa = kappa_from_mirrors(p);
        CHECK(rows[i].t2 == t2[i]);
        CHECK(rows[i].p_emit == doctest::Approx(emission_probability(p)).epsilon(1e-12));
        CHECK(rows[i].cooperativity == doctest::Approx(cooperativity(p)).epsilon(1e-12));
        CHECK(rows[i].p_emit == ref[i].p_emit);
        if (i > 0) CHECK(rows[i].p_emit > rows[i - 1].p_emit);
    }
}

TEST_CASE("vstirap conserves probability for random smooth drives") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto p = coupled_cavity();
    for (int k = 0; k < 8; ++k) {
        const auto grid = TimeGrid::covering(0.0, 4.0, 2e-3);
        const double ramp = 0.2 + 2.0 * u(rng);
        const double omega = kTwoPi * (2.0 + 40.0 * u(rng));
        const auto rec = simulate_vstirap(p, DrivePulse::smooth_ramp(grid, 0.3 * u(rng), ramp, omega));
        CHECK(rec.p_emit + rec.p_spont + rec.p_residual == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(rec.p_emit <= emission_bound(p) + 1e-6);
        CHECK(rec.photon.norm() == doctest::Approx(rec.p_emit).epsilon(1e-3));
    }
}

TEST_CASE("slow drive approaches the coupling bound") {
    const auto p = coupled_cavity();
    const auto grid = TimeGrid::covering(0.0, 5.0, 2e-3);
    const auto rec = simulate_vstirap(p, DrivePulse::smooth_ramp(grid, 0.0, 3.0, kTwoPi * 20.0));
    CHECK(rec.p_emit == doctest::Approx(emission_bound(p)).epsilon(0.05));
}

TEST_CASE("no coupling, no photon") {
    auto p = coupled_cavity();
    p.g = 0.0;
    const auto grid = TimeGrid::covering(0.0, 2.0, 2e-3);
    const auto rec = simulate_vstirap(p, DrivePulse::smooth_ramp(grid, 0.0, 0.5, kTwoPi * 10.0));
    CHECK(rec.p_emit < 1e-12);
}

TEST_CASE("shaped drive reproduces the target") {
    const auto p = coupled_cavity();
    const auto grid = TimeGrid::covering(0.0, 2.5, 1e-3);
    for (double prob : {0.3, 0.6, 0.8}) {
        const auto target = sin2_photon(grid, 0.5, 1.0, prob);
        const auto drive = shape_drive_pulse(p, target);
        const auto rec = simulate_vstirap(p, drive);
        CHECK(mode_overlap(target, rec.photon).fidelity >= 0.99);
        CHECK(rec.p_emit == doctest::Approx(prob).epsilon(1e-3));
    }
    CHECK_THROWS(shape_drive_pulse(p, sin2_photon(grid, 0.5, 1.0, 0.95)));
}

TEST_CASE("transverse gaussian mode distribution") {
    const double g_max = 10.0;
    const auto d = ModeDistribution::transverse_gaussian(g_max, 25, 1.0);
    double w = 0.0, mean = 0.0;
    for (const auto& b : d.bins) {
        w += b.weight;
        mean += b.weight * b.g;
        CHECK(b.g <= g_max);
        CHECK(b.g >= g_max * std::exp(-1.0));
    }
    CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
    // Uniform over the disc r <= w: g = g_max e^{-u}, u ~ U[0, 1].
    CHECK(mean == doctest::Approx(g_max * (1.0 - std::exp(-1.0))).epsilon(1e-12));
}

TEST_CASE("mode average matches the serial reference and bins") {
    const auto p = coupled_cavity();
    const auto grid = TimeGrid::covering(0.0, 2.5, 2e-3);
    const auto drive = shape_drive_pulse(p, sin2_photon(grid, 0.5, 1.0, 0.6));
    const auto dist = ModeDistribution::transverse_gaussian(p.g, 8);
    const auto a = average_over_mode(p, drive, dist);
    const auto b = serial::average_over_mode(p, drive, dist);
    REQUIRE(a.bins.size() == 8);
    CHECK(a.mean_p_emit == b.mean_p_emit);
    for (std::size_t i = 0; i < a.photon.size(); ++i) CHECK(a.photon[i] == b.photon[i]);
    CHECK(a.photon.norm() == doctest::Approx(1.0).epsilon(1e-9));

    double mean = 0.0;
    for (const auto& bin : a.bins) mean += bin.weight * simulate_vstirap(p.with_g(bin.g), drive).p_emit;
    CHECK(a.mean_p_emit == doctest::Approx(mean).epsilon(1e-9));
}

TEST_CASE("delta distribution reproduces a single run") {
    const auto p = coupled_cavity();
    const auto grid = TimeGrid::covering(0.0, 3.0, 2e-3);
    const auto drive = DrivePulse::smooth_ramp(grid, 0.0, 1.0, kTwoPi * 20.0);
    const auto a = average_over_mode(p, drive, ModeDistribution::delta(p.g));
    CHECK(a.mean_p_emit == doctest::Approx(simulate_vstirap(p, drive).p_emit).epsilon(1e-12));
}
