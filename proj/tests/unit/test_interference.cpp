#include <cmath>
#include <sstream>

#include "doctest.h"

#include "hqn/interference.hpp"

using namespace hqn;

namespace {

TimeGrid grid(double t_end = 6.0, double dt = 2e-3) { return TimeGrid::covering(0.0, t_end, dt); }

}  // namespace

TEST_CASE("overlap of detuned gaussians") {
    // Intensity FWHM f: |<a|b>|^2 = exp(-delta^2 f^2 / (8 ln 2)).
    const double f = 0.7;
    const auto a = gaussian_photon(grid(), 3.0, f);
    for (double delta : {0.0, 1.0, 3.0, 6.0}) {
        const auto r = mode_overlap(a, a.detuned(delta));
        CHECK(r.fidelity == doctest::Approx(std::exp(-delta * delta * f * f / (8.0 * std::log(2.0)))).epsilon(1e-6));
    }
}

TEST_CASE("overlap ignores normalization and global phase") {
    const auto a = skewed_photon(grid(), 0.5, 0.3, 1.5);
    CHECK(mode_overlap(a, a.scaled(cplx(0.0, 0.4))).fidelity == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS(mode_overlap(a, a.scaled(0.0)));
}

TEST_CASE("hom limits") {
    const auto a = sin2_photon(grid(), 0.5, 1.0);
    const auto same = hom_coincidence(a, a);
    CHECK(same.integrated < 1e-10);
    CHECK(same.fidelity == doctest::Approx(1.0).epsilon(1e-12));

    const auto b = sin2_photon(grid(), 3.0, 1.0);
    const auto apart = hom_coincidence(a, b);
    CHECK(std::abs(apart.integrated - 0.5) < 1e-10);
    CHECK(apart.density_integral == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("hom coincidence is (1 - F)/2 and symmetric") {
    const auto a = sin2_photon(grid(), 0.5, 1.0);
    const auto b = gaussian_photon(grid(), 1.2, 0.6).detuned(2.0);
    const auto ab = hom_coincidence(a, b);
    const auto ba = hom_coincidence(b, a);
    const double f = mode_overlap(a, b).fidelity;
    CHECK(ab.integrated == doctest::Approx((1.0 - f) / 2.0).epsilon(1e-12));
    CHECK(ba.integrated == doctest::Approx(ab.integrated).epsilon(1e-12));
    CHECK(ab.density_integral == doctest::Approx(ab.integrated).epsilon(1e-3));
}

TEST_CASE("coincidence density from the two-photon amplitude") {
    const auto a = sin2_photon(grid(3.0), 0.5, 1.0);
    const auto b = skewed_photon(grid(3.0), 0.4, 0.2, 1.0).detuned(1.5);
    HomOptions o;
    o.density_points = 61;
    const auto r = hom_coincidence(a, b, o);
    REQUIRE(r.grid.n == 61);
    for (std::size_t i = 0; i < r.grid.n; i += 7)
        for (std::size_t j = 0; j < r.grid.n; j += 5) {
            const double t1 = r.grid.at(i), t2 = r.grid.at(j);
            const cplx amp = a.sample(t1) * b.sample(t2) - a.sample(t2) * b.sample(t1);
            CHECK(r.at(i, j) == doctest::Approx(0.5 * std::norm(amp)).epsilon(1e-9));
            CHECK(r.at(i, j) == doctest::Approx(r.at(j, i)).epsilon(1e-12));
        }
}

TEST_CASE("unnormalized inputs are rejected unless rescaled") {
    const auto a = sin2_photon(grid(), 0.5, 1.0, 0.5);
    CHECK_THROWS(hom_coincidence(a, a));
    HomOptions o;
    o.rescale = true;
    CHECK(hom_coincidence(a, a, o).integrated < 1e-10);
}

TEST_CASE("parallel kernels match the serial reference") {
    const auto a = gaussian_photon(grid(), 2.0, 1.0);
    const auto b = a.detuned(4.0);
    HomOptions o;
    o.density_points = 101;
    const auto p = hom_coincidence(a, b, o);
    const auto s = serial::hom_coincidence(a, b, o);
    CHECK(p.integrated == s.integrated);
    CHECK(p.density == s.density);
    const auto bp = quantum_beat(a, b, 1e-3, o);
    const auto bs = serial::quantum_beat(a, b, 1e-3, o);
    CHECK(bp.marginal == bs.marginal);
    CHECK(bp.zeros == bs.zeros);
}

TEST_CASE("beat zeros sit at multiples of 2 pi / delta") {
    const auto g = grid(8.0, 2e-3);
    const auto a = gaussian_photon(g, 4.0, 2.0);
    for (double delta : {kTwoPi * 1.0, kTwoPi * 2.5}) {
        const auto beat = quantum_beat(a, a.detuned(delta));
        REQUIRE(beat.zeros.size() >= 3);
        const double period = kTwoPi / delta;
        for (double z : beat.zeros) {
            const double k = std::round(z / period);
            CHECK(std::abs(z - k * period) <= g.dt);
        }
        for (std::size_t i = 1; i < beat.zeros.size(); ++i)
            CHECK(std::abs(beat.zeros[i] - beat.zeros[i - 1] - period) <= g.dt);
    }
}

TEST_CASE("identical photons give a vanishing beat marginal") {
    const auto a = gaussian_photon(grid(), 3.0, 1.0);
    const auto beat = quantum_beat(a, a);
    for (double v : beat.marginal) CHECK(v < 1e-12);
}

TEST_CASE("storage interference test aligns the packets") {
    const auto src = sin2_photon(grid(), 0.5, 1.0);
    const auto late = src.shifted(2.3).scaled(0.4);
    CHECK(storage_interference_test(src, late).integrated < 1e-6);
    const auto distorted = skewed_photon(grid(), 0.5, 0.2, 1.5);
    CHECK(storage_interference_test(src, distorted).integrated > 1e-3);
}

TEST_CASE("writers") {
    const auto a = gaussian_photon(grid(3.0), 1.5, 1.0);
    HomOptions o;
    o.density_points = 11;
    const auto r = hom_coincidence(a, a.detuned(1.0), o);
    std::ostringstream d, b;
    write_density_csv(d, r);
    CHECK(d.str().rfind("t1_us,t2_us,p\n", 0) == 0);
    write_beat_csv(b, quantum_beat(a, a.detuned(1.0)));
    CHECK(b.str().rfind("tau_us,marginal\n", 0) == 0);
    const auto j = summary_json(r);
    CHECK(j.contains("fidelity"));
    CHECK(j.contains("coincidence"));
}
