#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"

#include "hqn/rus_network.hpp"

using namespace hqn;

namespace {

RusConfig ideal(double eta_store, double eta_detect, double p_bsm) {
    RusConfig c;
    c.atom_arrival_rate = std::numeric_limits<double>::infinity();
    c.eta_store = eta_store;
    c.eta_detect = eta_detect;
    c.p_bsm = p_bsm;
    return c;
}

// Stores and detects perfectly; only the Bell measurement fails.
RusConfig with_p(double p) { return ideal(1.0, 1.0, p); }

TwoQubitState state(cplx a00, cplx a01, cplx a10, cplx a11) {
    TwoQubitState s;
    s.amp = {a00, a01, a10, a11};
    return s;
}

}  // namespace

TEST_CASE("wilk states") {
    for (auto sign : {BellSign::plus, BellSign::minus}) {
        const auto w = wilk_states(sign);
        CHECK(w.psi_a.norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(w.psi_b.norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(concurrence(w.psi_a) - 1.0) < 1e-12);
        CHECK(std::abs(concurrence(w.psi_b) - 1.0) < 1e-12);
        // Photon polarizations come out anticorrelated.
        const auto p = measurement_probabilities(w.psi_b);
        CHECK(p[0] < 1e-15);
        CHECK(p[3] < 1e-15);
        CHECK(p[1] == doctest::Approx(0.5));
        CHECK(p[2] == doctest::Approx(0.5));
    }
    const auto plus = wilk_states(BellSign::plus).psi_b;
    const auto minus = wilk_states(BellSign::minus).psi_b;
    cplx inner = 0.0;
    for (int i = 0; i < 4; ++i) inner += std::conj(plus.amp[i]) * minus.amp[i];
    CHECK(std::abs(inner) < 1e-15);
}

TEST_CASE("concurrence") {
    CHECK(concurrence(state(1, 0, 0, 0)) == 0.0);
    const double r = 1.0 / std::sqrt(2.0);
    CHECK(concurrence(state(0, r, r, 0)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(concurrence(state(0.5, 0.5, 0.5, 0.5)) < 1e-15);
    CHECK(concurrence(state(std::cos(0.3), 0, 0, std::sin(0.3))) == doctest::Approx(std::sin(0.6)).epsilon(1e-12));
    CHECK_THROWS(concurrence(state(1, 1, 0, 0)));
}

TEST_CASE("config validation") {
    auto c = ideal(1.0, 1.0, 1.0);
    CHECK_NOTHROW(c.validate());
    c.eta_store = 1.5;
    CHECK_THROWS(c.validate());
    c = ideal(1.0, 1.0, 1.0);
    c.target_chain_length = 1;
    CHECK_THROWS(c.validate());
    c = ideal(1.0, 1.0, 1.0);
    c.reset_time = -1.0;
    CHECK_THROWS(c.validate());
}

TEST_CASE("outcome probabilities compose the channel") {
    const auto c = ideal(0.8, 0.5, 0.5);
    CHECK(c.success_probability() == doctest::Approx(0.64 * 0.25 * 0.5));
    CHECK(c.insured_failure_probability() == doctest::Approx(0.64 * 0.25 * 0.5));
    CHECK(c.loss_probability() == doctest::Approx(1.0 - 0.64 * 0.25));
}

TEST_CASE("perfect channel needs one attempt per edge") {
    auto c = with_p(1.0);
    c.target_chain_length = 6;
    const auto s = simulate_rus(c);
    CHECK(s.edges_completed == 5);
    for (auto a : s.attempts_per_edge) CHECK(a == 1);
    CHECK(s.mean_coherence_weight == 1.0);
    CHECK(s.total_time == doctest::Approx(5 * c.photon_slot * 1e-3));
}

TEST_CASE("closed-form build time") {
    auto c = with_p(1.0);
    CHECK(expected_build_time(c).mean_attempts == doctest::Approx(c.target_chain_length - 1));
    c = with_p(0.5);
    c.target_chain_length = 3;
    CHECK(expected_build_time(c).mean_attempts == doctest::Approx(4.0));
    CHECK(expected_build_time(c).mean_time == doctest::Approx(4.0 * c.photon_slot * 1e-3));
    // Losses add the reset time by expectation.
    c = ideal(0.5, 1.0, 1.0);
    c.target_chain_length = 2;
    const double p = 0.25;
    CHECK(expected_build_time(c).mean_time ==
          doctest::Approx((c.photon_slot + (1.0 - p) * c.reset_time) / p * 1e-3));
    CHECK_THROWS(expected_build_time(ideal(0.0, 1.0, 1.0)));
}

TEST_CASE("geometric oracle for attempts per edge") {
    for (double p : {0.1, 0.25, 0.5}) {
        auto c = with_p(p);
        c.rng_seed = 11;
        const auto s = summarize(run_rus_batch(c, 10000));
        CHECK(std::abs(s.mean_attempts_per_edge - 1.0 / p) < 3.0 * s.sem_attempts_per_edge);
        const auto est = expected_build_time(c);
        CHECK(std::abs(s.mean_total_time - est.mean_time) < 3.0 * s.sem_total_time);
    }
}

TEST_CASE("lossy channel matches the closed form") {
    auto c = ideal(0.8, 0.6, 0.5);
    c.rng_seed = 5;
    const auto s = summarize(run_rus_batch(c, 10000));
    const auto est = expected_build_time(c);
    CHECK(std::abs(s.mean_attempts_per_edge - est.attempts_per_edge) < 3.0 * s.sem_attempts_per_edge);
    CHECK(std::abs(s.mean_total_time - est.mean_time) < 3.0 * s.sem_total_time);
}

TEST_CASE("coherence weight matches the exact chain average") {
    auto c = ideal(0.9, 0.7, 0.5);
    c.gamma_s_memory = 2e-3;
    c.rng_seed = 3;
    const auto s = summarize(run_rus_batch(c, 10000));
    CHECK(std::abs(s.mean_weight - expected_mean_weight(c)) < 3.0 * s.sem_weight);
    CHECK(s.mean_weight < 1.0);
    c.gamma_s_memory = 0.0;
    CHECK(expected_mean_weight(c) == doctest::Approx(1.0));
}

TEST_CASE("weights lie in (0, 1]") {
    auto c = ideal(0.8, 0.5, 0.5);
    c.gamma_s_memory = 0.01;
    for (const auto& r : run_rus_batch(c, 200)) {
        CHECK(r.mean_coherence_weight > 0.0);
        CHECK(r.mean_coherence_weight <= 1.0);
        CHECK(r.edges_completed == c.target_chain_length - 1);
    }
}

TEST_CASE("replay is deterministic and order independent") {
    RusConfig c;
    c.gamma_s_memory = 1e-3;
    c.rng_seed = 99;
    const auto a = run_rus_batch(c, 300);
    const auto b = serial::run_rus_batch(c, 300);
    std::ostringstream sa, sb;
    write_runs_jsonl(sa, a);
    write_runs_jsonl(sb, b);
    CHECK(sa.str() == sb.str());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].seed == run_seed(c.rng_seed, i));
    CHECK(run_seed(1, 0) != run_seed(2, 0));
    CHECK(run_seed(1, 0) != run_seed(1, 1));
}

TEST_CASE("mean build time does not grow with channel efficiency") {
    const RusConfig base = ideal(0.6, 0.6, 0.4);
    const auto mean_time = [](RusConfig c) {
        c.rng_seed = 17;
        return summarize(run_rus_batch(c, 10000));
    };
    const auto ref = mean_time(base);
    for (int k = 0; k < 3; ++k) {
        auto c = base;
        (k == 0 ? c.eta_store : k == 1 ? c.eta_detect : c.p_bsm) += 0.3;
        const auto s = mean_time(c);
        CHECK(s.mean_total_time < ref.mean_total_time + 3.0 * std::hypot(s.sem_total_time, ref.sem_total_time));
    }
}

TEST_CASE("insured failures keep memories, losses reset them") {
    auto c = ideal(0.7, 0.6, 0.5);
    c.reset_time = 7.0;
    c.target_chain_length = 6;
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        c.rng_seed = seed;
        const auto s = simulate_rus(c, true);
        const auto& ev = s.events;
        REQUIRE(!ev.empty());
        // Rebuild each memory's birth from the log using resets alone.
        std::vector<double> birth(c.target_chain_length, 0.0);
        int current = -1;
        for (std::size_t i = 0; i < ev.size(); ++i) {
            if (ev[i].edge != current) {
                current = ev[i].edge;
                birth[current + 1] = ev[i].time_us;
            }
            if (ev[i].kind == RusEventKind::loss) {
                REQUIRE(i + 1 < ev.size());
                CHECK(ev[i + 1].kind == RusEventKind::reset);
                CHECK(ev[i + 1].time_us == doctest::Approx(ev[i].time_us + c.photon_slot));
            }
            if (ev[i].kind == RusEventKind::insured_failure && i + 1 < ev.size())
                CHECK(ev[i + 1].kind != RusEventKind::reset);
            if (ev[i].kind == RusEventKind::reset) birth[current + 1] = ev[i].time_us + c.reset_time;
        }
        const double end = s.total_time * 1e3;
        REQUIRE(s.memory_ages.size() == birth.size());
        for (std::size_t k = 0; k < birth.size(); ++k)
            CHECK(s.memory_ages[k] == doctest::Approx(end - birth[k]).epsilon(1e-12));
    }
}

TEST_CASE("poisson loading waits for atoms") {
    RusConfig c = with_p(1.0);
    c.atom_arrival_rate = 0.5;
    c.interaction_time = 0.2;
    c.rng_seed = 4;
    const auto s = simulate_rus(c, true);
    bool waited = false;
    for (const auto& e : s.events) waited |= e.kind == RusEventKind::wait;
    CHECK(waited);
    CHECK(s.total_time > expected_build_time(with_p(1.0)).mean_time);
}

TEST_CASE("non-terminating configurations") {
    auto c = ideal(0.0, 1.0, 1.0);
    c.max_attempts = 1000;
    CHECK_THROWS_WITH(simulate_rus(c), doctest::Contains("non-terminating configuration"));
    c = with_p(0.5);
    c.atom_arrival_rate = 0.0;
    CHECK_THROWS_WITH(simulate_rus(c), doctest::Contains("non-terminating configuration"));
}

TEST_CASE("writers") {
    auto c = with_p(0.5);
    const auto runs = run_rus_batch(c, 5);
    std::ostringstream j, s, e;
    write_runs_jsonl(j, runs);
    int lines = 0;
    for (char ch : j.str()) lines += ch == '\n';
    CHECK(lines == 5);
    write_summary_csv(s, summarize(runs), expected_build_time(c));
    CHECK(s.str().find('\n') != std::string::npos);
    write_events_csv(e, simulate_rus(c, true).events);
    CHECK(e.str().rfind("time_us,edge,kind\n", 0) == 0);
}
