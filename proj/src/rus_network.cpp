#include "hqn/rus_network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "hqn/numfmt.hpp"
#include "hqn/parallel.hpp"

namespace hqn {

double TwoQubitState::norm() const {
    double s = 0.0;
    for (const auto& a : amp) s += std::norm(a);
    return s;
}

void TwoQubitState::validate(double tol) const {
    if (std::abs(norm() - 1.0) > tol)
        throw std::invalid_argument(fmt::format("TwoQubitState: not normalized (norm {:.15g})", norm()));
}

WilkStates wilk_states(BellSign sign) {
    const double r = 1.0 / std::sqrt(2.0);
    const double s = sign == BellSign::plus ? r : -r;
    WilkStates w;
    // |m_F=-1, sigma+> = |00>, |m_F=+1, sigma-> = |11>
    w.psi_a.amp = {cplx(r), cplx(0.0), cplx(0.0), cplx(s)};
    // |sigma-, sigma+> = |10>, |sigma+, sigma-> = |01>
    w.psi_b.amp = {cplx(0.0), cplx(s), cplx(r), cplx(0.0)};
    return w;
}

double concurrence(const TwoQubitState& s) {
    s.validate(1e-9);
    return 2.0 * std::abs(s.amp[0] * s.amp[3] - s.amp[1] * s.amp[2]);
}

std::array<double, 4> measurement_probabilities(const TwoQubitState& s) {
    s.validate(1e-9);
    return {std::norm(s.amp[0]), std::norm(s.amp[1]), std::norm(s.amp[2]), std::norm(s.amp[3])};
}

// ---------------------------------------------------------------------------

void RusConfig::validate() const {
    auto prob = [](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(fmt::format("RusConfig: {} must be in [0, 1]", name));
    };
    prob(eta_store, "eta_store");
    prob(eta_detect, "eta_detect");
    prob(p_bsm, "p_bsm");
    if (n_cavities < 2) throw std::invalid_argument("RusConfig: n_cavities must be >= 2");
    if (target_chain_length < 2) throw std::invalid_argument("RusConfig: target_chain_length must be >= 2");
    if (!(atom_arrival_rate >= 0.0)) throw std::invalid_argument("RusConfig: atom_arrival_rate must be >= 0");
    if (!ideal_loading() && !(interaction_time > 0.0 && std::isfinite(interaction_time)))
        throw std::invalid_argument("RusConfig: interaction_time must be > 0");
    if (!(photon_slot > 0.0 && std::isfinite(photon_slot)))
        throw std::invalid_argument("RusConfig: photon_slot must be > 0");
    if (!(gamma_s_memory >= 0.0 && std::isfinite(gamma_s_memory)))
        throw std::invalid_argument("RusConfig: gamma_s_memory must be >= 0");
    if (!(reset_time >= 0.0 && std::isfinite(reset_time)))
        throw std::invalid_argument("RusConfig: reset_time must be >= 0");
    if (max_attempts == 0) throw std::invalid_argument("RusConfig: max_attempts must be >= 1");
}

double RusConfig::success_probability() const {
    return eta_store * eta_store * eta_detect * eta_detect * p_bsm;
}

double RusConfig::insured_failure_probability() const {
    return eta_store * eta_store * eta_detect * eta_detect * (1.0 - p_bsm);
}

double RusConfig::loss_probability() const { return 1.0 - eta_store * eta_store * eta_detect * eta_detect; }

std::string to_string(RusEventKind k) {
    switch (k) {
        case RusEventKind::wait: return "wait";
        case RusEventKind::success: return "success";
        case RusEventKind::insured_failure: return "insured_failure";
        case RusEventKind::loss: return "loss";
        case RusEventKind::reset: return "reset";
    }
    return "unknown";
}

std::uint64_t run_seed(std::uint64_t base, std::uint64_t index) {
    // splitmix64 finalizer over base + golden-ratio stride
    std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

namespace {

/// Uniform in [0, 1) from the top 53 bits, identical on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

private:
    std::mt19937_64 gen_;
};

/// Poisson atom arrivals per cavity, each atom present for a fixed dwell.
class Loading {
public:
    Loading(const RusConfig& cfg, Rng& rng)
        : ideal_(cfg.ideal_loading()), rate_us_(cfg.atom_arrival_rate * 1e-3), dwell_us_(cfg.interaction_time * 1e3),
          rng_(rng) {
        if (ideal_) return;
        if (!(rate_us_ > 0.0))
            throw std::runtime_error("simulate_rus: non-terminating configuration (no atoms ever arrive)");
        cavities_.resize(static_cast<std::size_t>(cfg.n_cavities));
        for (auto& c : cavities_) c.next_arrival = rng_.exponential(rate_us_);
    }

    /// Earliest time >= t with at least two loaded cavities.
    double ready_at(double t) {
        if (ideal_) return t;
        for (;;) {
            int loaded = 0;
            for (auto& c : cavities_) {
                while (c.next_arrival <= t) {
                    c.loaded_until = std::max(c.loaded_until, c.next_arrival + dwell_us_);
                    c.next_arrival += rng_.exponential(rate_us_);
                }
                if (c.loaded_until > t) ++loaded;
            }
            if (loaded >= 2) return t;
            double next = cavities_.front().next_arrival;
            for (const auto& c : cavities_) next = std::min(next, c.next_arrival);
            t = next;
        }
    }

private:
    struct Cavity {
        double loaded_until = -1.0;
        double next_arrival = 0.0;
    };
    bool ideal_;
    double rate_us_, dwell_us_;
    Rng& rng_;
    std::vector<Cavity> cavities_;
};

RusRunStats simulate_with_seed(const RusConfig& cfg, std::uint64_t seed, bool record_events) {
    cfg.validate();
    Rng rng(seed);
    Loading loading(cfg, rng);
    const double p = cfg.success_probability();
    const double q_i = cfg.insured_failure_probability();

    RusRunStats st;
    st.seed = seed;
    const auto edges = static_cast<std::size_t>(cfg.target_chain_length - 1);
    st.attempts_per_edge.assign(edges, 0);
    std::vector<double> birth(edges + 1, 0.0);
    auto log = [&](double t, std::size_t edge, RusEventKind k) {
        if (record_events) st.events.push_back({t, static_cast<int>(edge), k});
    };

    double t = 0.0;
    std::uint64_t total_attempts = 0;
    for (std::size_t e = 0; e < edges; ++e) {
        birth[e + 1] = t;
        for (;;) {
            const double ready = loading.ready_at(t);
            if (ready > t) {
                log(t, e, RusEventKind::wait);
                t = ready;
            }
            if (++total_attempts > cfg.max_attempts)
                throw std::runtime_error(fmt::format(
                    "simulate_rus: non-terminating configuration (no success after {} attempts)", cfg.max_attempts));
            ++st.attempts_per_edge[e];
            const double u = rng.uniform();
            const double start = t;
            t += cfg.photon_slot;
            if (u < p) {
                log(start, e, RusEventKind::success);
                break;
            }
            if (u < p + q_i) {
                // Failure with insurance: both memories keep state and age.
                log(start, e, RusEventKind::insured_failure);
                continue;
            }
            log(start, e, RusEventKind::loss);
            log(t, e, RusEventKind::reset);
            t += cfg.reset_time;
            birth[e + 1] = t;
        }
    }

    st.edges_completed = static_cast<int>(edges);
    st.total_time = t * 1e-3;
    st.memory_ages.resize(edges + 1);
    double w = 0.0;
    for (std::size_t k = 0; k <= edges; ++k) {
        st.memory_ages[k] = t - birth[k];
        w += std::exp(-2.0 * cfg.gamma_s_memory * st.memory_ages[k]);
    }
    st.mean_coherence_weight = w / static_cast<double>(edges + 1);
    return st;
}

template <class ForEach>
std::vector<RusRunStats> batch_impl(const RusConfig& cfg, std::size_t runs, ForEach&& for_each) {
    cfg.validate();
    std::vector<RusRunStats> out(runs);
    for_each(runs, [&](std::size_t i) { out[i] = simulate_with_seed(cfg, run_seed(cfg.rng_seed, i), false); });
    return out;
}

void mean_sem(const std::vector<double>& x, double& mean, double& sem) {
    const auto n = static_cast<double>(x.size());
    mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    sem = x.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
}

}  // namespace

RusRunStats simulate_rus(const RusConfig& cfg, bool record_events) {
    return simulate_with_seed(cfg, cfg.rng_seed, record_events);
}

BuildTimeEstimate expected_build_time(const RusConfig& cfg) {
    cfg.validate();
    const double p = cfg.success_probability();
    if (!(p > 0.0)) throw std::domain_error("expected_build_time: success probability is zero");
    const double edges = cfg.target_chain_length - 1;
    BuildTimeEstimate b;
    b.attempts_per_edge = 1.0 / p;
    b.mean_attempts = edges / p;
    b.mean_time = b.mean_attempts * (cfg.photon_slot + cfg.loss_probability() * cfg.reset_time) * 1e-3;
    return b;
}

double expected_mean_weight(const RusConfig& cfg) {
    cfg.validate();
    const double p = cfg.success_probability();
    if (!(p > 0.0)) throw std::domain_error("expected_mean_weight: success probability is zero");
    const double q_i = cfg.insured_failure_probability();
    const double q_l = cfg.loss_probability();
    const double b = 2.0 * cfg.gamma_s_memory;
    const double es = std::exp(-b * cfg.photon_slot);
    const double esr = std::exp(-b * (cfg.photon_slot + cfg.reset_time));
    // E exp(-b D) for one edge, and for its final loss-free run.
    const double m_edge = p * es / (1.0 - q_i * es - q_l * esr);
    const double m_tail = (1.0 - q_i) * es / (1.0 - q_i * es);
    const int n = cfg.target_chain_length;
    double sum = 0.0, pw = 1.0;
    for (int k = 0; k <= n - 2; ++k) {
        sum += pw;
        pw *= m_edge;
    }
    return (std::pow(m_edge, n - 1) + m_tail * sum) / n;
}

std::vector<RusRunStats> run_rus_batch(const RusConfig& cfg, std::size_t runs) {
    return batch_impl(cfg, runs, [](std::size_t n, auto&& fn) { parallel_for_each_index(n, fn); });
}

namespace serial {
std::vector<RusRunStats> run_rus_batch(const RusConfig& cfg, std::size_t runs) {
    return batch_impl(cfg, runs, [](std::size_t n, auto&& fn) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
    });
}
}  // namespace serial

RusBatchSummary summarize(const std::vector<RusRunStats>& runs) {
    if (runs.empty()) throw std::invalid_argument("summarize: no runs");
    std::vector<double> att, time, w;
    for (const auto& r : runs) {
        std::uint64_t a = 0;
        for (auto x : r.attempts_per_edge) a += x;
        att.push_back(static_cast<double>(a) / static_cast<double>(r.attempts_per_edge.size()));
        time.push_back(r.total_time);
        w.push_back(r.mean_coherence_weight);
    }
    RusBatchSummary s;
    s.runs = runs.size();
    mean_sem(att, s.mean_attempts_per_edge, s.sem_attempts_per_edge);
    mean_sem(time, s.mean_total_time, s.sem_total_time);
    mean_sem(w, s.mean_weight, s.sem_weight);
    return s;
}

void write_runs_jsonl(std::ostream& os, const std::vector<RusRunStats>& runs) {
    for (const auto& r : runs) {
        os << "{\"seed\":" << r.seed << ",\"total_time_ms\":" << num(r.total_time) << ",\"attempts\":[";
        for (std::size_t i = 0; i < r.attempts_per_edge.size(); ++i)
            os << (i ? "," : "") << r.attempts_per_edge[i];
        os << "],\"mean_weight\":" << num(r.mean_coherence_weight) << "}\n";
    }
}

void write_summary_csv(std::ostream& os, const RusBatchSummary& s, const BuildTimeEstimate& oracle) {
    os << "runs,mean_attempts_per_edge,sem_attempts_per_edge,mean_total_time_ms,sem_total_time_ms,mean_weight,"
          "sem_weight,oracle_attempts_per_edge,oracle_total_time_ms\n";
    os << s.runs << ',' << num(s.mean_attempts_per_edge) << ',' << num(s.sem_attempts_per_edge) << ','
       << num(s.mean_total_time) << ',' << num(s.sem_total_time) << ',' << num(s.mean_weight) << ','
       << num(s.sem_weight) << ',' << num(oracle.attempts_per_edge) << ',' << num(oracle.mean_time) << '\n';
}

void write_events_csv(std::ostream& os, const std::vector<RusEvent>& events) {
    os << "time_us,edge,kind\n";
    for (const auto& e : events) os << num(e.time_us) << ',' << e.edge << ',' << to_string(e.kind) << '\n';
}

}  // namespace hqn
