#pragma once

// Atom-photon entanglement bookkeeping and a discrete-event Monte Carlo of
// repeat-until-success growth of a linear cluster of memories.
//
// Time units: photon_slot, reset_time in us; interaction_time and reported
// totals in ms; atom_arrival_rate in 1/ms; gamma_s_memory in rad/us.

#include <array>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hqn/wavepacket.hpp"

namespace hqn {

/// Amplitudes over |00>, |01>, |10>, |11> (first qubit is the left label).
/// Labels: atom m_F = -1 -> 0, m_F = +1 -> 1; photon sigma+ -> 0, sigma- -> 1.
struct TwoQubitState {
    std::array<cplx, 4> amp{};

    double norm() const;
    void validate(double tol = 1e-12) const;
};

enum class BellSign { plus, minus };

struct WilkStates {
    TwoQubitState psi_a;  // atom, first photon: (|-1, s+> +- |+1, s->) / sqrt 2
    TwoQubitState psi_b;  // first photon, second photon: (|s-, s+> +- |s+, s->) / sqrt 2
};

WilkStates wilk_states(BellSign sign = BellSign::plus);

/// 2 |a00 a11 - a01 a10| for a normalized pure state.
double concurrence(const TwoQubitState& s);

/// Outcome probabilities of measuring both qubits in the label basis.
std::array<double, 4> measurement_probabilities(const TwoQubitState& s);

struct RusConfig {
    int n_cavities = 3;
    /// Poisson loading rate per cavity; +inf means every cavity is always loaded.
    double atom_arrival_rate = 2.0;
    double interaction_time = 1.0;
    double photon_slot = 1.0;
    double eta_store = 0.8;
    double eta_detect = 0.5;
    double p_bsm = 0.5;
    double gamma_s_memory = 0.0;
    double reset_time = 10.0;
    int target_chain_length = 5;
    std::uint64_t rng_seed = 1;
    /// Total attempts before the run is declared non-terminating.
    std::uint64_t max_attempts = 100000000;

    void validate() const;
    bool ideal_loading() const { return atom_arrival_rate == std::numeric_limits<double>::infinity(); }
    double success_probability() const;
    double insured_failure_probability() const;
    double loss_probability() const;
};

enum class RusEventKind { wait, success, insured_failure, loss, reset };
std::string to_string(RusEventKind k);

struct RusEvent {
    double time_us = 0.0;  // start of the event
    int edge = 0;
    RusEventKind kind = RusEventKind::success;
};

struct RusRunStats {
    double total_time = 0.0;  // ms
    std::vector<std::uint64_t> attempts_per_edge;
    double mean_coherence_weight = 1.0;
    int edges_completed = 0;
    std::uint64_t seed = 0;
    std::vector<double> memory_ages;  // us at completion, memory 0 first
    std::vector<RusEvent> events;     // only when requested
};

RusRunStats simulate_rus(const RusConfig& cfg, bool record_events = false);

struct BuildTimeEstimate {
    double mean_time = 0.0;  // ms
    double mean_attempts = 0.0;  // whole chain
    double attempts_per_edge = 0.0;
};

/// Always-loaded cavities: (target - 1) / p attempts, each costing one slot
/// plus reset_time on loss.
BuildTimeEstimate expected_build_time(const RusConfig& cfg);

/// Exact mean of exp(-2 gamma_S age) over the chain under always-loaded
/// cavities, from the per-edge Laplace transforms of the attempt process.
double expected_mean_weight(const RusConfig& cfg);

/// Seed of run `index` in a batch derived from `base`.
std::uint64_t run_seed(std::uint64_t base, std::uint64_t index);

struct RusBatchSummary {
    std::size_t runs = 0;
    double mean_attempts_per_edge = 0.0;
    double sem_attempts_per_edge = 0.0;  // standard error of the mean
    double mean_total_time = 0.0;        // ms
    double sem_total_time = 0.0;
    double mean_weight = 0.0;
    double sem_weight = 0.0;
};

/// Runs cfg with seeds run_seed(cfg.rng_seed, i), i in [0, runs), in order.
std::vector<RusRunStats> run_rus_batch(const RusConfig& cfg, std::size_t runs);
RusBatchSummary summarize(const std::vector<RusRunStats>& runs);

namespace serial {
std::vector<RusRunStats> run_rus_batch(const RusConfig& cfg, std::size_t runs);
}

/// One JSON object per line: {seed, total_time_ms, attempts, mean_weight}.
void write_runs_jsonl(std::ostream& os, const std::vector<RusRunStats>& runs);
void write_summary_csv(std::ostream& os, const RusBatchSummary& s, const BuildTimeEstimate& oracle);
void write_events_csv(std::ostream& os, const std::vector<RusEvent>& events);

}  // namespace hqn
