#pragma once

// Weak-probe Maxwell-Bloch model of slow light and light storage in a
// Lambda-type vapour cell.
//
// In the retarded frame t_r = t - z/c the probe envelope E(z, t), optical
// polarization P and spin coherence S obey
//
//   dP/dt = -(gamma_P + i Delta) P + i E + i Omega_c(t) S
//   dS/dt = -gamma_S S + i Omega_c(t) P          (gamma_S: effective spin decay)
//   dE/dz = i (alpha gamma_P / 2) P
//
// so that with Omega_c = 0 the intensity follows Beer's law exp(-alpha z) and
// with constant Omega_c the group velocity is 2 Omega_c^2 / (alpha gamma_P).
// The excitation stored per unit length is (alpha gamma_P / 2)(|P|^2 + |S|^2).
//
// Units: z and L in cm, alpha in 1/cm, t in us, rates in rad/us, diffusion in
// cm^2/us, wavevector mismatch in 1/cm.

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hqn/wavepacket.hpp"

namespace hqn {

struct LambdaMedium {
    double length = 0.0;              // L
    double alpha = 0.0;               // resonant absorption coefficient
    double gamma_p_natural = 0.0;     // optical coherence decay without buffer gas
    double collision_rate = 0.0;      // pressure broadening added to gamma_P
    double gamma_s = 0.0;             // spin-wave decay
    double diffusion_const = 0.0;     // D
    double wavevector_mismatch = 0.0; // dk = k_c - k_s
    double detuning = 0.0;            // one-photon detuning Delta

    void validate() const;
    double optical_depth() const { return alpha * length; }
    double gamma_p() const { return gamma_p_natural + collision_rate; }
    /// gamma_S + D dk^2: spin-wave decay including motional dephasing.
    double gamma_s_eff() const { return gamma_s + diffusion_const * wavevector_mismatch * wavevector_mismatch; }
};

enum class RetrievalDirection { co, counter };

std::string to_string(RetrievalDirection d);
RetrievalDirection parse_direction(const std::string& s);

/// Control Rabi frequency program with optional write / hold / read phases.
struct ControlSchedule {
    TimeGrid grid;
    std::vector<double> omega_c;
    double hold_time = 0.0;
    double ramp_time = 0.0;
    RetrievalDirection retrieval_direction = RetrievalDirection::co;

    /// Start of the switch-off ramp. Input light must have entered the cell by
    /// then. Absent for a schedule that never stores.
    std::optional<double> write_end;
    /// Middle of the hold: where the spin wave is sampled and, for counter
    /// retrieval, mirrored.
    std::optional<double> hold_midpoint;
    /// End of the switch-off ramp (start of the hold).
    std::optional<double> store_time;

    void validate() const;
    double omega_at(double t) const;
    double omega_max() const;
    bool stores() const { return hold_midpoint.has_value(); }

    /// Constant control over the whole grid (slow light, no storage).
    static ControlSchedule constant(const TimeGrid& grid, double omega);

    struct StorageSpec {
        double omega_write = 0.0;
        double omega_read = 0.0;
        double switch_off = 0.0;  // start of the ramp down
        double ramp_time = 0.1;
        double hold_time = 0.0;
        double read_duration = 3.0;  // after the read ramp completes
        double dt = 1e-3;
        RetrievalDirection direction = RetrievalDirection::co;
    };
    /// Write at constant omega_write from t = 0, raised-cosine ramp to zero,
    /// hold, raised-cosine ramp to omega_read, read.
    static ControlSchedule storage(const StorageSpec& spec);
};

struct SpinWave {
    std::vector<double> z;
    std::vector<cplx> amplitude;  // cm^(-1/2)

    double norm() const;
    /// Fraction of the norm in z < L/2.
    double front_half_fraction() const;
    /// S(z) -> S(L - z), with L the last sample position.
    SpinWave mirrored() const;
};

struct OptimalSpinWave {
    SpinWave wave;            // unit norm, real, peaked at the exit z = L
    double efficiency = 0.0;  // forward readout efficiency in the adiabatic limit
};

/// Spin wave with the highest forward readout efficiency, from the adiabatic
/// readout kernel k(u, u') = (a/2) e^{-a(u + u')/2} I0(a sqrt(u u')), a = alpha L / 2,
/// u the distance from the exit in units of L. gamma_S is ignored.
OptimalSpinWave optimal_readout_spin_wave(const LambdaMedium& m, std::size_t nz = 400);
/// Forward readout efficiency of `s` (cm^(-1/2) amplitude, norm = stored
/// fraction) under the same adiabatic kernel.
double adiabatic_readout_efficiency(const LambdaMedium& m, const SpinWave& s, std::size_t nz = 400);

/// Downsampled |E(z, t_r)|^2 record, row-major in z.
struct FieldMap {
    std::vector<double> z;
    std::vector<double> t;
    std::vector<double> intensity;  // intensity[iz * t.size() + it]

    double at(std::size_t iz, std::size_t it) const { return intensity[iz * t.size() + it]; }
};

struct PropagationResult {
    PhotonWavepacket transmitted;  // field leaving the cell before the hold midpoint
    PhotonWavepacket retrieved;    // field leaving the cell after it (empty if nothing stored)
    double input_norm = 0.0;
    double leaked_fraction = 0.0;
    double stored_fraction = 0.0;  // spin-wave norm at the end of the switch-off ramp
    double efficiency = 0.0;       // retrieved energy / input energy
    FieldMap field_map;
    SpinWave spin_wave_snapshot;   // at the hold midpoint
    RetrievalDirection direction = RetrievalDirection::co;
    bool stored = false;

    // Resolution used and, when requested, the refined-grid comparison.
    std::size_t nz = 0;
    double dt = 0.0;
    std::optional<double> refined_efficiency;

    double absorbed_fraction() const { return 1.0 - leaked_fraction - stored_fraction; }
};

struct FeasibilityReport {
    double group_velocity = 0.0;
    double lower_margin = 0.0;  // (v_g / L) tau, should be << 1
    double upper_margin = 0.0;  // 1 / (tau v_g sqrt(alpha / L)), should be << 1
    double adiabaticity = 0.0;  // tau d gamma_P, should be >> 1
};

enum class TimeScheme {
    exponential,  // exact 2x2 propagator per step, E linear within a step
    rk4,          // classic RK4, stiff in gamma_P
};

struct PropagateOptions {
    std::size_t nz = 400;
    /// Internal step bound dt <= dt_scale / max rate. The rate is Omega_c max
    /// for the exponential scheme and max(gamma_P, Omega_c) for RK4.
    double dt_scale = 0.02;
    TimeScheme scheme = TimeScheme::exponential;
    /// Re-run at 2 nz and dt / 2 and fail if efficiency moves by more than
    /// convergence_tolerance (relative).
    bool check_convergence = false;
    double convergence_tolerance = 0.01;
    std::size_t map_max_z = 101;
    std::size_t map_max_t = 601;
};

/// 2 |Omega_c|^2 / (alpha gamma_P).
double group_velocity(const LambdaMedium& m, double omega_c);
FeasibilityReport check_feasibility(const LambdaMedium& m, double omega_c, double tau);
/// Control Rabi frequency whose group velocity compresses a pulse of length
/// tau into fill * L.
double fit_control_rabi(const LambdaMedium& m, double tau, double fill = 0.8);

PropagationResult propagate(const LambdaMedium& m, const PhotonWavepacket& input,
                            const ControlSchedule& schedule, const PropagateOptions& opt = {});

/// Field leaving z = L when `spin_wave` is read forward under constant
/// omega_read from t = 0 (no input light).
PhotonWavepacket read_out(const LambdaMedium& m, const SpinWave& spin_wave, double omega_read, double duration,
                          double dt, const PropagateOptions& opt = {});
/// Input photon that writes `target` under constant omega: the conjugated,
/// time-reversed readout of the mirrored target. Its storage efficiency equals
/// the forward readout efficiency of that mirrored spin wave.
PhotonWavepacket matched_input(const LambdaMedium& m, const SpinWave& target, double omega, double duration,
                               double dt, const PropagateOptions& opt = {});

/// Write/read experiment whose input photon is matched to the spin wave that
/// is optimal for counter-propagating readout. The control is a plain step at
/// omega_c for both write and read.
struct MatchedStorage {
    double omega_c = 0.0;
    PhotonWavepacket input;
    ControlSchedule::StorageSpec spec;
    /// Adiabatic-limit efficiencies of the target spin wave.
    double bound_counter = 0.0;
    double bound_co = 0.0;
};
MatchedStorage matched_storage(const LambdaMedium& m, double omega_c, double hold_time, double ramp_time = 0.1,
                               double dt = 2e-3, const PropagateOptions& opt = {});

/// eta0 exp(-2 gamma_S_eff T).
double storage_efficiency_decay(double eta0, const LambdaMedium& m, double hold);

/// Spin wave at the hold midpoint; throws if nothing was stored.
SpinWave spin_wave_profile(const PropagationResult& result);

void write_field_map_csv(std::ostream& os, const FieldMap& map);
void write_spin_wave_csv(std::ostream& os, const SpinWave& s);
/// {eta, leaked, stored, direction, d, gamma_p, gamma_s}
nlohmann::json summary_json(const PropagationResult& r, const LambdaMedium& m);

}  // namespace hqn
