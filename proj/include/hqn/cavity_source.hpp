#pragma once

// Single-photon emission from a Lambda atom in a one-sided cavity driven by
// vacuum-stimulated Raman adiabatic passage.
//
// Rates are angular (rad/us); mirror terms are power fractions (1 ppm = 1e-6);
// cavity geometry in um. The atom starts in |u,0>, the laser drives
// |u,0> <-> |e,0> with Rabi frequency Omega(t) and the cavity couples
// |e,0> <-> |g,1> with strength g.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hqn/wavepacket.hpp"

namespace hqn {

/// Speed of light in um/us.
inline constexpr double kSpeedOfLightUmPerUs = 2.99792458e8;

struct CavityParams {
    double g = 0.0;      // atom-cavity coupling
    double kappa = 0.0;  // cavity field decay
    double gamma = 0.0;  // atomic polarization decay
    double t1 = 0.0;     // input mirror transmittance
    double t2 = 0.0;     // output mirror transmittance
    double h = 0.0;      // scatter loss per mirror
    double cavity_length = 0.0;  // um
    double mode_waist = 0.0;     // um

    /// Throws std::invalid_argument on negative or non-finite fields.
    void validate() const;
    /// Same parameters with g replaced.
    CavityParams with_g(double g_new) const;
};

/// Real non-negative Rabi frequency samples on a grid. Linear in between.
class DrivePulse {
public:
    DrivePulse() = default;
    DrivePulse(TimeGrid grid, std::vector<double> omega);

    const TimeGrid& grid() const { return grid_; }
    std::span<const double> omega() const { return omega_; }
    double at(double t) const;
    double peak() const;

    /// Omega rising linearly from 0 at t_on to omega_max at t_on + ramp, then flat.
    static DrivePulse linear_ramp(const TimeGrid& grid, double t_on, double ramp, double omega_max);
    /// omega_max sin^2(pi/2 (t - t_on)/ramp) rising edge, then flat.
    static DrivePulse smooth_ramp(const TimeGrid& grid, double t_on, double ramp, double omega_max);

private:
    TimeGrid grid_{};
    std::vector<double> omega_;
};

struct EmissionRecord {
    PhotonWavepacket photon;
    double p_emit = 0.0;
    double p_spont = 0.0;
    double p_residual = 0.0;

    // Diagnostics of the step-halving convergence check.
    std::size_t substeps = 0;        // RK4 steps per grid interval actually used
    double convergence_delta = 0.0;  // |p_emit(h) - p_emit(h/2)|
    double final_cavity_population = 0.0;
};

struct VstirapOptions {
    double tolerance = 1e-4;         // allowed p_emit change on step halving
    std::size_t min_substeps = 1;
    std::size_t max_substeps = 4096;
    double step_scale = 0.1;         // initial h * (fastest rate)
    double max_end_population = 1e-4;  // excited + cavity population at the window end
};

/// Mode distribution of coupling strengths; weights sum to 1.
struct ModeDistribution {
    enum class Rule { delta, transverse_gaussian, custom };

    struct Bin {
        double g = 0.0;
        double weight = 0.0;
    };

    double g_max = 0.0;
    std::vector<Bin> bins;
    Rule rule = Rule::custom;

    void validate() const;

    static ModeDistribution delta(double g);
    /// g(r) = g_max exp(-r^2/w^2) for atoms spread uniformly over the
    /// transverse disc r <= r_cut_over_w * w, binned into equal-width g bins
    /// and weighted by the annular area each bin covers.
    static ModeDistribution transverse_gaussian(double g_max, std::size_t n_bins = 20,
                                                double r_cut_over_w = 1.0);
};

struct ModeBinResult {
    double g = 0.0;
    double weight = 0.0;
    double p_emit = 0.0;
};

struct ModeAverageResult {
    /// Weight-averaged intensity normalized to unit area; amplitude = sqrt(I).
    PhotonWavepacket photon;
    std::vector<ModeBinResult> bins;
    double mean_p_emit = 0.0;
};

struct SweepRow {
    double t2 = 0.0;
    double kappa = 0.0;
    double p_emit = 0.0;
    double cooperativity = 0.0;
};

/// [T2/(T1+T2+2H)] * [g^2/(gamma kappa + g^2)].
double emission_probability(const CavityParams& p);
/// The bracketed coupling factor alone, the bound on any emitted norm.
double emission_bound(const CavityParams& p);
/// g^2 / (2 kappa gamma).
double cooperativity(const CavityParams& p);
/// Field decay of a two-mirror standing-wave cavity, c (T1+T2+2H)/(4 L).
double kappa_from_mirrors(const CavityParams& p);

/// One row per T2 in input order; kappa recomputed from the mirrors each time.
std::vector<SweepRow> sweep_asymmetry(const CavityParams& base, std::span<const double> t2_values);

EmissionRecord simulate_vstirap(const CavityParams& p, const DrivePulse& drive, double detuning = 0.0,
                                const VstirapOptions& opt = {});

struct ShapingOptions {
    /// c_u^2 below this while target emission remains is unreachable.
    double min_ground_population = 1e-6;
    /// Target emission still to come, as a fraction of its norm, that makes a
    /// vanishing ground state an error.
    double remaining_tolerance = 1e-3;
};

/// Drive that makes the cavity emit `target` (phase of target ignored).
DrivePulse shape_drive_pulse(const CavityParams& p, const PhotonWavepacket& target,
                             const ShapingOptions& opt = {});

ModeAverageResult average_over_mode(const CavityParams& p, const DrivePulse& drive,
                                    const ModeDistribution& dist, const VstirapOptions& opt = {});

/// Single-threaded references for the OpenMP kernels above.
namespace serial {
std::vector<SweepRow> sweep_asymmetry(const CavityParams& base, std::span<const double> t2_values);
ModeAverageResult average_over_mode(const CavityParams& p, const DrivePulse& drive,
                                    const ModeDistribution& dist, const VstirapOptions& opt = {});
}  // namespace serial

}  // namespace hqn
