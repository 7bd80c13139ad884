#include "hqn/cavity_source.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

#include "hqn/parallel.hpp"

namespace hqn {

namespace {

void require_finite_nonneg(double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0)
        throw std::invalid_argument(fmt::format("CavityParams: {} must be finite and >= 0 (got {})", name, v));
}

}  // namespace

void CavityParams::validate() const {
    require_finite_nonneg(g, "g");
    require_finite_nonneg(kappa, "kappa");
    require_finite_nonneg(gamma, "gamma");
    require_finite_nonneg(t1, "t1");
    require_finite_nonneg(t2, "t2");
    require_finite_nonneg(h, "h");
    require_finite_nonneg(cavity_length, "cavity_length");
    require_finite_nonneg(mode_waist, "mode_waist");
}

CavityParams CavityParams::with_g(double g_new) const {
    auto q = *this;
    q.g = g_new;
    return q;
}

// ---------------------------------------------------------------------------
// Drive pulses

DrivePulse::DrivePulse(TimeGrid grid, std::vector<double> omega) : grid_(grid), omega_(std::move(omega)) {
    if (omega_.size() != grid_.n) throw std::invalid_argument("DrivePulse: size does not match grid");
    for (double w : omega_)
        if (!std::isfinite(w) || w < 0.0)
            throw std::invalid_argument("DrivePulse: Rabi frequency must be finite and >= 0");
}

double DrivePulse::at(double t) const {
    const double x = (t - grid_.t_start) / grid_.dt;
    if (x <= 0.0) return omega_.front();
    if (x >= static_cast<double>(grid_.n - 1)) return omega_.back();
    const auto i = static_cast<std::size_t>(x);
    const double f = x - static_cast<double>(i);
    return (1.0 - f) * omega_[i] + f * omega_[i + 1];
}

double DrivePulse::peak() const { return *std::max_element(omega_.begin(), omega_.end()); }

DrivePulse DrivePulse::linear_ramp(const TimeGrid& grid, double t_on, double ramp, double omega_max) {
    std::vector<double> w(grid.n);
    for (std::size_t i = 0; i < grid.n; ++i) {
        const double x = (grid.at(i) - t_on) / ramp;
        w[i] = omega_max * std::clamp(x, 0.0, 1.0);
    }
    return {grid, std::move(w)};
}

DrivePulse DrivePulse::smooth_ramp(const TimeGrid& grid, double t_on, double ramp, double omega_max) {
    std::vector<double> w(grid.n);
    for (std::size_t i = 0; i < grid.n; ++i) {
        const double x = std::clamp((grid.at(i) - t_on) / ramp, 0.0, 1.0);
        const double s = std::sin(0.5 * kPi * x);
        w[i] = omega_max * s * s;
    }
    return {grid, std::move(w)};
}

// ---------------------------------------------------------------------------
// Closed-form figures of merit

double emission_bound(const CavityParams& p) {
    p.validate();
    const double g2 = p.g * p.g;
    if (g2 == 0.0) return 0.0;
    return g2 / (p.gamma * p.kappa + g2);
}

double emission_probability(const CavityParams& p) {
    p.validate();
    const double mirrors = p.t1 + p.t2 + 2.0 * p.h;
    if (!(mirrors > 0.0)) throw std::domain_error("emission_probability: no output channel");
    return (p.t2 / mirrors) * emission_bound(p);
}

double cooperativity(const CavityParams& p) {
    p.validate();
    if (p.kappa == 0.0 || p.gamma == 0.0) throw std::domain_error("undefined cooperativity: kappa and gamma must be > 0");
    return p.g * p.g / (2.0 * p.kappa * p.gamma);
}

double kappa_from_mirrors(const CavityParams& p) {
    p.validate();
    if (!(p.cavity_length > 0.0)) throw std::domain_error("kappa_from_mirrors: cavity length must be > 0");
    return kSpeedOfLightUmPerUs * (p.t1 + p.t2 + 2.0 * p.h) / (4.0 * p.cavity_length);
}

namespace {

SweepRow sweep_row(const CavityParams& base, double t2) {
    if (!(t2 > 0.0)) throw std::invalid_argument("sweep_asymmetry: T2 values must be > 0");
    auto q = base;
    q.t2 = t2;
    q.kappa = kappa_from_mirrors(q);
    return {t2, q.kappa, emission_probability(q), cooperativity(q)};
}

void check_sweep_input(std::span<const double> t2_values) {
    if (t2_values.empty()) throw std::invalid_argument("sweep_asymmetry: no T2 values");
}

}  // namespace

std::vector<SweepRow> sweep_asymmetry(const CavityParams& base, std::span<const double> t2_values) {
    check_sweep_input(t2_values);
    std::vector<SweepRow> rows(t2_values.size());
    parallel_for_each_index(rows.size(), [&](std::size_t i) { rows[i] = sweep_row(base, t2_values[i]); });
    return rows;
}

std::vector<SweepRow> serial::sweep_asymmetry(const CavityParams& base, std::span<const double> t2_values) {
    check_sweep_input(t2_values);
    std::vector<SweepRow> rows;
    rows.reserve(t2_values.size());
    for (double t2 : t2_values) rows.push_back(sweep_row(base, t2));
    return rows;
}

// ---------------------------------------------------------------------------
// Single-excitation V-STIRAP dynamics

namespace {

struct AtomState {
    cplx cu, ce, cg;
    double lost_cavity = 0.0;  // integral of 2 kappa |c_g|^2
    double lost_spont = 0.0;   // integral of 2 gamma |c_e|^2
};

struct RunResult {
    std::vector<cplx> cavity;  // c_g at grid points
    double p_emit = 0.0;
    double p_spont = 0.0;
    double p_residual = 0.0;
    double end_population = 0.0;
};

class VstirapSystem {
public:
    VstirapSystem(const CavityParams& p, double detuning)
        : g_(p.g), kappa_(p.kappa), gamma_(p.gamma), decay_e_(p.gamma, detuning) {}

    AtomState rhs(const AtomState& s, double omega) const {
        constexpr cplx I(0.0, 1.0);
        AtomState d;
        d.cu = -I * (0.5 * omega) * s.ce;
        d.ce = -decay_e_ * s.ce - I * (0.5 * omega) * s.cu - I * g_ * s.cg;
        d.cg = -kappa_ * s.cg - I * g_ * s.ce;
        d.lost_cavity = 2.0 * kappa_ * std::norm(s.cg);
        d.lost_spont = 2.0 * gamma_ * std::norm(s.ce);
        return d;
    }

    RunResult run(const DrivePulse& drive, std::size_t substeps) const {
        const auto& grid = drive.grid();
        const auto omega = drive.omega();
        const double h = grid.dt / static_cast<double>(substeps);

        RunResult out;
        out.cavity.resize(grid.n);
        AtomState s{{1.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}};
        out.cavity[0] = s.cg;

        auto axpy = [](const AtomState& a, double f, const AtomState& k) {
            return AtomState{a.cu + f * k.cu, a.ce + f * k.ce, a.cg + f * k.cg,
                             a.lost_cavity + f * k.lost_cavity, a.lost_spont + f * k.lost_spont};
        };

        for (std::size_t i = 0; i + 1 < grid.n; ++i) {
            const double w0 = omega[i];
            const double slope = (omega[i + 1] - omega[i]) / static_cast<double>(substeps);
            for (std::size_t k = 0; k < substeps; ++k) {
                const double wa = w0 + slope * static_cast<double>(k);
                const double wm = wa + 0.5 * slope;
                const double wb = wa + slope;
                const auto k1 = rhs(s, wa);
                const auto k2 = rhs(axpy(s, 0.5 * h, k1), wm);
                const auto k3 = rhs(axpy(s, 0.5 * h, k2), wm);
                const auto k4 = rhs(axpy(s, h, k3), wb);
                s.cu += (h / 6.0) * (k1.cu + 2.0 * k2.cu + 2.0 * k3.cu + k4.cu);
                s.ce += (h / 6.0) * (k1.ce + 2.0 * k2.ce + 2.0 * k3.ce + k4.ce);
                s.cg += (h / 6.0) * (k1.cg + 2.0 * k2.cg + 2.0 * k3.cg + k4.cg);
                s.lost_cavity += (h / 6.0) * (k1.lost_cavity + 2.0 * k2.lost_cavity + 2.0 * k3.lost_cavity + k4.lost_cavity);
                s.lost_spont += (h / 6.0) * (k1.lost_spont + 2.0 * k2.lost_spont + 2.0 * k3.lost_spont + k4.lost_spont);
            }
            out.cavity[i + 1] = s.cg;
        }
        out.p_emit = s.lost_cavity;
        out.p_spont = s.lost_spont;
        out.end_population = std::norm(s.ce) + std::norm(s.cg);
        out.p_residual = std::norm(s.cu) + out.end_population;
        return out;
    }

    double fastest_rate(double omega_max, double detuning) const {
        return kappa_ + gamma_ + std::abs(detuning) + g_ + 0.5 * omega_max;
    }

private:
    double g_, kappa_, gamma_;
    cplx decay_e_;
};

}  // namespace

EmissionRecord simulate_vstirap(const CavityParams& p, const DrivePulse& drive, double detuning,
                                const VstirapOptions& opt) {
    p.validate();
    if (!std::isfinite(detuning)) throw std::invalid_argument("simulate_vstirap: detuning must be finite");
    const auto& grid = drive.grid();
    if (drive.omega().size() != grid.n || grid.n < 2) throw std::invalid_argument("simulate_vstirap: malformed drive");

    const VstirapSystem sys(p, detuning);
    const double rate = sys.fastest_rate(drive.peak(), detuning);
    auto m = std::max<std::size_t>(opt.min_substeps,
                                   static_cast<std::size_t>(std::ceil(grid.dt * rate / opt.step_scale)));

    RunResult coarse = sys.run(drive, m);
    RunResult fine = sys.run(drive, 2 * m);
    double delta = std::abs(fine.p_emit - coarse.p_emit);
    while (delta > opt.tolerance) {
        if (4 * m > opt.max_substeps)
            throw std::runtime_error(fmt::format(
                "simulate_vstirap: not converged (p_emit changes by {:.3g} at {} substeps per grid step, tolerance {:.3g})",
                delta, 2 * m, opt.tolerance));
        m *= 2;
        coarse = std::move(fine);
        fine = sys.run(drive, 2 * m);
        delta = std::abs(fine.p_emit - coarse.p_emit);
    }

    if (fine.end_population > opt.max_end_population)
        throw std::invalid_argument(fmt::format(
            "simulate_vstirap: window ends with excited+cavity population {:.3g}; extend the drive grid",
            fine.end_population));

    const double out_coupling = std::sqrt(2.0 * p.kappa);
    for (auto& c : fine.cavity) c *= out_coupling;

    EmissionRecord rec;
    rec.photon = PhotonWavepacket(grid, std::move(fine.cavity));
    rec.p_emit = fine.p_emit;
    rec.p_spont = fine.p_spont;
    rec.p_residual = fine.p_residual;
    rec.substeps = 2 * m;
    rec.convergence_delta = delta;
    rec.final_cavity_population = fine.end_population;
    return rec;
}

// ---------------------------------------------------------------------------
// Drive reverse engineering
//
// With Omega real, c_u = u and c_g = -m stay real while c_e = -i x, giving
//   x = (m' + kappa m)/g,  Omega = 2 (x' + gamma x + g m)/u,
// and u^2 follows from the populations plus the integrated decay.

DrivePulse shape_drive_pulse(const CavityParams& p, const PhotonWavepacket& target, const ShapingOptions& opt) {
    p.validate();
    if (!(p.g > 0.0) || !(p.kappa > 0.0)) throw std::invalid_argument("shape_drive_pulse: need g > 0 and kappa > 0");
    const double p_target = target.norm();
    if (!(p_target > 0.0)) throw std::invalid_argument("shape_drive_pulse: empty target");
    const double bound = emission_bound(p);
    if (p_target > bound)
        throw std::domain_error(fmt::format("shape_drive_pulse: target norm {:.6g} exceeds emission bound {:.6g}",
                                            p_target, bound));

    const auto& grid = target.grid();
    const std::size_t n = grid.n;
    const double dt = grid.dt;
    const double scale = 1.0 / std::sqrt(2.0 * p.kappa);

    std::vector<double> m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = std::abs(target[i]) * scale;

    auto at = [&](std::ptrdiff_t i) {
        return (i < 0 || i >= static_cast<std::ptrdiff_t>(n)) ? 0.0 : m[static_cast<std::size_t>(i)];
    };

    std::vector<double> omega(n, 0.0);
    double lost = 0.0;     // integral of 2 kappa m^2 + 2 gamma x^2 up to t_i
    double emitted = 0.0;  // integral of 2 kappa m^2 up to t_i
    double prev_rate = 0.0, prev_emit_rate = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::ptrdiff_t>(i);
        const double dm = (at(k + 1) - at(k - 1)) / (2.0 * dt);
        const double d2m = (at(k + 1) - 2.0 * at(k) + at(k - 1)) / (dt * dt);
        const double x = (dm + p.kappa * m[i]) / p.g;
        const double dx = (d2m + p.kappa * dm) / p.g;

        const double emit_rate = 2.0 * p.kappa * m[i] * m[i];
        const double rate = emit_rate + 2.0 * p.gamma * x * x;
        if (i > 0) {
            lost += 0.5 * dt * (rate + prev_rate);
            emitted += 0.5 * dt * (emit_rate + prev_emit_rate);
        }
        prev_rate = rate;
        prev_emit_rate = emit_rate;

        const double u2 = 1.0 - x * x - m[i] * m[i] - lost;
        const double remaining = (p_target - emitted) / p_target;
        if (u2 < opt.min_ground_population) {
            if (remaining > opt.remaining_tolerance)
                throw std::domain_error(fmt::format(
                    "shape_drive_pulse: target not adiabatically reachable (ground population {:.3g} at t = {:.4g} us "
                    "with {:.3g} of the photon still to emit)",
                    u2, grid.at(i), remaining));
            continue;
        }
        const double w = 2.0 * (dx + p.gamma * x + p.g * m[i]) / std::sqrt(u2);
        if (!std::isfinite(w)) throw std::domain_error("shape_drive_pulse: non-finite drive");
        omega[i] = std::max(0.0, w);
    }
    return {grid, std::move(omega)};
}

// ---------------------------------------------------------------------------
// Coupling-strength distributions

void ModeDistribution::validate() const {
    if (!(g_max > 0.0) || !std::isfinite(g_max)) throw std::invalid_argument("ModeDistribution: g_max must be > 0");
    if (bins.empty()) throw std::invalid_argument("ModeDistribution: no bins");
    double total = 0.0;
    for (const auto& b : bins) {
        if (!(b.weight >= 0.0)) throw std::invalid_argument("ModeDistribution: negative weight");
        if (!(b.g > 0.0) || b.g > g_max * (1.0 + 1e-12))
            throw std::invalid_argument("ModeDistribution: bin g outside (0, g_max]");
        total += b.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("ModeDistribution: weights must sum to 1");
}

ModeDistribution ModeDistribution::delta(double g) {
    ModeDistribution d{g, {{g, 1.0}}, Rule::delta};
    d.validate();
    return d;
}

ModeDistribution ModeDistribution::transverse_gaussian(double g_max, std::size_t n_bins, double r_cut_over_w) {
    if (n_bins == 0) throw std::invalid_argument("ModeDistribution: need at least one bin");
    if (!(r_cut_over_w > 0.0)) throw std::invalid_argument("ModeDistribution: cut radius must be > 0");
    // Area between coupling levels a < b is pi w^2 ln(b/a); the area-weighted
    // mean coupling inside that annulus is (b - a)/ln(b/a).
    const double g_min = g_max * std::exp(-r_cut_over_w * r_cut_over_w);
    const double width = (g_max - g_min) / static_cast<double>(n_bins);
    ModeDistribution d;
    d.g_max = g_max;
    d.rule = Rule::transverse_gaussian;
    double total = 0.0;
    for (std::size_t k = 0; k < n_bins; ++k) {
        const double a = g_min + width * static_cast<double>(k);
        const double b = a + width;
        const double area = std::log(b / a);
        d.bins.push_back({(b - a) / area, area});
        total += area;
    }
    for (auto& b : d.bins) b.weight /= total;
    d.validate();
    return d;
}

namespace {

ModeAverageResult finish_average(const TimeGrid& grid, std::vector<double> intensity,
                                 std::vector<ModeBinResult> bins) {
    const double area = trapezoid(intensity, grid.dt);
    if (!(area > 0.0)) throw std::domain_error("average_over_mode: no emission in any bin");
    std::vector<cplx> amp(grid.n);
    for (std::size_t i = 0; i < grid.n; ++i) amp[i] = std::sqrt(intensity[i] / area);
    ModeAverageResult r;
    r.photon = PhotonWavepacket(grid, std::move(amp));
    for (const auto& b : bins) r.mean_p_emit += b.weight * b.p_emit;
    r.bins = std::move(bins);
    return r;
}

}  // namespace

ModeAverageResult average_over_mode(const CavityParams& p, const DrivePulse& drive, const ModeDistribution& dist,
                                    const VstirapOptions& opt) {
    dist.validate();
    const auto& grid = drive.grid();
    std::vector<EmissionRecord> records(dist.bins.size());
    parallel_for_each_index(records.size(), [&](std::size_t k) {
        records[k] = simulate_vstirap(p.with_g(dist.bins[k].g), drive, 0.0, opt);
    });

    std::vector<double> intensity(grid.n, 0.0);
    std::vector<ModeBinResult> bins;
    for (std::size_t k = 0; k < records.size(); ++k) {
        const double w = dist.bins[k].weight;
        const auto amp = records[k].photon.amplitude();
        for (std::size_t i = 0; i < grid.n; ++i) intensity[i] += w * std::norm(amp[i]);
        bins.push_back({dist.bins[k].g, w, records[k].p_emit});
    }
    return finish_average(grid, std::move(intensity), std::move(bins));
}

ModeAverageResult serial::average_over_mode(const CavityParams& p, const DrivePulse& drive,
                                            const ModeDistribution& dist, const VstirapOptions& opt) {
    dist.validate();
    const auto& grid = drive.grid();
    std::vector<double> intensity(grid.n, 0.0);
    std::vector<ModeBinResult> bins;
    for (const auto& b : dist.bins) {
        const auto rec = simulate_vstirap(p.with_g(b.g), drive, 0.0, opt);
        const auto amp = rec.photon.amplitude();
        for (std::size_t i = 0; i < grid.n; ++i) intensity[i] += b.weight * std::norm(amp[i]);
        bins.push_back({b.g, b.weight, rec.p_emit});
    }
    return finish_average(grid, std::move(intensity), std::move(bins));
}

}  // namespace hqn
