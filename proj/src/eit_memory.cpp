#include "hqn/eit_memory.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <fmt/format.h>

#include "hqn/numfmt.hpp"

namespace hqn {

void LambdaMedium::validate() const {
    auto check = [](double v, const char* name) {
        if (!std::isfinite(v) || v < 0.0)
            throw std::invalid_argument(fmt::format("LambdaMedium: {} must be finite and >= 0 (got {})", name, v));
    };
    check(alpha, "alpha");
    check(gamma_p_natural, "gamma_p_natural");
    check(collision_rate, "collision_rate");
    check(gamma_s, "gamma_s");
    check(diffusion_const, "diffusion_const");
    if (!std::isfinite(wavevector_mismatch)) throw std::invalid_argument("LambdaMedium: wavevector_mismatch must be finite");
    if (!std::isfinite(detuning)) throw std::invalid_argument("LambdaMedium: detuning must be finite");
    if (!(length > 0.0) || !std::isfinite(length)) throw std::invalid_argument("LambdaMedium: length must be > 0");
    if (!(gamma_p() > 0.0)) throw std::invalid_argument("LambdaMedium: gamma_P must be > 0");
}

std::string to_string(RetrievalDirection d) { return d == RetrievalDirection::co ? "co" : "counter"; }

RetrievalDirection parse_direction(const std::string& s) {
    if (s == "co") return RetrievalDirection::co;
    if (s == "counter") return RetrievalDirection::counter;
    throw std::invalid_argument("retrieval direction must be 'co' or 'counter', got '" + s + "'");
}

// ---------------------------------------------------------------------------
// Control schedules

void ControlSchedule::validate() const {
    if (omega_c.size() != grid.n) throw std::invalid_argument("ControlSchedule: omega_c does not match grid");
    for (double w : omega_c)
        if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("ControlSchedule: omega_c must be finite and >= 0");
    if (!(hold_time >= 0.0)) throw std::invalid_argument("ControlSchedule: hold_time must be >= 0");
    if (!(ramp_time >= 0.0)) throw std::invalid_argument("ControlSchedule: ramp_time must be >= 0");
    if (hold_midpoint) {
        if (!write_end || !store_time) throw std::invalid_argument("ControlSchedule: storage phases incomplete");
        if (!(grid.t_start <= *write_end && *write_end <= *store_time && *store_time <= *hold_midpoint &&
              *hold_midpoint < grid.t_end()))
            throw std::invalid_argument("ControlSchedule: write, hold and read phases out of order");
    }
}

double ControlSchedule::omega_at(double t) const {
    const double x = (t - grid.t_start) / grid.dt;
    if (x <= 0.0) return omega_c.front();
    if (x >= static_cast<double>(grid.n - 1)) return omega_c.back();
    const auto i = static_cast<std::size_t>(x);
    const double f = x - static_cast<double>(i);
    return (1.0 - f) * omega_c[i] + f * omega_c[i + 1];
}

double ControlSchedule::omega_max() const { return *std::max_element(omega_c.begin(), omega_c.end()); }

ControlSchedule ControlSchedule::constant(const TimeGrid& grid, double omega) {
    if (!(omega >= 0.0)) throw std::invalid_argument("ControlSchedule: omega must be >= 0");
    ControlSchedule s;
    s.grid = grid;
    s.omega_c.assign(grid.n, omega);
    return s;
}

ControlSchedule ControlSchedule::storage(const StorageSpec& spec) {
    if (!(spec.switch_off > 0.0)) throw std::invalid_argument("ControlSchedule: switch_off must be > 0");
    if (!(spec.ramp_time >= 0.0) || !(spec.hold_time >= 0.0) || !(spec.read_duration > 0.0))
        throw std::invalid_argument("ControlSchedule: ramp, hold and read durations must be non-negative");
    const double t_store = spec.switch_off + spec.ramp_time;
    const double t_read = t_store + spec.hold_time;
    const double t_end = t_read + spec.ramp_time + spec.read_duration;

    ControlSchedule s;
    s.grid = TimeGrid::covering(0.0, t_end, spec.dt);
    s.hold_time = spec.hold_time;
    s.ramp_time = spec.ramp_time;
    s.retrieval_direction = spec.direction;
    s.write_end = spec.switch_off;
    s.store_time = t_store;
    s.hold_midpoint = t_store + 0.5 * spec.hold_time;

    auto raised = [](double x) { return 0.5 * (1.0 - std::cos(kPi * std::clamp(x, 0.0, 1.0))); };
    s.omega_c.resize(s.grid.n);
    for (std::size_t i = 0; i < s.grid.n; ++i) {
        const double t = s.grid.at(i);
        double w = 0.0;
        if (t <= spec.switch_off) {
            w = spec.omega_write;
        } else if (t < t_store) {
            w = spec.omega_write * (1.0 - raised((t - spec.switch_off) / spec.ramp_time));
        } else if (t <= t_read) {
            w = 0.0;
        } else if (spec.ramp_time > 0.0 && t < t_read + spec.ramp_time) {
            w = spec.omega_read * raised((t - t_read) / spec.ramp_time);
        } else {
            w = spec.omega_read;
        }
        s.omega_c[i] = w;
    }
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Spin waves and closed forms

double SpinWave::norm() const {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < z.size(); ++i)
        s += 0.5 * (z[i + 1] - z[i]) * (std::norm(amplitude[i]) + std::norm(amplitude[i + 1]));
    return s;
}

double SpinWave::front_half_fraction() const {
    const double total = norm();
    if (!(total > 0.0)) return 0.0;
    const double mid = 0.5 * (z.front() + z.back());
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < z.size() && z[i + 1] <= mid + 1e-12; ++i)
        s += 0.5 * (z[i + 1] - z[i]) * (std::norm(amplitude[i]) + std::norm(amplitude[i + 1]));
    return s / total;
}

SpinWave SpinWave::mirrored() const {
    SpinWave w;
    const double length = z.empty() ? 0.0 : z.back();
    for (std::size_t j = z.size(); j-- > 0;) {
        w.z.push_back(length - z[j]);
        w.amplitude.push_back(amplitude[j]);
    }
    return w;
}

namespace {

SpinWave resample_spin_wave(const SpinWave& s, std::size_t nz, double length) {
    if (s.z.size() < 2 || s.z.size() != s.amplitude.size())
        throw std::invalid_argument("spin wave needs matching z and amplitude samples");
    SpinWave out;
    out.z.resize(nz + 1);
    out.amplitude.resize(nz + 1);
    for (std::size_t j = 0; j <= nz; ++j) {
        const double z = length * static_cast<double>(j) / static_cast<double>(nz);
        out.z[j] = z;
        const auto it = std::upper_bound(s.z.begin(), s.z.end(), z);
        if (it == s.z.begin() || it == s.z.end()) {
            out.amplitude[j] = (z == s.z.back()) ? s.amplitude.back() : cplx{};
            continue;
        }
        const auto i = static_cast<std::size_t>(it - s.z.begin()) - 1;
        const double f = (z - s.z[i]) / (s.z[i + 1] - s.z[i]);
        out.amplitude[j] = (1.0 - f) * s.amplitude[i] + f * s.amplitude[i + 1];
    }
    return out;
}

/// Readout kernel on n = nz + 1 nodes in u (distance from the exit / L),
/// symmetrized with square-root trapezoid weights.
struct ReadoutKernel {
    Eigen::MatrixXd k;
    Eigen::VectorXd sw;
};

ReadoutKernel readout_kernel(const LambdaMedium& m, std::size_t nz) {
    m.validate();
    if (!(m.alpha > 0.0)) throw std::domain_error("readout kernel: no medium (alpha = 0)");
    if (nz < 2) throw std::invalid_argument("readout kernel: need nz >= 2");
    const double a = 0.5 * m.optical_depth();
    const std::size_t n = nz + 1;
    const double du = 1.0 / static_cast<double>(nz);
    auto kernel = [a](double u, double v) {
        const double x = a * std::sqrt(u * v);
        if (x < 600.0) return 0.5 * a * std::exp(-0.5 * a * (u + v)) * std::cyl_bessel_i(0.0, x);
        // I0(x) ~ e^x / sqrt(2 pi x)
        const double r = std::sqrt(u) - std::sqrt(v);
        return 0.5 * a * std::exp(-0.5 * a * r * r) / std::sqrt(2.0 * kPi * x);
    };
    ReadoutKernel rk{Eigen::MatrixXd(n, n), Eigen::VectorXd(n)};
    for (std::size_t i = 0; i < n; ++i) rk.sw[i] = std::sqrt(trapezoid_weight(i, n, du));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j)
            rk.k(i, j) = rk.k(j, i) =
                rk.sw[i] * rk.sw[j] * kernel(du * static_cast<double>(i), du * static_cast<double>(j));
    return rk;
}

}  // namespace

double adiabatic_readout_efficiency(const LambdaMedium& m, const SpinWave& s, std::size_t nz) {
    const auto rk = readout_kernel(m, nz);
    const auto w = resample_spin_wave(s, nz, m.length);
    const std::size_t n = nz + 1;
    Eigen::VectorXcd v(n);
    // Node i of the kernel sits at z = L - u_i L.
    for (std::size_t i = 0; i < n; ++i) v[i] = rk.sw[i] * std::sqrt(m.length) * w.amplitude[n - 1 - i];
    const Eigen::VectorXcd kv = rk.k.cast<cplx>() * v;
    return v.dot(kv).real();
}

OptimalSpinWave optimal_readout_spin_wave(const LambdaMedium& m, std::size_t nz) {
    const auto rk = readout_kernel(m, nz);
    const std::size_t n = nz + 1;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(rk.k);
    const Eigen::VectorXd top = es.eigenvectors().col(static_cast<Eigen::Index>(n - 1));

    OptimalSpinWave out;
    out.efficiency = es.eigenvalues()[static_cast<Eigen::Index>(n - 1)];
    const double sign = top[0] < 0.0 ? -1.0 : 1.0;
    const double scale = sign / std::sqrt(m.length);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = n - 1 - i;
        out.wave.z.push_back(m.length * static_cast<double>(i) / static_cast<double>(nz));
        out.wave.amplitude.push_back(scale * top[static_cast<Eigen::Index>(j)] / rk.sw[static_cast<Eigen::Index>(j)]);
    }
    return out;
}

double group_velocity(const LambdaMedium& m, double omega_c) {
    m.validate();
    if (!(m.alpha > 0.0)) throw std::domain_error("group_velocity: no medium (alpha = 0)");
    return 2.0 * omega_c * omega_c / (m.alpha * m.gamma_p());
}

FeasibilityReport check_feasibility(const LambdaMedium& m, double omega_c, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("check_feasibility: tau must be > 0");
    FeasibilityReport r;
    r.group_velocity = group_velocity(m, omega_c);
    r.lower_margin = r.group_velocity * tau / m.length;
    r.upper_margin = 1.0 / (tau * r.group_velocity * std::sqrt(m.alpha / m.length));
    r.adiabaticity = tau * m.optical_depth() * m.gamma_p();
    return r;
}

double fit_control_rabi(const LambdaMedium& m, double tau, double fill) {
    m.validate();
    if (!(tau > 0.0) || !(fill > 0.0)) throw std::invalid_argument("fit_control_rabi: tau and fill must be > 0");
    // v_g tau = fill L
    return std::sqrt(fill * m.length * m.alpha * m.gamma_p() / (2.0 * tau));
}

double storage_efficiency_decay(double eta0, const LambdaMedium& m, double hold) {
    if (!(eta0 >= 0.0 && eta0 <= 1.0)) throw std::invalid_argument("storage_efficiency_decay: eta0 must be in [0, 1]");
    if (!(hold >= 0.0)) throw std::invalid_argument("storage_efficiency_decay: hold must be >= 0");
    return eta0 * std::exp(-2.0 * m.gamma_s_eff() * hold);
}

// ---------------------------------------------------------------------------
// Maxwell-Bloch solver
//
// z-marching with a Heun predictor-corrector along z; each slice integrates
// (P, S) over the whole time window with the same per-step coefficients,
// since the medium is uniform and Omega_c(t) does not depend on z.

namespace {

struct Atom {
    cplx p, s;
};

/// y_{k+1} = M y_k + i (c0 E_k + c1 E_{k+1}) for one time step.
struct StepMap {
    cplx m00, m01, m10, m11;
    cplx c0p, c0s, c1p, c1s;
};

StepMap exponential_step(double gamma_p, double detuning, double gamma_s, double omega, double h) {
    // Augmented generator for y' = A y + u, u' = w / h, w' = 0 (E linear in the step).
    using Mat6 = Eigen::Matrix<cplx, 6, 6>;
    const cplx I(0.0, 1.0);
    Mat6 B = Mat6::Zero();
    B(0, 0) = -(gamma_p + I * detuning) * h;
    B(0, 1) = I * omega * h;
    B(1, 0) = I * omega * h;
    B(1, 1) = -gamma_s * h;
    B(0, 2) = h;
    B(1, 3) = h;
    B(2, 4) = 1.0;
    B(3, 5) = 1.0;
    const Mat6 E = B.exp();
    // Columns 2 and 4 hold the response to a unit constant and unit ramp
    // forcing of the P equation.
    StepMap s;
    s.m00 = E(0, 0);
    s.m01 = E(0, 1);
    s.m10 = E(1, 0);
    s.m11 = E(1, 1);
    s.c0p = E(0, 2) - E(0, 4);
    s.c0s = E(1, 2) - E(1, 4);
    s.c1p = E(0, 4);
    s.c1s = E(1, 4);
    return s;
}

class SliceSolver {
public:
    SliceSolver(const LambdaMedium& m, TimeScheme scheme, double h, std::vector<double> omega_nodes,
                std::vector<double> omega_mid)
        : scheme_(scheme), h_(h), gamma_p_(m.gamma_p()), gamma_s_(m.gamma_s_eff()), detuning_(m.detuning),
          omega_nodes_(std::move(omega_nodes)), omega_mid_(std::move(omega_mid)) {
        if (scheme_ == TimeScheme::exponential) {
            maps_.resize(omega_mid_.size());
            for (std::size_t k = 0; k < omega_mid_.size(); ++k) {
                if (k > 0 && omega_mid_[k] == omega_mid_[k - 1]) {
                    maps_[k] = maps_[k - 1];
                } else {
                    maps_[k] = exponential_step(gamma_p_, detuning_, gamma_s_, omega_mid_[k], h_);
                }
            }
        }
    }

    std::size_t steps() const { return omega_mid_.size(); }

    /// Integrates one slice from `y` over the phase. Writes P(t_k) into `p`
    /// and returns the final state; `probe` (if set) receives the state at
    /// local step index `probe_index`.
    Atom run(Atom y, const std::vector<cplx>& e, std::vector<cplx>& p, std::size_t probe_index = SIZE_MAX,
             Atom* probe = nullptr) const {
        const std::size_t n = e.size();
        p.resize(n);
        p[0] = y.p;
        if (probe && probe_index == 0) *probe = y;
        const cplx I(0.0, 1.0);
        if (scheme_ == TimeScheme::exponential) {
            for (std::size_t k = 0; k + 1 < n; ++k) {
                const auto& s = maps_[k];
                const cplx fp = I * (s.c0p * e[k] + s.c1p * e[k + 1]);
                const cplx fs = I * (s.c0s * e[k] + s.c1s * e[k + 1]);
                y = Atom{s.m00 * y.p + s.m01 * y.s + fp, s.m10 * y.p + s.m11 * y.s + fs};
                p[k + 1] = y.p;
                if (probe && probe_index == k + 1) *probe = y;
            }
        } else {
            const cplx decay_p = gamma_p_ + I * detuning_;
            auto rhs = [&](const Atom& a, double w, cplx ek) {
                return Atom{-decay_p * a.p + I * ek + I * w * a.s, -gamma_s_ * a.s + I * w * a.p};
            };
            for (std::size_t k = 0; k + 1 < n; ++k) {
                const double w0 = omega_nodes_[k], wm = omega_mid_[k], w1 = omega_nodes_[k + 1];
                const cplx e0 = e[k], e1 = e[k + 1], em = 0.5 * (e0 + e1);
                const Atom k1 = rhs(y, w0, e0);
                const Atom k2 = rhs({y.p + 0.5 * h_ * k1.p, y.s + 0.5 * h_ * k1.s}, wm, em);
                const Atom k3 = rhs({y.p + 0.5 * h_ * k2.p, y.s + 0.5 * h_ * k2.s}, wm, em);
                const Atom k4 = rhs({y.p + h_ * k3.p, y.s + h_ * k3.s}, w1, e1);
                y.p += (h_ / 6.0) * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p);
                y.s += (h_ / 6.0) * (k1.s + 2.0 * k2.s + 2.0 * k3.s + k4.s);
                p[k + 1] = y.p;
                if (probe && probe_index == k + 1) *probe = y;
            }
        }
        return y;
    }

private:
    TimeScheme scheme_;
    double h_, gamma_p_, gamma_s_, detuning_;
    std::vector<double> omega_nodes_;  // Omega at step boundaries
    std::vector<double> omega_mid_;    // Omega at step midpoints
    std::vector<StepMap> maps_;
};

struct MarchOutput {
    std::vector<cplx> exit_field;
    std::vector<Atom> final_state;  // per slice, at the last step of the phase
    std::vector<Atom> probe_state;  // per slice, at probe_index
};

struct MapRecorder {
    std::size_t k_offset = 0;
    std::vector<std::size_t> z_rows;  // slice index of each map row
    std::vector<std::size_t> t_cols;  // global time index of each map column
    std::vector<double>* intensity = nullptr;

    void record(std::size_t slice, const std::vector<cplx>& e) const {
        if (!intensity) return;
        const auto row = std::find(z_rows.begin(), z_rows.end(), slice);
        if (row == z_rows.end()) return;
        const auto r = static_cast<std::size_t>(row - z_rows.begin());
        for (std::size_t c = 0; c < t_cols.size(); ++c) {
            const std::size_t k = t_cols[c];
            if (k < k_offset || k - k_offset >= e.size()) continue;
            (*intensity)[r * t_cols.size() + c] = std::norm(e[k - k_offset]);
        }
    }
};

MarchOutput march(const SliceSolver& solver, std::size_t nz, double dz, double coupling,
                  const std::vector<cplx>& boundary, const std::vector<Atom>& initial, std::size_t probe_index,
                  const MapRecorder& map) {
    const cplx I(0.0, 1.0);
    const cplx k = I * coupling * dz;
    MarchOutput out;
    out.final_state.resize(nz + 1);
    out.probe_state.resize(nz + 1);

    std::vector<cplx> e = boundary, p, e_pred(boundary.size()), p_pred;
    out.final_state[0] = solver.run(initial[0], e, p, probe_index, &out.probe_state[0]);
    map.record(0, e);
    for (std::size_t j = 0; j < nz; ++j) {
        for (std::size_t t = 0; t < e.size(); ++t) e_pred[t] = e[t] + k * p[t];
        solver.run(initial[j + 1], e_pred, p_pred);
        for (std::size_t t = 0; t < e.size(); ++t) e[t] += 0.5 * k * (p[t] + p_pred[t]);
        out.final_state[j + 1] = solver.run(initial[j + 1], e, p, probe_index, &out.probe_state[j + 1]);
        map.record(j + 1, e);
    }
    out.exit_field = std::move(e);
    return out;
}

double energy(const std::vector<cplx>& e, double h) {
    double s = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) s += trapezoid_weight(i, e.size(), h) * std::norm(e[i]);
    return s;
}

SpinWave spin_wave_from(const std::vector<Atom>& states, double dz, double amp_scale) {
    SpinWave w;
    w.z.resize(states.size());
    w.amplitude.resize(states.size());
    for (std::size_t j = 0; j < states.size(); ++j) {
        w.z[j] = dz * static_cast<double>(j);
        w.amplitude[j] = amp_scale * states[j].s;
    }
    return w;
}

std::vector<std::size_t> strided(std::size_t count, std::size_t max_points) {
    const std::size_t stride = std::max<std::size_t>(1, (count + max_points - 2) / std::max<std::size_t>(1, max_points - 1));
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < count; i += stride) idx.push_back(i);
    if (idx.back() != count - 1) idx.push_back(count - 1);
    return idx;
}

PropagationResult propagate_once(const LambdaMedium& m, const PhotonWavepacket& input, const ControlSchedule& sched,
                                 const PropagateOptions& opt, std::size_t nz, std::size_t refine_extra) {
    // Internal time step: schedule grid subdivided to meet the step bound.
    const double w_max = sched.omega_max();
    const double rate = opt.scheme == TimeScheme::rk4 ? std::max(m.gamma_p(), w_max) : w_max;
    std::size_t refine = 1;
    if (rate > 0.0) refine = static_cast<std::size_t>(std::ceil(sched.grid.dt * rate / opt.dt_scale - 1e-9));
    refine = std::max<std::size_t>(refine, 1) * refine_extra;
    const double h = sched.grid.dt / static_cast<double>(refine);
    const std::size_t n_t = (sched.grid.n - 1) * refine + 1;
    const double t0 = sched.grid.t_start;
    auto t_at = [&](std::size_t k) { return t0 + h * static_cast<double>(k); };
    auto index_of = [&](double t) {
        return std::min(n_t - 1, static_cast<std::size_t>(std::llround((t - t0) / h)));
    };

    // Boundary field and the input energy actually injected.
    std::vector<cplx> e_in(n_t);
    for (std::size_t k = 0; k < n_t; ++k) e_in[k] = input.sample(t_at(k));
    const double n_in = energy(e_in, h);
    if (!(n_in > 0.0)) throw std::invalid_argument("propagate: input has no support inside the schedule window");
    const double n_total = input.norm();
    const std::size_t k_write = sched.write_end ? index_of(*sched.write_end) : n_t - 1;
    const double n_before_write =
        energy(std::vector<cplx>(e_in.begin(), e_in.begin() + static_cast<std::ptrdiff_t>(k_write) + 1), h);
    if (n_before_write < (1.0 - 1e-3) * n_total)
        throw std::invalid_argument(fmt::format(
            "propagate: schedule shorter than input support ({:.4g} of the input arrives after the write phase)",
            1.0 - n_before_write / n_total));

    const std::size_t k_mid = sched.hold_midpoint ? index_of(*sched.hold_midpoint) : n_t - 1;
    const std::size_t k_store = sched.store_time ? index_of(*sched.store_time) : k_mid;

    const double dz = m.length / static_cast<double>(nz);
    const double coupling = 0.5 * m.alpha * m.gamma_p();
    const double amp_scale = std::sqrt(coupling);

    auto make_solver = [&](std::size_t k0, std::size_t k1) {
        std::vector<double> nodes(k1 - k0 + 1), mids(k1 - k0);
        for (std::size_t k = k0; k <= k1; ++k) nodes[k - k0] = sched.omega_at(t_at(k));
        for (std::size_t k = k0; k < k1; ++k) mids[k - k0] = sched.omega_at(t_at(k) + 0.5 * h);
        return SliceSolver(m, opt.scheme, h, std::move(nodes), std::move(mids));
    };

    PropagationResult r;
    r.input_norm = n_in;
    r.direction = sched.retrieval_direction;
    r.nz = nz;
    r.dt = h;

    // Field map bookkeeping.
    const auto z_rows = strided(nz + 1, opt.map_max_z);
    const auto t_cols = strided(n_t, opt.map_max_t);
    r.field_map.z.reserve(z_rows.size());
    for (auto j : z_rows) r.field_map.z.push_back(dz * static_cast<double>(j));
    for (auto k : t_cols) r.field_map.t.push_back(t_at(k));
    r.field_map.intensity.assign(z_rows.size() * t_cols.size(), 0.0);
    MapRecorder map{0, z_rows, t_cols, &r.field_map.intensity};

    // Write phase (and hold up to its midpoint).
    const std::size_t n_a = k_mid + 1;
    const auto solver_a = make_solver(0, k_mid);
    std::vector<cplx> boundary_a(e_in.begin(), e_in.begin() + static_cast<std::ptrdiff_t>(n_a));
    const std::vector<Atom> ground(nz + 1, Atom{});
    auto a = march(solver_a, nz, dz, coupling, boundary_a, ground, k_store, map);

    const TimeGrid grid_a(t0, h, std::max<std::size_t>(n_a, 2));
    if (n_a < 2) a.exit_field.resize(2);
    r.transmitted = PhotonWavepacket(grid_a, a.exit_field);
    r.leaked_fraction = energy(a.exit_field, h) / n_in;

    if (!sched.stores()) {
        r.spin_wave_snapshot = spin_wave_from(a.final_state, dz, amp_scale);
        r.stored_fraction = r.spin_wave_snapshot.norm() / n_in;
        r.stored = false;
        return r;
    }

    r.stored = true;
    r.stored_fraction = spin_wave_from(a.probe_state, dz, amp_scale).norm() / n_in;
    r.spin_wave_snapshot = spin_wave_from(a.final_state, dz, amp_scale);

    // Read phase from the hold midpoint; counter retrieval mirrors the cell.
    std::vector<Atom> initial_b = a.final_state;
    if (sched.retrieval_direction == RetrievalDirection::counter) std::reverse(initial_b.begin(), initial_b.end());
    const auto solver_b = make_solver(k_mid, n_t - 1);
    const std::vector<cplx> boundary_b(n_t - k_mid, cplx{});
    MapRecorder map_b = map;
    map_b.k_offset = k_mid;
    const auto b = march(solver_b, nz, dz, coupling, boundary_b, initial_b, SIZE_MAX, map_b);

    r.retrieved = PhotonWavepacket(TimeGrid(t_at(k_mid), h, b.exit_field.size()), b.exit_field);
    r.efficiency = energy(b.exit_field, h) / n_in;
    return r;
}

}  // namespace

PhotonWavepacket read_out(const LambdaMedium& m, const SpinWave& spin_wave, double omega_read, double duration,
                          double dt, const PropagateOptions& opt) {
    m.validate();
    if (!(omega_read > 0.0)) throw std::invalid_argument("read_out: omega_read must be > 0");
    if (!(duration > 0.0) || !(dt > 0.0)) throw std::invalid_argument("read_out: duration and dt must be > 0");
    if (opt.nz < 2) throw std::invalid_argument("read_out: need nz >= 2");
    const auto sched = ControlSchedule::constant(TimeGrid::covering(0.0, duration, dt), omega_read);
    const double rate = opt.scheme == TimeScheme::rk4 ? std::max(m.gamma_p(), omega_read) : omega_read;
    const auto refine = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(sched.grid.dt * rate / opt.dt_scale - 1e-9)));
    const double h = sched.grid.dt / static_cast<double>(refine);
    const std::size_t n_t = (sched.grid.n - 1) * refine + 1;

    const double coupling = 0.5 * m.alpha * m.gamma_p();
    if (!(coupling > 0.0)) throw std::domain_error("read_out: no medium (alpha = 0)");
    const auto s = resample_spin_wave(spin_wave, opt.nz, m.length);
    std::vector<Atom> initial(opt.nz + 1);
    for (std::size_t j = 0; j <= opt.nz; ++j) initial[j].s = s.amplitude[j] / std::sqrt(coupling);

    const SliceSolver solver(m, opt.scheme, h, std::vector<double>(n_t, omega_read), std::vector<double>(n_t - 1, omega_read));
    const auto out = march(solver, opt.nz, m.length / static_cast<double>(opt.nz), coupling,
                           std::vector<cplx>(n_t, cplx{}), initial, SIZE_MAX, MapRecorder{});
    return PhotonWavepacket(TimeGrid(0.0, h, n_t), out.exit_field);
}

PhotonWavepacket matched_input(const LambdaMedium& m, const SpinWave& target, double omega, double duration,
                               double dt, const PropagateOptions& opt) {
    SpinWave mirrored = target;
    for (std::size_t j = 0; j < mirrored.z.size(); ++j) {
        mirrored.z[j] = m.length - target.z[target.z.size() - 1 - j];
        mirrored.amplitude[j] = std::conj(target.amplitude[target.z.size() - 1 - j]);
    }
    return read_out(m, mirrored, omega, duration, dt, opt).time_reversed();
}

MatchedStorage matched_storage(const LambdaMedium& m, double omega_c, double hold_time, double ramp_time, double dt,
                               const PropagateOptions& opt) {
    if (!(omega_c > 0.0)) throw std::invalid_argument("matched_storage: omega_c must be > 0");
    MatchedStorage out;
    out.omega_c = omega_c;
    const auto best = optimal_readout_spin_wave(m, opt.nz);
    const auto target = best.wave.mirrored();
    out.bound_counter = best.efficiency * best.efficiency;
    out.bound_co = best.efficiency * adiabatic_readout_efficiency(m, target, opt.nz);
    // The readout of the optimal wave decays as exp over a few L / v_g.
    const double duration = 6.0 * m.length / group_velocity(m, out.omega_c);
    auto input = matched_input(m, target, out.omega_c, duration, dt, opt);
    out.input = input.scaled(1.0 / std::sqrt(input.norm()));

    out.spec.omega_write = out.omega_c;
    out.spec.omega_read = out.omega_c;
    out.spec.switch_off = input.grid().t_end();
    out.spec.ramp_time = ramp_time;
    out.spec.hold_time = hold_time;
    out.spec.read_duration = duration;
    out.spec.dt = dt;
    out.spec.direction = RetrievalDirection::counter;
    return out;
}

PropagationResult propagate(const LambdaMedium& m, const PhotonWavepacket& input, const ControlSchedule& schedule,
                            const PropagateOptions& opt) {
    m.validate();
    schedule.validate();
    if (opt.nz < 2) throw std::invalid_argument("propagate: need nz >= 2");
    if (!(opt.dt_scale > 0.0)) throw std::invalid_argument("propagate: dt_scale must be > 0");

    auto r = propagate_once(m, input, schedule, opt, opt.nz, 1);
    if (opt.check_convergence) {
        const auto fine = propagate_once(m, input, schedule, opt, 2 * opt.nz, 2);
        r.refined_efficiency = fine.efficiency;
        const double delta = std::abs(fine.efficiency - r.efficiency);
        if (delta > opt.convergence_tolerance * std::max(r.efficiency, 0.01))
            throw std::runtime_error(fmt::format(
                "propagate: not converged (efficiency {:.6g} at nz={} dt={:.3g}, {:.6g} at nz={} dt={:.3g})",
                r.efficiency, r.nz, r.dt, fine.efficiency, fine.nz, fine.dt));
    }
    return r;
}

SpinWave spin_wave_profile(const PropagationResult& result) {
    if (!result.stored || !(result.stored_fraction > 1e-6))
        throw std::domain_error("spin_wave_profile: nothing stored");
    return result.spin_wave_snapshot;
}

void write_field_map_csv(std::ostream& os, const FieldMap& map) {
    os << "z_cm,t_r_us,intensity\n";
    for (std::size_t i = 0; i < map.z.size(); ++i)
        for (std::size_t k = 0; k < map.t.size(); ++k)
            os << num(map.z[i]) << ',' << num(map.t[k]) << ',' << num(map.at(i, k)) << '\n';
}

void write_spin_wave_csv(std::ostream& os, const SpinWave& s) {
    os << "z_cm,re_s,im_s\n";
    for (std::size_t i = 0; i < s.z.size(); ++i)
        os << num(s.z[i]) << ',' << num(s.amplitude[i].real()) << ',' << num(s.amplitude[i].imag()) << '\n';
}

nlohmann::json summary_json(const PropagationResult& r, const LambdaMedium& m) {
    return {{"eta", r.efficiency},         {"leaked", r.leaked_fraction}, {"stored", r.stored_fraction},
            {"direction", to_string(r.direction)}, {"d", m.optical_depth()},     {"gamma_p", m.gamma_p()},
            {"gamma_s", m.gamma_s_eff()}};
}

}  // namespace hqn
