#include "hqn/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <unistd.h>

#include "hqn/interference.hpp"
#include "hqn/numfmt.hpp"
#include "hqn/parallel.hpp"

#ifndef HQN_VERSION
#define HQN_VERSION "0.0.0"
#endif

namespace hqn::cli {

namespace {

const std::vector<std::pair<Scenario, std::string>> kNames = {
    {Scenario::emit, "emit"},         {Scenario::shape, "shape"}, {Scenario::sweep_cavity, "sweep-cavity"},
    {Scenario::mode_average, "mode-average"}, {Scenario::store, "store"}, {Scenario::feasibility, "feasibility"},
    {Scenario::hom, "hom"},           {Scenario::beat, "beat"},   {Scenario::rus, "rus"},
};

/// Flat view of the INI document that remembers which keys were read.
class Keys {
public:
    explicit Keys(const std::string& text) {
        namespace pt = boost::property_tree;
        pt::ptree tree;
        std::istringstream is(text);
        try {
            pt::ini_parser::read_ini(is, tree);
        } catch (const pt::ini_parser_error& e) {
            throw std::invalid_argument(fmt::format("config: {} (line {})", e.message(), e.line()));
        }
        for (const auto& [name, node] : tree) {
            if (node.empty()) {
                values_[name] = node.data();
                continue;
            }
            for (const auto& [key, leaf] : node) values_[name + "." + key] = leaf.data();
        }
    }

    bool has_section(const std::string& name) const {
        const auto it = values_.lower_bound(name + ".");
        return it != values_.end() && it->first.rfind(name + ".", 0) == 0;
    }

    std::optional<std::string> text(const std::string& key) {
        const auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        used_.insert(key);
        echo_[key] = it->second;
        return it->second;
    }

    std::string required_text(const std::string& key) {
        auto v = text(key);
        if (!v) throw std::invalid_argument(fmt::format("config: missing required key '{}'", key));
        return *v;
    }

    std::optional<double> number(const std::string& key) {
        const auto v = text(key);
        if (!v) return std::nullopt;
        std::size_t pos = 0;
        double x = 0.0;
        try {
            x = std::stod(*v, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || v->find_first_not_of(" \t", pos) != std::string::npos || std::isnan(x))
            throw std::invalid_argument(fmt::format("config: '{}' is not a number: '{}'", key, *v));
        return x;
    }

    double number_or(const std::string& key, double fallback) { return number(key).value_or(fallback); }

    double required_number(const std::string& key) {
        const auto v = number(key);
        if (!v) throw std::invalid_argument(fmt::format("config: missing required key '{}'", key));
        return *v;
    }

    std::size_t count_or(const std::string& key, std::size_t fallback) {
        const auto v = number(key);
        if (!v) return fallback;
        if (!(*v >= 0.0) || *v != std::floor(*v) || *v > 1e15)
            throw std::invalid_argument(fmt::format("config: '{}' must be a non-negative integer", key));
        return static_cast<std::size_t>(*v);
    }

    bool flag_or(const std::string& key, bool fallback) {
        const auto v = text(key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw std::invalid_argument(fmt::format("config: '{}' must be true or false", key));
    }

    void reject_unused() const {
        for (const auto& [key, value] : values_)
            if (!used_.count(key)) throw std::invalid_argument(fmt::format("config: unknown key '{}'", key));
    }

    nlohmann::json echo() const { return echo_; }

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> used_;
    nlohmann::json echo_ = nlohmann::json::object();
};

/// Reads numbers with unit conversion and a sign check.
struct Reader {
    Keys& keys;
    double af;

    double nonneg(const std::string& key, double v) const {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument(fmt::format("config: '{}' must be finite and >= 0 (got {})", key, v));
        return v;
    }
    double positive(const std::string& key, double v) const {
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::invalid_argument(fmt::format("config: '{}' must be finite and > 0 (got {})", key, v));
        return v;
    }
    // MHz -> rad/us
    std::optional<double> rate(const std::string& key) {
        const auto v = keys.number(key);
        if (!v) return std::nullopt;
        return nonneg(key, *v) * af;
    }
    double rate_or(const std::string& key, double fallback) { return rate(key).value_or(fallback); }
    double required_rate(const std::string& key) {
        const auto v = rate(key);
        if (!v) throw std::invalid_argument(fmt::format("config: missing required key '{}'", key));
        return *v;
    }
    // ppm -> fraction
    double ppm_or(const std::string& key, double fallback) {
        const auto v = keys.number(key);
        return v ? nonneg(key, *v) * 1e-6 : fallback;
    }
    double required_ppm(const std::string& key) { return nonneg(key, keys.required_number(key)) * 1e-6; }
    double nonneg_or(const std::string& key, double fallback) {
        const auto v = keys.number(key);
        return v ? nonneg(key, *v) : fallback;
    }
    double positive_or(const std::string& key, double fallback) {
        const auto v = keys.number(key);
        return v ? positive(key, *v) : fallback;
    }
    double required_positive(const std::string& key) { return positive(key, keys.required_number(key)); }
};

void read_cavity_core(Reader& r, CavityParams& c, bool with_kappa) {
    c.g = r.required_rate("cavity.g");
    c.gamma = r.required_rate("cavity.gamma");
    if (with_kappa) c.kappa = r.required_rate("cavity.kappa");
    c.cavity_length = r.nonneg_or("cavity.cavity_length", 0.0);
    c.mode_waist = r.nonneg_or("cavity.mode_waist", 0.0);
}

PhotonSpec read_photon(Reader& r, const std::string& sec, const std::string& default_shape) {
    PhotonSpec p;
    p.shape = r.keys.text(sec + ".shape").value_or(default_shape);
    static const std::set<std::string> shapes = {"sin2", "gaussian", "skewed", "matched"};
    if (!shapes.count(p.shape)) throw std::invalid_argument(fmt::format("config: unknown {}.shape '{}'", sec, p.shape));
    p.t0 = r.nonneg_or(sec + ".t0", p.t0);
    p.duration = r.positive_or(sec + ".duration", p.duration);
    p.center = r.nonneg_or(sec + ".center", p.center);
    p.fwhm = r.positive_or(sec + ".fwhm", p.fwhm);
    p.rise = r.positive_or(sec + ".rise", p.rise);
    p.fall = r.positive_or(sec + ".fall", p.fall);
    p.probability = r.positive_or(sec + ".probability", p.probability);
    if (p.probability > 1.0) throw std::invalid_argument(fmt::format("config: '{}.probability' must be <= 1", sec));
    if (const auto d = r.keys.number(sec + ".detuning")) p.detuning = *d * r.af;
    if (const auto t = r.keys.number(sec + ".t_end")) p.t_end = r.positive(sec + ".t_end", *t);
    p.dt = r.positive_or(sec + ".dt", p.dt);
    return p;
}

double photon_support_end(const PhotonSpec& p) {
    if (p.shape == "sin2") return p.t0 + p.duration;
    if (p.shape == "skewed") return p.t0 + p.rise + p.fall;
    return p.center + 2.0 * p.fwhm;
}

PhotonWavepacket make_photon(const PhotonSpec& p) {
    if (p.shape == "matched") throw std::invalid_argument("matched photons exist only for the store scenario");
    const double t_end = p.t_end.value_or(photon_support_end(p) + 0.5);
    const auto grid = TimeGrid::covering(0.0, t_end, p.dt);
    PhotonWavepacket w;
    if (p.shape == "sin2") w = sin2_photon(grid, p.t0, p.duration, p.probability);
    else if (p.shape == "gaussian") w = gaussian_photon(grid, p.center, p.fwhm, p.probability);
    else w = skewed_photon(grid, p.t0, p.rise, p.fall, p.probability);
    return p.detuning != 0.0 ? w.detuned(p.detuning) : w;
}

void read_medium(Reader& r, LambdaMedium& m) {
    m.length = r.required_positive("medium.length");
    const auto alpha = r.keys.number("medium.alpha");
    const auto depth = r.keys.number("medium.optical_depth");
    if (alpha && depth) throw std::invalid_argument("config: give either 'medium.alpha' or 'medium.optical_depth'");
    if (!alpha && !depth) throw std::invalid_argument("config: missing required key 'medium.alpha' (or 'medium.optical_depth')");
    m.alpha = alpha ? r.nonneg("medium.alpha", *alpha) : r.nonneg("medium.optical_depth", *depth) / m.length;
    m.gamma_p_natural = r.required_rate("medium.gamma_p_natural");
    m.collision_rate = r.rate_or("medium.collision_rate", 0.0);
    m.gamma_s = r.rate_or("medium.gamma_s", 0.0);
    m.diffusion_const = r.nonneg_or("medium.diffusion_const", 0.0);
    m.wavevector_mismatch = r.keys.number_or("medium.wavevector_mismatch", 0.0);
    m.detuning = r.keys.number_or("medium.detuning", 0.0) * r.af;
    m.validate();
}

void read_control(Reader& r, ControlSpec& c, bool storage) {
    c.omega_write = r.rate("control.omega_write");
    c.tau = r.positive_or("control.tau", c.tau);
    c.fill = r.positive_or("control.fill", c.fill);
    if (!storage) return;
    c.omega_read = r.rate("control.omega_read");
    c.ramp_time = r.nonneg_or("control.ramp_time", c.ramp_time);
    c.hold_time = r.nonneg_or("control.hold_time", c.hold_time);
    if (const auto v = r.keys.number("control.switch_off")) c.switch_off = r.positive("control.switch_off", *v);
    if (const auto v = r.keys.number("control.read_duration")) c.read_duration = r.positive("control.read_duration", *v);
    c.dt = r.positive_or("control.dt", c.dt);
    c.direction = r.keys.text("control.direction").value_or(c.direction);
    if (c.direction != "co" && c.direction != "counter" && c.direction != "both")
        throw std::invalid_argument("config: 'control.direction' must be co, counter or both");
}

void read_solver(Reader& r, PropagateOptions& o) {
    o.nz = r.keys.count_or("solver.nz", o.nz);
    o.dt_scale = r.positive_or("solver.dt_scale", o.dt_scale);
    const auto scheme = r.keys.text("solver.scheme").value_or("exponential");
    if (scheme == "exponential") o.scheme = TimeScheme::exponential;
    else if (scheme == "rk4") o.scheme = TimeScheme::rk4;
    else throw std::invalid_argument("config: 'solver.scheme' must be exponential or rk4");
    o.check_convergence = r.keys.flag_or("solver.check_convergence", true);
    o.convergence_tolerance = r.positive_or("solver.convergence_tolerance", o.convergence_tolerance);
}

void read_rus(Reader& r, RusSpec& s) {
    auto& c = s.config;
    c.n_cavities = static_cast<int>(r.keys.count_or("rus.n_cavities", static_cast<std::size_t>(c.n_cavities)));
    if (const auto v = r.keys.number("rus.atom_arrival_rate")) {
        if (!(*v >= 0.0)) throw std::invalid_argument("config: 'rus.atom_arrival_rate' must be >= 0");
        c.atom_arrival_rate = *v;
    }
    c.interaction_time = r.nonneg_or("rus.interaction_time", c.interaction_time);
    c.photon_slot = r.positive_or("rus.photon_slot", c.photon_slot);
    c.eta_store = r.nonneg_or("rus.eta_store", c.eta_store);
    c.eta_detect = r.nonneg_or("rus.eta_detect", c.eta_detect);
    c.p_bsm = r.nonneg_or("rus.p_bsm", c.p_bsm);
    c.gamma_s_memory = r.rate_or("rus.gamma_s_memory", c.gamma_s_memory);
    c.reset_time = r.nonneg_or("rus.reset_time", c.reset_time);
    c.target_chain_length =
        static_cast<int>(r.keys.count_or("rus.target_chain_length", static_cast<std::size_t>(c.target_chain_length)));
    c.rng_seed = r.keys.count_or("rus.rng_seed", c.rng_seed);
    c.max_attempts = r.keys.count_or("rus.max_attempts", c.max_attempts);
    s.runs = r.keys.count_or("rus.runs", s.runs);
    if (s.runs == 0) throw std::invalid_argument("config: 'rus.runs' must be >= 1");
    s.events = r.keys.flag_or("rus.events", s.events);
    c.validate();
}

// ---------------------------------------------------------------------------
// Output helpers

template <class Fn>
std::string render(Fn&& fn) {
    std::ostringstream os;
    fn(os);
    return os.str();
}

nlohmann::json rounded(const nlohmann::json& j) {
    if (j.is_number_float()) return std::stod(num(j.get<double>()));
    if (j.is_structured()) {
        auto out = j;
        for (auto& v : out) v = rounded(v);
        return out;
    }
    return j;
}

std::string dump(const nlohmann::json& j) { return rounded(j).dump(2) + "\n"; }

std::string wavepacket_csv(const PhotonWavepacket& w) {
    return render([&](std::ostream& os) { write_csv(os, w); });
}

std::string series_csv(const std::string& header, const TimeGrid& g, std::span<const double> v) {
    return render([&](std::ostream& os) {
        os << header << '\n';
        for (std::size_t i = 0; i < g.n; ++i) os << num(g.at(i)) << ',' << num(v[i]) << '\n';
    });
}

ScenarioOutputs run_emit(const ScenarioConfig& cfg) {
    const auto& d = cfg.drive;
    const auto grid = TimeGrid::covering(0.0, d.t_end, d.dt);
    const auto drive = d.shape == "linear" ? DrivePulse::linear_ramp(grid, d.t_on, d.ramp, d.omega_max)
                                           : DrivePulse::smooth_ramp(grid, d.t_on, d.ramp, d.omega_max);
    const auto rec = simulate_vstirap(cfg.cavity, drive);
    ScenarioOutputs out;
    out.files.emplace_back("photon.csv", wavepacket_csv(rec.photon));
    out.files.emplace_back("drive.csv", series_csv("t_us,omega_rad_per_us", grid, drive.omega()));
    out.summary = {{"p_emit", rec.p_emit},
                   {"p_spont", rec.p_spont},
                   {"p_residual", rec.p_residual},
                   {"emission_bound", emission_bound(cfg.cavity)},
                   {"peak_time_us", rec.photon.peak_time()},
                   {"fwhm_us", rec.photon.fwhm()}};
    const auto& c = cfg.cavity;
    if (c.kappa > 0.0 && c.gamma > 0.0) out.summary["cooperativity"] = cooperativity(c);
    if (c.t1 + c.t2 + 2.0 * c.h > 0.0) out.summary["emission_probability"] = emission_probability(c);
    out.diagnostics = {{"substeps", rec.substeps},
                       {"convergence_delta", rec.convergence_delta},
                       {"final_cavity_population", rec.final_cavity_population}};
    return out;
}

ScenarioOutputs run_shape(const ScenarioConfig& cfg) {
    const auto target = make_photon(cfg.photon);
    const auto drive = shape_drive_pulse(cfg.cavity, target);
    const auto rec = simulate_vstirap(cfg.cavity, drive);
    const auto ov = mode_overlap(target, rec.photon);
    ScenarioOutputs out;
    out.files.emplace_back("drive.csv", series_csv("t_us,omega_rad_per_us", drive.grid(), drive.omega()));
    out.files.emplace_back("target.csv", wavepacket_csv(target));
    out.files.emplace_back("photon.csv", wavepacket_csv(rec.photon));
    out.summary = {{"fidelity", ov.fidelity},
                   {"p_emit", rec.p_emit},
                   {"target_probability", target.norm()},
                   {"peak_omega_rad_per_us", drive.peak()}};
    out.diagnostics = {{"substeps", rec.substeps}, {"convergence_delta", rec.convergence_delta}};
    return out;
}

ScenarioOutputs run_sweep(const ScenarioConfig& cfg) {
    const auto& s = cfg.sweep;
    std::vector<double> t2(s.points);
    for (std::size_t i = 0; i < s.points; ++i)
        t2[i] = s.points == 1 ? s.t2_min
                              : s.t2_min + (s.t2_max - s.t2_min) * static_cast<double>(i) / static_cast<double>(s.points - 1);
    const auto rows = sweep_asymmetry(cfg.cavity, t2);
    ScenarioOutputs out;
    out.files.emplace_back("sweep.csv", render([&](std::ostream& os) {
                               os << "t2_ppm,p_emit,cooperativity\n";
                               for (const auto& r : rows)
                                   os << num(r.t2 * 1e6) << ',' << num(r.p_emit) << ',' << num(r.cooperativity) << '\n';
                           }));
    nlohmann::json interval = nullptr;
    double lo = 0.0, hi = 0.0;
    bool found = false;
    double best = 0.0;
    for (const auto& r : rows) {
        best = std::max(best, r.p_emit);
        if (r.p_emit > 0.8 && r.cooperativity > 1.0) {
            if (!found) lo = r.t2;
            hi = r.t2;
            found = true;
        }
    }
    if (found) interval = {lo * 1e6, hi * 1e6};
    out.summary = {{"strong_coupling_high_emission_t2_ppm", interval}, {"max_p_emit", best}};
    return out;
}

ScenarioOutputs run_mode_average(const ScenarioConfig& cfg) {
    const auto target = make_photon(cfg.photon);
    const auto shaping = cfg.cavity.with_g(cfg.mode.optimize_fraction * cfg.cavity.g);
    const auto drive = shape_drive_pulse(shaping, target);
    const auto dist = ModeDistribution::transverse_gaussian(cfg.cavity.g, cfg.mode.bins, cfg.mode.r_cut_over_w);
    const auto res = average_over_mode(cfg.cavity, drive, dist);
    const double target_norm = target.norm();
    ScenarioOutputs out;
    out.files.emplace_back("average.csv", render([&](std::ostream& os) {
                               os << "t_us,intensity,target_intensity\n";
                               const auto& g = res.photon.grid();
                               for (std::size_t i = 0; i < g.n; ++i)
                                   os << num(g.at(i)) << ',' << num(std::norm(res.photon[i])) << ','
                                      << num(std::norm(target.sample(g.at(i))) / target_norm) << '\n';
                           }));
    out.files.emplace_back("bins.csv", render([&](std::ostream& os) {
                               os << "g_rad_per_us,weight,p_emit\n";
                               for (const auto& b : res.bins)
                                   os << num(b.g) << ',' << num(b.weight) << ',' << num(b.p_emit) << '\n';
                           }));
    out.files.emplace_back("drive.csv", series_csv("t_us,omega_rad_per_us", drive.grid(), drive.omega()));
    out.summary = {{"mean_p_emit", res.mean_p_emit},
                   {"peak_time_us", res.photon.peak_time()},
                   {"target_peak_time_us", target.peak_time()},
                   {"l2_error", intensity_l2_distance(res.photon, target)},
                   {"optimize_fraction", cfg.mode.optimize_fraction}};
    return out;
}

/// First time at which the input has delivered all but `tail` of its energy.
double support_end(const PhotonWavepacket& w, double tail = 1e-4) {
    const double total = w.norm();
    double acc = 0.0;
    const auto& g = w.grid();
    for (std::size_t i = 1; i < g.n; ++i) {
        acc += 0.5 * g.dt * (std::norm(w[i - 1]) + std::norm(w[i]));
        if (acc >= (1.0 - tail) * total) return g.at(i);
    }
    return g.t_end();
}

ScenarioOutputs run_store(const ScenarioConfig& cfg) {
    const auto& m = cfg.medium;
    const auto& c = cfg.control;
    const double omega = c.omega_write.value_or(fit_control_rabi(m, c.tau, c.fill));
    const double omega_read = c.omega_read.value_or(omega);

    PhotonWavepacket input;
    ControlSchedule::StorageSpec spec;
    nlohmann::json bounds = nullptr;
    if (cfg.photon.shape == "matched") {
        const auto ms = matched_storage(m, omega, c.hold_time, c.ramp_time, c.dt, cfg.solver);
        input = ms.input;
        spec = ms.spec;
        bounds = {{"counter", ms.bound_counter}, {"co", ms.bound_co}};
    } else {
        input = make_photon(cfg.photon);
        spec.omega_write = omega;
        spec.switch_off = support_end(input);
        spec.ramp_time = c.ramp_time;
        spec.hold_time = c.hold_time;
        spec.dt = c.dt;
        spec.read_duration = std::max(3.0, 4.0 * m.length / group_velocity(m, omega_read));
    }
    spec.omega_read = omega_read;
    if (c.switch_off) spec.switch_off = *c.switch_off;
    if (c.read_duration) spec.read_duration = *c.read_duration;

    std::vector<RetrievalDirection> dirs;
    if (c.direction != "counter") dirs.push_back(RetrievalDirection::co);
    if (c.direction != "co") dirs.push_back(RetrievalDirection::counter);
    std::vector<PropagationResult> results(dirs.size());
    std::vector<ControlSchedule> schedules(dirs.size());
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        auto s = spec;
        s.direction = dirs[i];
        schedules[i] = ControlSchedule::storage(s);
    }
    parallel_for_each_index(dirs.size(), [&](std::size_t i) { results[i] = propagate(m, input, schedules[i], cfg.solver); });

    ScenarioOutputs out;
    out.files.emplace_back("input.csv", wavepacket_csv(input));
    out.files.emplace_back("spin_wave.csv",
                           render([&](std::ostream& os) { write_spin_wave_csv(os, spin_wave_profile(results.front())); }));
    nlohmann::json runs = nlohmann::json::array();
    nlohmann::json diag = nlohmann::json::array();
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        const auto& r = results[i];
        const auto tag = to_string(dirs[i]);
        out.files.emplace_back("control_" + tag + ".csv",
                               series_csv("t_us,omega_rad_per_us", schedules[i].grid, schedules[i].omega_c));
        out.files.emplace_back("output_" + tag + ".csv", wavepacket_csv(r.retrieved));
        out.files.emplace_back("field_map_" + tag + ".csv",
                               render([&](std::ostream& os) { write_field_map_csv(os, r.field_map); }));
        runs.push_back(summary_json(r, m));
        nlohmann::json d = {{"direction", tag}, {"nz", r.nz}, {"dt_us", r.dt}};
        if (r.refined_efficiency) d["refined_eta"] = *r.refined_efficiency;
        diag.push_back(d);
    }
    out.files.emplace_back("transmitted.csv", wavepacket_csv(results.front().transmitted));
    const auto f = check_feasibility(m, omega, c.tau);
    out.summary = {{"runs", runs},
                   {"omega_c_rad_per_us", omega},
                   {"input_shape", cfg.photon.shape},
                   {"spin_wave_front_half_fraction", results.front().spin_wave_snapshot.front_half_fraction()},
                   {"feasibility",
                    {{"group_velocity_cm_per_us", f.group_velocity},
                     {"lower_margin", f.lower_margin},
                     {"upper_margin", f.upper_margin},
                     {"adiabaticity", f.adiabaticity}}},
                   {"adiabatic_bounds", bounds}};
    out.diagnostics = {{"propagate", diag}};
    return out;
}

ScenarioOutputs run_feasibility(const ScenarioConfig& cfg) {
    const auto& c = cfg.control;
    const double omega = c.omega_write.value_or(fit_control_rabi(cfg.medium, c.tau, c.fill));
    const auto f = check_feasibility(cfg.medium, omega, c.tau);
    ScenarioOutputs out;
    out.summary = {{"omega_c_rad_per_us", omega},
                   {"tau_us", c.tau},
                   {"optical_depth", cfg.medium.optical_depth()},
                   {"group_velocity_cm_per_us", f.group_velocity},
                   {"lower_margin", f.lower_margin},
                   {"upper_margin", f.upper_margin},
                   {"adiabaticity", f.adiabaticity}};
    return out;
}

HomOptions hom_options(const ScenarioConfig& cfg) {
    HomOptions o;
    o.density_points = cfg.hom.density_points;
    return o;
}

ScenarioOutputs run_hom(const ScenarioConfig& cfg) {
    const auto a = make_photon(cfg.photon);
    const auto b = make_photon(cfg.photon_b.value_or(cfg.photon));
    const auto r = hom_coincidence(a, b, hom_options(cfg));
    ScenarioOutputs out;
    out.files.emplace_back("density.csv", render([&](std::ostream& os) { write_density_csv(os, r); }));
    out.summary = summary_json(r);
    out.summary["density_integral"] = r.density_integral;
    return out;
}

ScenarioOutputs run_beat(const ScenarioConfig& cfg) {
    const auto a = make_photon(cfg.photon);
    const auto b = a.detuned(cfg.hom.detuning);
    const auto trace = quantum_beat(a, b, cfg.hom.zero_fraction, hom_options(cfg));
    const auto r = hom_coincidence(a, b, hom_options(cfg));
    ScenarioOutputs out;
    out.files.emplace_back("beat.csv", render([&](std::ostream& os) { write_beat_csv(os, trace); }));
    out.files.emplace_back("density.csv", render([&](std::ostream& os) { write_density_csv(os, r); }));
    out.summary = summary_json(r);
    out.summary["zeros_us"] = trace.zeros;
    out.summary["expected_spacing_us"] = cfg.hom.detuning > 0.0 ? nlohmann::json(kTwoPi / cfg.hom.detuning) : nullptr;
    return out;
}

ScenarioOutputs run_rus(const ScenarioConfig& cfg) {
    const auto& rc = cfg.rus.config;
    const auto runs = run_rus_batch(rc, cfg.rus.runs);
    const auto s = summarize(runs);
    ScenarioOutputs out;
    out.files.emplace_back("runs.jsonl", render([&](std::ostream& os) { write_runs_jsonl(os, runs); }));
    nlohmann::json oracle = nullptr;
    if (rc.success_probability() > 0.0) {
        const auto b = expected_build_time(rc);
        out.files.emplace_back("summary.csv", render([&](std::ostream& os) { write_summary_csv(os, s, b); }));
        oracle = {{"attempts_per_edge", b.attempts_per_edge},
                  {"total_time_ms", b.mean_time},
                  {"mean_weight", expected_mean_weight(rc)},
                  {"exact", rc.ideal_loading()}};
    }
    if (cfg.rus.events) {
        const auto first = simulate_rus([&] {
            auto c = rc;
            c.rng_seed = run_seed(rc.rng_seed, 0);
            return c;
        }(), true);
        out.files.emplace_back("events.csv", render([&](std::ostream& os) { write_events_csv(os, first.events); }));
    }
    out.summary = {{"runs", s.runs},
                   {"mean_attempts_per_edge", s.mean_attempts_per_edge},
                   {"sem_attempts_per_edge", s.sem_attempts_per_edge},
                   {"mean_total_time_ms", s.mean_total_time},
                   {"sem_total_time_ms", s.sem_total_time},
                   {"mean_weight", s.mean_weight},
                   {"sem_weight", s.sem_weight},
                   {"success_probability", rc.success_probability()},
                   {"oracle", oracle}};
    return out;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream os(p, std::ios::binary);
    os << content;
    os.close();
    if (!os) throw std::runtime_error("cannot write " + p.string());
}

}  // namespace

std::string to_string(Scenario s) {
    for (const auto& [k, name] : kNames)
        if (k == s) return name;
    return "unknown";
}

Scenario parse_scenario(const std::string& s) {
    for (const auto& [k, name] : kNames)
        if (name == s) return k;
    throw std::invalid_argument(fmt::format("unknown scenario '{}'", s));
}

const std::vector<Scenario>& all_scenarios() {
    static const std::vector<Scenario> all = [] {
        std::vector<Scenario> v;
        for (const auto& [k, name] : kNames) v.push_back(k);
        return v;
    }();
    return all;
}

ScenarioConfig parse_config(const std::string& text, std::optional<Scenario> kind) {
    Keys keys(text);
    ScenarioConfig cfg;
    if (const auto s = keys.text("scenario")) {
        const auto declared = parse_scenario(*s);
        if (kind && *kind != declared)
            throw std::invalid_argument(
                fmt::format("config declares scenario '{}' but '{}' was requested", *s, to_string(*kind)));
        kind = declared;
    }
    if (!kind) throw std::invalid_argument("config: missing required key 'scenario'");
    cfg.kind = *kind;
    if (const auto af = keys.number("angular_factor")) {
        if (!(*af > 0.0) || !std::isfinite(*af)) throw std::invalid_argument("config: 'angular_factor' must be > 0");
        cfg.angular_factor = *af;
    }
    Reader r{keys, cfg.angular_factor};

    switch (cfg.kind) {
        case Scenario::emit: {
            read_cavity_core(r, cfg.cavity, true);
            cfg.cavity.t1 = r.ppm_or("cavity.t1", 0.0);
            cfg.cavity.t2 = r.ppm_or("cavity.t2", 0.0);
            cfg.cavity.h = r.ppm_or("cavity.h", 0.0);
            auto& d = cfg.drive;
            d.shape = keys.text("drive.shape").value_or(d.shape);
            if (d.shape != "smooth" && d.shape != "linear")
                throw std::invalid_argument("config: 'drive.shape' must be smooth or linear");
            d.omega_max = r.rate_or("drive.omega_max", cfg.cavity.g);
            d.t_on = r.nonneg_or("drive.t_on", d.t_on);
            d.ramp = r.positive_or("drive.ramp", d.ramp);
            d.t_end = r.positive_or("drive.t_end", d.t_end);
            d.dt = r.positive_or("drive.dt", d.dt);
            break;
        }
        case Scenario::shape:
        case Scenario::mode_average:
            read_cavity_core(r, cfg.cavity, true);
            cfg.photon = read_photon(r, "photon", "sin2");
            if (cfg.kind == Scenario::mode_average) {
                cfg.mode.bins = keys.count_or("mode.bins", cfg.mode.bins);
                cfg.mode.r_cut_over_w = r.positive_or("mode.r_cut_over_w", cfg.mode.r_cut_over_w);
                cfg.mode.optimize_fraction = r.positive_or("mode.optimize_fraction", cfg.mode.optimize_fraction);
                if (cfg.mode.optimize_fraction > 1.0)
                    throw std::invalid_argument("config: 'mode.optimize_fraction' must be <= 1");
            }
            break;
        case Scenario::sweep_cavity:
            read_cavity_core(r, cfg.cavity, false);
            cfg.cavity.t1 = r.ppm_or("cavity.t1", 2e-6);
            cfg.cavity.h = r.required_ppm("cavity.h");
            cfg.cavity.cavity_length = r.required_positive("cavity.cavity_length");
            cfg.sweep.t2_min = r.ppm_or("sweep.t2_min", cfg.sweep.t2_min);
            cfg.sweep.t2_max = r.ppm_or("sweep.t2_max", cfg.sweep.t2_max);
            cfg.sweep.points = keys.count_or("sweep.points", cfg.sweep.points);
            if (cfg.sweep.points == 0 || !(cfg.sweep.t2_min > 0.0) || cfg.sweep.t2_max < cfg.sweep.t2_min)
                throw std::invalid_argument("config: sweep needs points >= 1 and 0 < t2_min <= t2_max");
            break;
        case Scenario::store:
            read_medium(r, cfg.medium);
            read_control(r, cfg.control, true);
            cfg.photon = read_photon(r, "photon", "matched");
            read_solver(r, cfg.solver);
            break;
        case Scenario::feasibility:
            read_medium(r, cfg.medium);
            read_control(r, cfg.control, false);
            break;
        case Scenario::hom:
            cfg.photon = read_photon(r, "photon", "sin2");
            if (keys.has_section("photon_b")) cfg.photon_b = read_photon(r, "photon_b", cfg.photon.shape);
            cfg.hom.density_points = keys.count_or("hom.density_points", cfg.hom.density_points);
            break;
        case Scenario::beat:
            cfg.photon = read_photon(r, "photon", "sin2");
            cfg.hom.detuning = r.required_rate("hom.detuning");
            cfg.hom.density_points = keys.count_or("hom.density_points", cfg.hom.density_points);
            cfg.hom.zero_fraction = r.positive_or("hom.zero_fraction", cfg.hom.zero_fraction);
            break;
        case Scenario::rus:
            read_rus(r, cfg.rus);
            break;
    }
    if (cfg.kind != Scenario::store && cfg.photon.shape == "matched")
        throw std::invalid_argument("config: 'photon.shape = matched' is only valid for store");
    cfg.cavity.validate();
    keys.reject_unused();
    cfg.echo = keys.echo();
    return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path, std::optional<Scenario> kind) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::invalid_argument("cannot read config " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), kind);
}

ScenarioOutputs compute_scenario(const ScenarioConfig& cfg) {
    ScenarioOutputs out;
    switch (cfg.kind) {
        case Scenario::emit: out = run_emit(cfg); break;
        case Scenario::shape: out = run_shape(cfg); break;
        case Scenario::sweep_cavity: out = run_sweep(cfg); break;
        case Scenario::mode_average: out = run_mode_average(cfg); break;
        case Scenario::store: out = run_store(cfg); break;
        case Scenario::feasibility: out = run_feasibility(cfg); break;
        case Scenario::hom: out = run_hom(cfg); break;
        case Scenario::beat: out = run_beat(cfg); break;
        case Scenario::rus: out = run_rus(cfg); break;
    }
    out.files.emplace_back("summary.json", dump(out.summary));
    return out;
}

nlohmann::json RunManifest::to_json() const {
    nlohmann::json j = {{"scenario", scenario},
                        {"version", version},
                        {"status", ok ? "ok" : "error"},
                        {"config", config},
                        {"wall_seconds", wall_seconds},
                        {"outputs", outputs},
                        {"diagnostics", diagnostics}};
    if (!ok) j["error"] = error;
    return j;
}

RunManifest run_scenario(const ScenarioConfig& cfg, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    const auto t0 = std::chrono::steady_clock::now();
    RunManifest man;
    man.scenario = to_string(cfg.kind);
    man.version = HQN_VERSION;
    man.config = cfg.echo;

    const fs::path target = out_dir.empty() ? fs::path(".") : out_dir;
    const fs::path parent = fs::absolute(target).parent_path();
    fs::create_directories(parent);
    const fs::path staging = parent / fmt::format(".{}.staging-{}", fs::absolute(target).filename().string(), ::getpid());
    fs::remove_all(staging);
    fs::create_directories(staging);

    ScenarioOutputs outputs;
    try {
        outputs = compute_scenario(cfg);
        man.ok = true;
    } catch (const std::exception& e) {
        man.ok = false;
        man.error = e.what();
    }
    if (man.ok) {
        for (const auto& [name, content] : outputs.files) {
            write_file(staging / name, content);
            man.outputs.push_back(name);
        }
        man.diagnostics = outputs.diagnostics;
    }
    man.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_file(staging / "manifest.json", dump(man.to_json()));

    // Publish: data files first, the manifest last.
    fs::create_directories(target);
    for (const auto& name : man.outputs) fs::rename(staging / name, target / name);
    fs::rename(staging / "manifest.json", target / "manifest.json");
    fs::remove_all(staging);
    return man;
}

}  // namespace hqn::cli
