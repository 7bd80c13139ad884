#pragma once

// Scenario configuration (INI), dispatch to the physics modules and atomic
// output of data files plus a run manifest.
//
// Config units: rates and Rabi frequencies in MHz (scaled by angular_factor
// to rad/us), mirror transmittances and scatter in ppm, cavity geometry in
// um, memory lengths in cm, times in us, atom arrival rate in 1/ms and
// interaction time in ms.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hqn/cavity_source.hpp"
#include "hqn/eit_memory.hpp"
#include "hqn/rus_network.hpp"

namespace hqn::cli {

enum class Scenario { emit, shape, sweep_cavity, mode_average, store, feasibility, hom, beat, rus };

std::string to_string(Scenario s);
Scenario parse_scenario(const std::string& s);
const std::vector<Scenario>& all_scenarios();

struct PhotonSpec {
    std::string shape = "sin2";  // sin2 | gaussian | skewed | matched (store only)
    double t0 = 0.5;             // sin2, skewed
    double duration = 1.0;       // sin2
    double center = 2.0;         // gaussian
    double fwhm = 1.0;           // gaussian
    double rise = 0.5;           // skewed
    double fall = 0.5;           // skewed
    double probability = 1.0;
    double detuning = 0.0;       // rad/us, applied as exp(-i detuning t)
    std::optional<double> t_end;
    double dt = 1e-3;
};

struct DriveSpec {
    std::string shape = "smooth";  // smooth | linear
    double t_on = 0.0;
    double ramp = 1.0;
    double omega_max = 0.0;  // default: cavity g
    double t_end = 3.0;
    double dt = 1e-3;
};

struct SweepSpec {
    double t2_min = 1e-6;
    double t2_max = 60e-6;
    std::size_t points = 60;
};

struct ModeSpec {
    std::size_t bins = 20;
    double r_cut_over_w = 1.0;
    double optimize_fraction = 1.0;  // drive shaped for g = fraction * g_max
};

struct ControlSpec {
    std::optional<double> omega_write;  // default: fit_control_rabi(tau, fill)
    std::optional<double> omega_read;   // default: omega_write
    double tau = 1.0;
    double fill = 0.8;
    double ramp_time = 0.1;
    double hold_time = 0.5;
    std::optional<double> switch_off;    // default: end of the input support
    std::optional<double> read_duration;
    double dt = 2e-3;
    std::string direction = "both";      // co | counter | both
};

struct HomSpec {
    double detuning = 0.0;  // beat: second photon offset, rad/us
    std::size_t density_points = 201;
    double zero_fraction = 1e-3;
};

struct RusSpec {
    RusConfig config;
    std::size_t runs = 1000;
    bool events = false;  // event log of the first run
};

struct ScenarioConfig {
    Scenario kind = Scenario::emit;
    double angular_factor = kTwoPi;
    CavityParams cavity;
    DriveSpec drive;
    PhotonSpec photon;
    std::optional<PhotonSpec> photon_b;
    SweepSpec sweep;
    ModeSpec mode;
    LambdaMedium medium;
    ControlSpec control;
    PropagateOptions solver;
    HomSpec hom;
    RusSpec rus;
    /// Every key read, as written in the input ("section.key" -> text).
    nlohmann::json echo = nlohmann::json::object();
};

/// Parses an INI document. `kind` overrides (or must agree with) a top-level
/// `scenario` key. Throws std::invalid_argument naming missing, unknown or
/// non-physical keys.
ScenarioConfig parse_config(const std::string& text, std::optional<Scenario> kind = {});
ScenarioConfig load_config(const std::filesystem::path& path, std::optional<Scenario> kind = {});

/// Files of one run, in write order, and scenario diagnostics.
struct ScenarioOutputs {
    std::vector<std::pair<std::string, std::string>> files;
    nlohmann::json summary = nlohmann::json::object();
    nlohmann::json diagnostics = nlohmann::json::object();
};

ScenarioOutputs compute_scenario(const ScenarioConfig& cfg);

struct RunManifest {
    std::string scenario;
    std::string version;
    nlohmann::json config;
    double wall_seconds = 0.0;
    std::vector<std::string> outputs;
    nlohmann::json diagnostics = nlohmann::json::object();
    bool ok = false;
    std::string error;

    nlohmann::json to_json() const;
};

/// Computes the scenario and publishes its files and manifest.json into
/// `out_dir`. Files are staged in a sibling directory and renamed into place;
/// on failure only a manifest carrying the error is published.
RunManifest run_scenario(const ScenarioConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace hqn::cli
