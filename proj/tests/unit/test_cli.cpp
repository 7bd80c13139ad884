#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "hqn/cli.hpp"

using namespace hqn;
using namespace hqn::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("hqn_cli_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

const char* kStore = R"(
scenario = store
[medium]
length = 20
optical_depth = 15
gamma_p_natural = 3
collision_rate = 200
[control]
direction = counter
[solver]
nz = 200
check_convergence = false
)";

}  // namespace

TEST_CASE("minimal emit config converts MHz to rad/us") {
    const auto cfg = parse_config("scenario = emit\n[cavity]\ng = 15\nkappa = 12\ngamma = 3\n");
    CHECK(cfg.kind == Scenario::emit);
    CHECK(cfg.cavity.g == doctest::Approx(kTwoPi * 15.0));
    CHECK(cfg.cavity.kappa == doctest::Approx(kTwoPi * 12.0));
    CHECK(cfg.cavity.gamma == doctest::Approx(kTwoPi * 3.0));
}

TEST_CASE("angular factor one passes rates through") {
    const auto cfg = parse_config("angular_factor = 1\n[cavity]\ng = 15\nkappa = 12\ngamma = 3\nt2 = 100\n", Scenario::emit);
    CHECK(cfg.cavity.g == 15.0);
    CHECK(cfg.cavity.kappa == 12.0);
    CHECK(cfg.cavity.t2 == doctest::Approx(100e-6));
}

TEST_CASE("config errors name the key") {
    CHECK_THROWS_WITH(parse_config("[medium]\noptical_depth = 15\ngamma_p_natural = 3\n", Scenario::store),
                      doctest::Contains("length"));
    CHECK_THROWS_WITH(parse_config("[cavity]\ng = 15\nkappa = 12\ngamma = 3\ncolour = red\n", Scenario::emit),
                      doctest::Contains("cavity.colour"));
    CHECK_THROWS_WITH(parse_config("[cavity]\ng = 15\nkappa = -12\ngamma = 3\n", Scenario::emit),
                      doctest::Contains("cavity.kappa"));
    CHECK_THROWS_WITH(parse_config("[cavity]\ng = fifteen\nkappa = 12\ngamma = 3\n", Scenario::emit),
                      doctest::Contains("cavity.g"));
    CHECK_THROWS(parse_config("[cavity]\ng = 15\n"));  // no scenario
    CHECK_THROWS(parse_config("scenario = rus\n", Scenario::emit));
    CHECK_THROWS(parse_config("scenario = emit\n[medium]\nlength = 3\n[cavity]\ng = 1\nkappa = 1\ngamma = 1\n"));
}

TEST_CASE("medium accepts alpha or optical depth, not both") {
    const auto a = parse_config("[medium]\nlength = 20\nalpha = 0.75\ngamma_p_natural = 3\n", Scenario::feasibility);
    const auto d = parse_config("[medium]\nlength = 20\noptical_depth = 15\ngamma_p_natural = 3\n", Scenario::feasibility);
    CHECK(a.medium.alpha == doctest::Approx(d.medium.alpha));
    CHECK_THROWS(parse_config("[medium]\nlength = 20\nalpha = 1\noptical_depth = 15\ngamma_p_natural = 3\n",
                              Scenario::feasibility));
}

TEST_CASE("rus arrival rate may be infinite") {
    const auto cfg = parse_config("[rus]\natom_arrival_rate = inf\nruns = 10\n", Scenario::rus);
    CHECK(cfg.rus.config.ideal_loading());
    CHECK(cfg.rus.runs == 10);
}

TEST_CASE("every scenario name round trips") {
    for (auto s : all_scenarios()) CHECK(parse_scenario(to_string(s)) == s);
    CHECK_THROWS(parse_scenario("teleport"));
}

TEST_CASE("sweep-cavity writes a monotone csv and a manifest") {
    const auto out = scratch("sweep");
    const auto cfg = parse_config(R"(
scenario = sweep-cavity
[cavity]
g = 15
gamma = 3
t1 = 2
h = 2
cavity_length = 100
[sweep]
t2_min = 1
t2_max = 60
points = 60
)");
    const auto man = run_scenario(cfg, out);
    REQUIRE(man.ok);
    std::istringstream csv(slurp(out / "sweep.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "t2_ppm,p_emit,cooperativity");
    double last = -1.0;
    int rows = 0;
    while (std::getline(csv, line)) {
        const auto c1 = line.find(',');
        const double p = std::stod(line.substr(c1 + 1));
        CHECK(p > last);
        last = p;
        ++rows;
    }
    CHECK(rows == 60);
    const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(manifest["status"] == "ok");
    CHECK(manifest["config"]["cavity.g"] == "15");
    for (const auto& f : manifest["outputs"]) CHECK(fs::exists(out / f.get<std::string>()));
}

TEST_CASE("store runs are byte identical") {
    const auto cfg = parse_config(kStore);
    const auto a = scratch("store_a"), b = scratch("store_b");
    REQUIRE(run_scenario(cfg, a).ok);
    REQUIRE(run_scenario(cfg, b).ok);
    for (const auto& e : fs::directory_iterator(a)) {
        if (e.path().filename() == "manifest.json") continue;
        CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
    }
    const auto s = nlohmann::json::parse(slurp(a / "summary.json"));
    CHECK(s["runs"][0]["direction"] == "counter");
}

TEST_CASE("rus writes one record per run") {
    auto cfg = parse_config("[rus]\nruns = 10000\n", Scenario::rus);
    const auto out = scratch("rus");
    REQUIRE(run_scenario(cfg, out).ok);
    std::istringstream is(slurp(out / "runs.jsonl"));
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("seed"));
        CHECK(j["attempts"].size() == 4);
        ++n;
    }
    CHECK(n == 10000);
}

TEST_CASE("failed runs publish only the manifest") {
    const auto cfg = parse_config("[cavity]\ng = 15\nkappa = 12\ngamma = 3\n[photon]\nprobability = 1\n", Scenario::shape);
    const auto out = scratch("fail");
    const auto man = run_scenario(cfg, out);
    CHECK_FALSE(man.ok);
    CHECK(man.error.find("emission bound") != std::string::npos);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(out)) names.push_back(e.path().filename().string());
    REQUIRE(names.size() == 1);
    CHECK(names[0] == "manifest.json");
    const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(manifest["status"] == "error");
    for (const auto& e : fs::directory_iterator(out.parent_path()))
        CHECK(e.path().filename().string().find(".hqn_cli_test_fail.staging") == std::string::npos);
}

TEST_CASE("each scenario runs from a small config") {
    const std::vector<std::pair<Scenario, std::string>> cases = {
        {Scenario::emit, "[cavity]\ng = 15\nkappa = 12\ngamma = 3\n[drive]\nomega_max = 20\n"},
        {Scenario::shape, "[cavity]\ng = 15\nkappa = 12\ngamma = 3\n[photon]\nprobability = 0.6\n"},
        {Scenario::mode_average,
         "[cavity]\ng = 15\nkappa = 12\ngamma = 3\n[photon]\nprobability = 0.6\n[mode]\nbins = 5\n"},
        {Scenario::feasibility, "[medium]\nlength = 20\noptical_depth = 15\ngamma_p_natural = 3\n"},
        {Scenario::hom, "[photon]\nshape = gaussian\ncenter = 2\n[photon_b]\nshape = sin2\n"},
        {Scenario::beat, "[photon]\nshape = gaussian\ncenter = 3\nfwhm = 2\nt_end = 6\n[hom]\ndetuning = 1\n"},
    };
    for (const auto& [kind, text] : cases) {
        CAPTURE(to_string(kind));
        const auto out = scratch(to_string(kind));
        const auto man = run_scenario(parse_config(text, kind), out);
        CHECK(man.ok);
        CHECK(fs::exists(out / "summary.json"));
    }
}
