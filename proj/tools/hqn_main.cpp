#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "hqn/cli.hpp"
#include "hqn/parallel.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Hybrid quantum network simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    int threads = 0;
    for (const auto kind : hqn::cli::all_scenarios()) {
        auto* sub = app.add_subcommand(hqn::cli::to_string(kind));
        sub->add_option("--config", config_path, "INI scenario file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory")->capture_default_str();
        sub->add_option("--seed", seed, "override rus.rng_seed");
        sub->add_option("--threads", threads, "worker threads (0 = OpenMP default)")->check(CLI::NonNegativeNumber);
    }
    CLI11_PARSE(app, argc, argv);

    const auto* sub = app.get_subcommands().front();
    try {
        auto cfg = hqn::cli::load_config(config_path, hqn::cli::parse_scenario(sub->get_name()));
        if (sub->count("--seed")) {
            cfg.rus.config.rng_seed = seed;
            cfg.echo["rus.rng_seed"] = std::to_string(seed);
        }
        if (threads > 0) hqn::set_thread_count(threads);
        const auto manifest = hqn::cli::run_scenario(cfg, out_dir);
        if (!manifest.ok) {
            std::cerr << "error: " << manifest.error << '\n';
            return 1;
        }
        std::cout << manifest.to_json()["wall_seconds"].get<double>() << " s, " << manifest.outputs.size()
                  << " files in " << out_dir << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
