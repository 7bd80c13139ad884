// Serial reference vs OpenMP kernel timings.
//
//   hqn_bench [repeats]

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <limits>
#include <vector>

#include <fmt/format.h>

#include "hqn/cavity_source.hpp"
#include "hqn/interference.hpp"
#include "hqn/parallel.hpp"
#include "hqn/rus_network.hpp"

using namespace hqn;

namespace {

double best_of(int repeats, const std::function<void()>& fn) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

void row(const char* name, int repeats, const std::function<void()>& serial_fn, const std::function<void()>& omp_fn) {
    const double s = best_of(repeats, serial_fn);
    const double p = best_of(repeats, omp_fn);
    fmt::print("{:<22} {:>12.4f} {:>12.4f} {:>8.2f}x\n", name, s * 1e3, p * 1e3, s / p);
}

}  // namespace

int main(int argc, char** argv) {
    const int repeats = argc > 1 ? std::max(1, std::atoi(argv[1])) : 3;
    fmt::print("threads: {}\n", thread_count());
    fmt::print("{:<22} {:>12} {:>12} {:>9}\n", "kernel", "serial ms", "openmp ms", "speedup");

    CavityParams cav;
    cav.g = kTwoPi * 15.0;
    cav.kappa = kTwoPi * 12.0;
    cav.gamma = kTwoPi * 3.0;
    cav.t1 = 2e-6;
    cav.h = 2e-6;
    cav.cavity_length = 100.0;
    std::vector<double> t2(20000);
    for (std::size_t i = 0; i < t2.size(); ++i) t2[i] = 1e-6 + 1e-9 * static_cast<double>(i);
    row("sweep_asymmetry", repeats, [&] { serial::sweep_asymmetry(cav, t2); }, [&] { sweep_asymmetry(cav, t2); });

    const auto target = sin2_photon(TimeGrid::covering(0.0, 2.5, 1e-3), 0.5, 1.0, 0.6);
    const auto drive = shape_drive_pulse(cav, target);
    const auto dist = ModeDistribution::transverse_gaussian(cav.g, 20);
    row("average_over_mode", repeats, [&] { serial::average_over_mode(cav, drive, dist); },
        [&] { average_over_mode(cav, drive, dist); });

    const auto a = gaussian_photon(TimeGrid::covering(0.0, 6.0, 2e-3), 3.0, 1.5);
    const auto b = a.detuned(kTwoPi);
    row("hom_coincidence", repeats, [&] { serial::hom_coincidence(a, b); }, [&] { hom_coincidence(a, b); });
    row("quantum_beat", repeats, [&] { serial::quantum_beat(a, b); }, [&] { quantum_beat(a, b); });

    RusConfig rus;
    rus.gamma_s_memory = 1e-3;
    row("run_rus_batch", repeats, [&] { serial::run_rus_batch(rus, 20000); }, [&] { run_rus_batch(rus, 20000); });
    return 0;
}
