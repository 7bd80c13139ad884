#pragma once

// Two-photon interference of temporal modes at a balanced beamsplitter.

#include <cstddef>
#include <ostream>
#include <vector>

#include "json.hpp"

#include "hqn/wavepacket.hpp"

namespace hqn {

struct OverlapReport {
    cplx overlap;           // int conj(a) b dt
    double fidelity = 0.0;  // |overlap|^2 / (|a|^2 |b|^2)
};

struct CoincidenceRecord {
    double integrated = 0.0;  // (1 - fidelity) / 2
    double fidelity = 0.0;
    /// Joint density p(t1, t2) of clicks in different detectors, both
    /// orderings summed, on `grid` x `grid`, row-major in t1. Its integral over
    /// the square counts each event twice.
    TimeGrid grid;
    std::vector<double> density;
    /// Half the 2D trapezoid integral of `density`: the coincidence again.
    double density_integral = 0.0;

    double at(std::size_t i1, std::size_t i2) const { return density[i1 * grid.n + i2]; }
};

struct BeatTrace {
    std::vector<double> tau;       // t2 - t1
    std::vector<double> marginal;  // int p(t, t + tau) dt
    std::vector<double> zeros;     // tau of the near-zero minima, ascending
};

struct HomOptions {
    /// Density grid points per axis. Integrated values use the full grids.
    std::size_t density_points = 301;
    /// Inputs must have unit norm within this tolerance unless `rescale`.
    double norm_tolerance = 1e-6;
    bool rescale = false;
};

OverlapReport mode_overlap(const PhotonWavepacket& a, const PhotonWavepacket& b);

CoincidenceRecord hom_coincidence(const PhotonWavepacket& a, const PhotonWavepacket& b, const HomOptions& opt = {});

/// tau-marginal of the joint density on the common grid of a and b. Minima
/// below `zero_fraction` of the peak are reported as zeros.
BeatTrace quantum_beat(const PhotonWavepacket& a, const PhotonWavepacket& b, double zero_fraction = 1e-3,
                       const HomOptions& opt = {});

/// Retrieved photon against a fresh source photon: both normalized, the
/// retrieved packet shifted so the centroids coincide.
CoincidenceRecord storage_interference_test(const PhotonWavepacket& source, const PhotonWavepacket& memory_output,
                                            const HomOptions& opt = {});

namespace serial {
CoincidenceRecord hom_coincidence(const PhotonWavepacket& a, const PhotonWavepacket& b, const HomOptions& opt = {});
BeatTrace quantum_beat(const PhotonWavepacket& a, const PhotonWavepacket& b, double zero_fraction = 1e-3,
                       const HomOptions& opt = {});
}  // namespace serial

void write_density_csv(std::ostream& os, const CoincidenceRecord& r);
void write_beat_csv(std::ostream& os, const BeatTrace& b);
/// {fidelity, coincidence}
nlohmann::json summary_json(const CoincidenceRecord& r);

}  // namespace hqn
