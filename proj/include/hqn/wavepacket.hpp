#pragma once

// Time grids and single-photon temporal wavepackets.
//
// Units throughout the library: time in microseconds, angular rates in
// rad/us, lengths in cm (memory) or um (cavity geometry). Photon amplitudes
// carry us^(-1/2) so that sum |phi|^2 dt is a probability.

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace hqn {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Uniform sampling t_i = t_start + i*dt, i in [0, n).
struct TimeGrid {
    double t_start = 0.0;
    double dt = 1e-3;
    std::size_t n = 2;

    TimeGrid() = default;
    TimeGrid(double t0, double step, std::size_t count);

    /// Grid covering [t0, t1] with spacing no larger than max_dt.
    static TimeGrid covering(double t0, double t1, double max_dt);

    double at(std::size_t i) const { return t_start + dt * static_cast<double>(i); }
    double t_end() const { return at(n - 1); }
    double duration() const { return dt * static_cast<double>(n - 1); }
    std::vector<double> times() const;

    bool operator==(const TimeGrid&) const = default;
};

/// Complex temporal mode phi(t) on a TimeGrid.
class PhotonWavepacket {
public:
    PhotonWavepacket() = default;
    PhotonWavepacket(TimeGrid grid, std::vector<cplx> amplitude);

    const TimeGrid& grid() const { return grid_; }
    std::span<const cplx> amplitude() const { return amp_; }
    std::size_t size() const { return amp_.size(); }
    cplx operator[](std::size_t i) const { return amp_[i]; }

    /// Trapezoid-rule integral of |phi|^2.
    double norm() const;
    std::vector<double> intensity() const;
    /// Full width at half maximum of |phi|^2 with linear edge interpolation.
    double fwhm() const;
    /// Time of the intensity maximum, refined by a parabola through the
    /// three samples around the peak.
    double peak_time() const;
    /// Intensity-weighted mean time.
    double centroid() const;

    /// Linear interpolation; zero outside the grid.
    cplx sample(double t) const;

    PhotonWavepacket scaled(cplx factor) const;
    PhotonWavepacket normalized() const;
    PhotonWavepacket shifted(double dt) const;
    PhotonWavepacket resampled(const TimeGrid& grid) const;
    /// phi(t) -> phi(t0 + t1 - t), mirrored about the grid midpoint.
    PhotonWavepacket time_reversed() const;
    /// phi(t) * exp(-i*delta*t).
    PhotonWavepacket detuned(double delta) const;

private:
    TimeGrid grid_{};
    std::vector<cplx> amp_;
};

/// Trapezoid weight of sample i on an n-point grid.
inline double trapezoid_weight(std::size_t i, std::size_t n, double dt) {
    return (i == 0 || i + 1 == n) ? 0.5 * dt : dt;
}

double trapezoid(std::span<const double> y, double dt);

/// Smallest grid spanning both inputs at the finer of their steps.
TimeGrid common_grid(const TimeGrid& a, const TimeGrid& b);

/// sqrt(int (Ia - Ib)^2 dt) of the two intensity profiles, each scaled to
/// unit area, on their common grid.
double intensity_l2_distance(const PhotonWavepacket& a, const PhotonWavepacket& b);

// Standard shapes, all real and non-negative in amplitude.

/// phi(t) = A sin^2(pi (t - t0)/duration) on [t0, t0 + duration], zero
/// elsewhere, scaled to squared norm `probability`.
PhotonWavepacket sin2_photon(const TimeGrid& grid, double t0, double duration,
                             double probability = 1.0);

/// Gaussian amplitude with intensity FWHM `fwhm`, centred at `center`.
PhotonWavepacket gaussian_photon(const TimeGrid& grid, double center, double fwhm,
                                 double probability = 1.0);

/// Asymmetric shape: sin^2 rise over `rise`, then cos^2 fall over `fall`.
PhotonWavepacket skewed_photon(const TimeGrid& grid, double t0, double rise,
                               double fall, double probability = 1.0);

/// CSV with header `t_us,re_amp,im_amp`.
void write_csv(std::ostream& os, const PhotonWavepacket& w);
PhotonWavepacket read_csv(std::istream& is);

}  // namespace hqn
