#include "hqn/wavepacket.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "hqn/numfmt.hpp"

namespace hqn {

TimeGrid::TimeGrid(double t0, double step, std::size_t count)
    : t_start(t0), dt(step), n(count) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("TimeGrid: dt must be > 0");
    if (n < 2) throw std::invalid_argument("TimeGrid: need at least 2 samples");
}

TimeGrid TimeGrid::covering(double t0, double t1, double max_dt) {
    if (!(t1 > t0)) throw std::invalid_argument("TimeGrid: empty interval");
    const auto steps = static_cast<std::size_t>(std::ceil((t1 - t0) / max_dt - 1e-9));
    const std::size_t n = std::max<std::size_t>(steps, 1) + 1;
    return TimeGrid(t0, (t1 - t0) / static_cast<double>(n - 1), n);
}

std::vector<double> TimeGrid::times() const {
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = at(i);
    return t;
}

PhotonWavepacket::PhotonWavepacket(TimeGrid grid, std::vector<cplx> amplitude)
    : grid_(grid), amp_(std::move(amplitude)) {
    if (amp_.size() != grid_.n) throw std::invalid_argument("PhotonWavepacket: size does not match grid");
    for (const auto& a : amp_)
        if (!std::isfinite(a.real()) || !std::isfinite(a.imag()))
            throw std::invalid_argument("PhotonWavepacket: non-finite amplitude");
}

double trapezoid(std::span<const double> y, double dt) {
    if (y.size() < 2) return 0.0;
    double s = 0.5 * (y.front() + y.back());
    for (std::size_t i = 1; i + 1 < y.size(); ++i) s += y[i];
    return s * dt;
}

double PhotonWavepacket::norm() const {
    const auto I = intensity();
    return trapezoid(I, grid_.dt);
}

std::vector<double> PhotonWavepacket::intensity() const {
    std::vector<double> I(amp_.size());
    std::transform(amp_.begin(), amp_.end(), I.begin(), [](cplx a) { return std::norm(a); });
    return I;
}

double PhotonWavepacket::fwhm() const {
    const auto I = intensity();
    const auto peak_it = std::max_element(I.begin(), I.end());
    if (peak_it == I.end() || *peak_it <= 0.0) return 0.0;
    const double half = 0.5 * *peak_it;
    const auto ip = static_cast<std::size_t>(peak_it - I.begin());

    std::size_t lo = ip;
    while (lo > 0 && I[lo - 1] >= half) --lo;
    double t_lo = grid_.at(lo);
    if (lo > 0) t_lo -= grid_.dt * (I[lo] - half) / (I[lo] - I[lo - 1]);

    std::size_t hi = ip;
    while (hi + 1 < I.size() && I[hi + 1] >= half) ++hi;
    double t_hi = grid_.at(hi);
    if (hi + 1 < I.size()) t_hi += grid_.dt * (I[hi] - half) / (I[hi] - I[hi + 1]);
    return t_hi - t_lo;
}

double PhotonWavepacket::peak_time() const {
    const auto I = intensity();
    const auto ip = static_cast<std::size_t>(std::max_element(I.begin(), I.end()) - I.begin());
    double t = grid_.at(ip);
    if (ip > 0 && ip + 1 < I.size()) {
        const double denom = I[ip - 1] - 2.0 * I[ip] + I[ip + 1];
        if (denom < 0.0) t += 0.5 * grid_.dt * (I[ip - 1] - I[ip + 1]) / denom;
    }
    return t;
}

double PhotonWavepacket::centroid() const {
    double m0 = 0.0, m1 = 0.0;
    for (std::size_t i = 0; i < amp_.size(); ++i) {
        const double w = trapezoid_weight(i, amp_.size(), grid_.dt) * std::norm(amp_[i]);
        m0 += w;
        m1 += w * grid_.at(i);
    }
    if (m0 <= 0.0) throw std::domain_error("centroid of an empty wavepacket");
    return m1 / m0;
}

cplx PhotonWavepacket::sample(double t) const {
    const double x = (t - grid_.t_start) / grid_.dt;
    if (x < 0.0 || x > static_cast<double>(grid_.n - 1)) {
        // Accept round-off at the end points.
        if (std::abs(x) < 1e-9) return amp_.front();
        if (std::abs(x - static_cast<double>(grid_.n - 1)) < 1e-9) return amp_.back();
        return {0.0, 0.0};
    }
    const auto i = std::min(static_cast<std::size_t>(x), grid_.n - 2);
    const double f = x - static_cast<double>(i);
    return (1.0 - f) * amp_[i] + f * amp_[i + 1];
}

PhotonWavepacket PhotonWavepacket::scaled(cplx factor) const {
    auto a = amp_;
    for (auto& v : a) v *= factor;
    return {grid_, std::move(a)};
}

PhotonWavepacket PhotonWavepacket::normalized() const {
    const double n = norm();
    if (!(n > 0.0)) throw std::domain_error("cannot normalize a zero-norm wavepacket");
    return scaled(1.0 / std::sqrt(n));
}

PhotonWavepacket PhotonWavepacket::shifted(double dt) const {
    auto g = grid_;
    g.t_start += dt;
    return {g, amp_};
}

PhotonWavepacket PhotonWavepacket::resampled(const TimeGrid& grid) const {
    std::vector<cplx> a(grid.n);
    for (std::size_t i = 0; i < grid.n; ++i) a[i] = sample(grid.at(i));
    return {grid, std::move(a)};
}

PhotonWavepacket PhotonWavepacket::time_reversed() const {
    std::vector<cplx> a(amp_.rbegin(), amp_.rend());
    return {grid_, std::move(a)};
}

PhotonWavepacket PhotonWavepacket::detuned(double delta) const {
    auto a = amp_;
    for (std::size_t i = 0; i < a.size(); ++i) a[i] *= std::polar(1.0, -delta * grid_.at(i));
    return {grid_, std::move(a)};
}

TimeGrid common_grid(const TimeGrid& a, const TimeGrid& b) {
    const double t0 = std::min(a.t_start, b.t_start);
    const double t1 = std::max(a.t_end(), b.t_end());
    const double dt = std::min(a.dt, b.dt);
    if (a == b) return a;
    return TimeGrid::covering(t0, t1, dt);
}

double intensity_l2_distance(const PhotonWavepacket& a, const PhotonWavepacket& b) {
    const double na = a.norm(), nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0)) throw std::invalid_argument("intensity_l2_distance: zero-norm input");
    const auto g = common_grid(a.grid(), b.grid());
    std::vector<double> d(g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        const double t = g.at(i);
        const double x = std::norm(a.sample(t)) / na - std::norm(b.sample(t)) / nb;
        d[i] = x * x;
    }
    return std::sqrt(trapezoid(d, g.dt));
}

namespace {

PhotonWavepacket with_probability(const TimeGrid& grid, std::vector<cplx> a, double probability) {
    PhotonWavepacket w(grid, std::move(a));
    const double n = w.norm();
    if (!(n > 0.0)) throw std::invalid_argument("photon shape has no support on the grid");
    return w.scaled(std::sqrt(probability / n));
}

}  // namespace

PhotonWavepacket sin2_photon(const TimeGrid& grid, double t0, double duration, double probability) {
    if (!(duration > 0.0)) throw std::invalid_argument("sin2_photon: duration must be > 0");
    std::vector<cplx> a(grid.n);
    for (std::size_t i = 0; i < grid.n; ++i) {
        const double x = (grid.at(i) - t0) / duration;
        if (x > 0.0 && x < 1.0) {
            const double s = std::sin(kPi * x);
            a[i] = s * s;
        }
    }
    return with_probability(grid, std::move(a), probability);
}

PhotonWavepacket gaussian_photon(const TimeGrid& grid, double center, double fwhm, double probability) {
    if (!(fwhm > 0.0)) throw std::invalid_argument("gaussian_photon: fwhm must be > 0");
    // |phi|^2 = exp(-(t-c)^2 / (2 s^2)) with FWHM = 2 sqrt(2 ln 2) s.
    const double s = fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    std::vector<cplx> a(grid.n);
    for (std::size_t i = 0; i < grid.n; ++i) {
        const double u = (grid.at(i) - center) / s;
        a[i] = std::exp(-0.25 * u * u);
    }
    return with_probability(grid, std::move(a), probability);
}

PhotonWavepacket skewed_photon(const TimeGrid& grid, double t0, double rise, double fall,
                               double probability) {
    if (!(rise > 0.0) || !(fall > 0.0)) throw std::invalid_argument("skewed_photon: rise and fall must be > 0");
    std::vector<cplx> a(grid.n);
    for (std::size_t i = 0; i < grid.n; ++i) {
        const double t = grid.at(i) - t0;
        if (t > 0.0 && t <= rise) {
            const double s = std::sin(0.5 * kPi * t / rise);
            a[i] = s * s;
        } else if (t > rise && t < rise + fall) {
            const double c = std::cos(0.5 * kPi * (t - rise) / fall);
            a[i] = c * c;
        }
    }
    return with_probability(grid, std::move(a), probability);
}

void write_csv(std::ostream& os, const PhotonWavepacket& w) {
    os << "t_us,re_amp,im_amp\n";
    for (std::size_t i = 0; i < w.size(); ++i)
        os << num(w.grid().at(i)) << ',' << num(w[i].real()) << ',' << num(w[i].imag()) << '\n';
}

PhotonWavepacket read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("t_us,re_amp,im_amp", 0) != 0)
        throw std::runtime_error("wavepacket CSV: missing header t_us,re_amp,im_amp");
    std::vector<double> t;
    std::vector<cplx> a;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        double ti = 0, re = 0, im = 0;
        char c1 = 0, c2 = 0;
        if (!(ls >> ti >> c1 >> re >> c2 >> im) || c1 != ',' || c2 != ',')
            throw std::runtime_error("wavepacket CSV: malformed row '" + line + "'");
        t.push_back(ti);
        a.emplace_back(re, im);
    }
    if (t.size() < 2) throw std::runtime_error("wavepacket CSV: need at least 2 rows");
    const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
    for (std::size_t i = 1; i < t.size(); ++i)
        if (std::abs(t[i] - t[i - 1] - dt) > 1e-6 * dt + 1e-12)
            throw std::runtime_error("wavepacket CSV: time column is not uniformly spaced");
    return {TimeGrid(t.front(), dt, t.size()), std::move(a)};
}

}  // namespace hqn
