#include "hqn/interference.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "hqn/numfmt.hpp"
#include "hqn/parallel.hpp"

namespace hqn {

namespace {

struct Pair {
    TimeGrid grid;
    std::vector<cplx> a, b;
};

Pair on_common_grid(const PhotonWavepacket& a, const PhotonWavepacket& b) {
    Pair p;
    p.grid = common_grid(a.grid(), b.grid());
    const auto ra = a.grid() == p.grid ? a : a.resampled(p.grid);
    const auto rb = b.grid() == p.grid ? b : b.resampled(p.grid);
    p.a.assign(ra.amplitude().begin(), ra.amplitude().end());
    p.b.assign(rb.amplitude().begin(), rb.amplitude().end());
    return p;
}

Pair prepared(const PhotonWavepacket& a, const PhotonWavepacket& b, const HomOptions& opt) {
    for (const auto* w : {&a, &b}) {
        const double n = w->norm();
        if (!(n > 0.0)) throw std::invalid_argument("hom_coincidence: zero-norm input");
        if (!opt.rescale && std::abs(n - 1.0) > opt.norm_tolerance)
            throw std::invalid_argument(fmt::format("hom_coincidence: input not normalized (norm {:.9g})", n));
    }
    return opt.rescale ? on_common_grid(a.normalized(), b.normalized()) : on_common_grid(a, b);
}

double pair_density(cplx a1, cplx b1, cplx a2, cplx b2) {
    // (1/4)|a(t1) b(t2) - a(t2) b(t1)|^2 per ordering, both orderings summed.
    return 0.5 * std::norm(a1 * b2 - a2 * b1);
}

template <class ForEach>
CoincidenceRecord coincidence_impl(const PhotonWavepacket& a, const PhotonWavepacket& b, const HomOptions& opt,
                                   ForEach&& for_each) {
    if (opt.density_points < 2) throw std::invalid_argument("hom_coincidence: need density_points >= 2");
    const auto p = prepared(a, b, opt);
    const auto ov = mode_overlap(PhotonWavepacket(p.grid, p.a), PhotonWavepacket(p.grid, p.b));

    CoincidenceRecord r;
    r.fidelity = ov.fidelity;
    r.integrated = 0.5 * (1.0 - ov.fidelity);

    const std::size_t n = std::min(opt.density_points, p.grid.n);
    r.grid = TimeGrid(p.grid.t_start, p.grid.duration() / static_cast<double>(n - 1), n);
    const PhotonWavepacket wa(p.grid, p.a), wb(p.grid, p.b);
    std::vector<cplx> sa(n), sb(n);
    for (std::size_t i = 0; i < n; ++i) {
        sa[i] = wa.sample(r.grid.at(i));
        sb[i] = wb.sample(r.grid.at(i));
    }
    r.density.assign(n * n, 0.0);
    std::vector<double> row_integral(n, 0.0);
    for_each(n, [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = pair_density(sa[i], sb[i], sa[j], sb[j]);
            r.density[i * n + j] = v;
            s += trapezoid_weight(j, n, r.grid.dt) * v;
        }
        row_integral[i] = s;
    });
    // Only t1 < t2 or t1 > t2 are distinct events; half the square holds each.
    for (std::size_t i = 0; i < n; ++i) r.density_integral += 0.5 * trapezoid_weight(i, n, r.grid.dt) * row_integral[i];
    return r;
}

template <class ForEach>
BeatTrace beat_impl(const PhotonWavepacket& a, const PhotonWavepacket& b, double zero_fraction, const HomOptions& opt,
                    ForEach&& for_each) {
    const auto p = prepared(a, b, opt);
    const std::size_t n = p.grid.n;
    const double dt = p.grid.dt;
    BeatTrace t;
    const std::size_t m = 2 * n - 1;
    t.tau.resize(m);
    t.marginal.assign(m, 0.0);
    for_each(m, [&](std::size_t k) {
        // tau = (k - (n - 1)) dt; pairs (i, i + shift) inside the grid.
        const auto shift = static_cast<long long>(k) - static_cast<long long>(n - 1);
        t.tau[k] = static_cast<double>(shift) * dt;
        const long long lo = std::max<long long>(0, -shift);
        const long long hi = std::min<long long>(static_cast<long long>(n) - 1, static_cast<long long>(n) - 1 - shift);
        if (hi < lo) return;
        const auto count = static_cast<std::size_t>(hi - lo + 1);
        double s = 0.0;
        for (long long i = lo; i <= hi; ++i) {
            const auto i1 = static_cast<std::size_t>(i), i2 = static_cast<std::size_t>(i + shift);
            const double w = count > 1 ? trapezoid_weight(static_cast<std::size_t>(i - lo), count, dt) : 0.0;
            s += w * pair_density(p.a[i1], p.b[i1], p.a[i2], p.b[i2]);
        }
        t.marginal[k] = s;
    });

    double peak = 0.0;
    for (double v : t.marginal) peak = std::max(peak, v);
    for (std::size_t k = 1; k + 1 < m; ++k) {
        const double l = t.marginal[k - 1], c = t.marginal[k], r = t.marginal[k + 1];
        if (!(c <= l && c < r) || c > zero_fraction * peak) continue;
        double tau = t.tau[k];
        const double denom = l - 2.0 * c + r;
        if (denom > 0.0) tau += 0.5 * dt * (l - r) / denom;
        t.zeros.push_back(tau);
    }
    return t;
}

auto parallel_loop = [](std::size_t n, auto&& fn) { parallel_for_each_index(n, fn); };
auto serial_loop = [](std::size_t n, auto&& fn) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
};

}  // namespace

OverlapReport mode_overlap(const PhotonWavepacket& a, const PhotonWavepacket& b) {
    const double na = a.norm(), nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0)) throw std::invalid_argument("mode_overlap: zero-norm input");
    const auto p = on_common_grid(a, b);
    cplx s{};
    for (std::size_t i = 0; i < p.grid.n; ++i) s += trapezoid_weight(i, p.grid.n, p.grid.dt) * std::conj(p.a[i]) * p.b[i];
    // Norms on the common grid so that resampling cannot push fidelity past 1.
    const double ca = PhotonWavepacket(p.grid, p.a).norm(), cb = PhotonWavepacket(p.grid, p.b).norm();
    OverlapReport r;
    r.overlap = s;
    r.fidelity = std::min(1.0, std::norm(s) / (ca * cb));
    return r;
}

CoincidenceRecord hom_coincidence(const PhotonWavepacket& a, const PhotonWavepacket& b, const HomOptions& opt) {
    return coincidence_impl(a, b, opt, parallel_loop);
}

BeatTrace quantum_beat(const PhotonWavepacket& a, const PhotonWavepacket& b, double zero_fraction,
                       const HomOptions& opt) {
    return beat_impl(a, b, zero_fraction, opt, parallel_loop);
}

namespace serial {
CoincidenceRecord hom_coincidence(const PhotonWavepacket& a, const PhotonWavepacket& b, const HomOptions& opt) {
    return coincidence_impl(a, b, opt, serial_loop);
}
BeatTrace quantum_beat(const PhotonWavepacket& a, const PhotonWavepacket& b, double zero_fraction,
                       const HomOptions& opt) {
    return beat_impl(a, b, zero_fraction, opt, serial_loop);
}
}  // namespace serial

CoincidenceRecord storage_interference_test(const PhotonWavepacket& source, const PhotonWavepacket& memory_output,
                                            const HomOptions& opt) {
    if (!(source.norm() > 0.0) || !(memory_output.norm() > 0.0))
        throw std::invalid_argument("storage_interference_test: zero-norm input");
    const auto src = source.normalized();
    const auto out = memory_output.normalized();
    const auto aligned = out.shifted(src.centroid() - out.centroid());
    HomOptions o = opt;
    o.rescale = true;
    return hom_coincidence(src, aligned, o);
}

void write_density_csv(std::ostream& os, const CoincidenceRecord& r) {
    os << "t1_us,t2_us,p\n";
    for (std::size_t i = 0; i < r.grid.n; ++i)
        for (std::size_t j = 0; j < r.grid.n; ++j)
            os << num(r.grid.at(i)) << ',' << num(r.grid.at(j)) << ',' << num(r.at(i, j)) << '\n';
}

void write_beat_csv(std::ostream& os, const BeatTrace& b) {
    os << "tau_us,marginal\n";
    for (std::size_t k = 0; k < b.tau.size(); ++k) os << num(b.tau[k]) << ',' << num(b.marginal[k]) << '\n';
}

nlohmann::json summary_json(const CoincidenceRecord& r) {
    return {{"fidelity", r.fidelity}, {"coincidence", r.integrated}};
}

}  // namespace hqn
