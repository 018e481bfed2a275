#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpswf/errors.hpp"
#include "gpswf/radial.hpp"

namespace gpswf {

struct BasisIndex {
    int N = 0;
    int m = 0;
    int n = 0;
    friend bool operator==(const BasisIndex&, const BasisIndex&) = default;
};

struct GridSpec {
    int L = 1; // samples at x = k/L for integer k in [-L, L]^3
};

inline void validate_grid(const GridSpec& grid) {
    if (grid.L < 1) throw std::invalid_argument("GridSpec: sampling rate must be at least 1");
}

// Lattice points k with k/L inside the open unit ball, lexicographic in
// (kx, ky, kz). Strict interior: the counts for L = 16..52 pin the convention.
inline std::vector<std::array<int, 3>> grid_points_in_ball(const GridSpec& grid) {
    validate_grid(grid);
    const int L = grid.L;
    const long long L2 = static_cast<long long>(L) * L;
    std::vector<std::array<int, 3>> pts;
    for (int kx = -L; kx <= L; ++kx)
        for (int ky = -L; ky <= L; ++ky) {
            const long long xy = static_cast<long long>(kx) * kx + static_cast<long long>(ky) * ky;
            if (xy >= L2) continue;
            for (int kz = -L; kz <= L; ++kz)
                if (xy + static_cast<long long>(kz) * kz < L2) pts.push_back({kx, ky, kz});
        }
    return pts;
}

// Complementary outside set on the enlarged cube [-factor, factor]^3 (in units
// of k/L): all k with k/L outside the closed unit ball and ||k/L||_inf <= factor.
inline std::vector<std::array<int, 3>> grid_points_outside_ball(const GridSpec& grid, int factor = 2) {
    validate_grid(grid);
    if (factor < 1) throw std::invalid_argument("grid_points_outside_ball: enlargement factor must be >= 1");
    const int L = grid.L, M = factor * L;
    const long long L2 = static_cast<long long>(L) * L;
    std::vector<std::array<int, 3>> pts;
    for (int kx = -M; kx <= M; ++kx)
        for (int ky = -M; ky <= M; ++ky)
            for (int kz = -M; kz <= M; ++kz) {
                const long long n2 = static_cast<long long>(kx) * kx +
                                     static_cast<long long>(ky) * ky +
                                     static_cast<long long>(kz) * kz;
                if (n2 > L2) pts.push_back({kx, ky, kz});
            }
    return pts;
}

struct TruncationEntry {
    int N = 0;
    int n = 0;
    double alpha_tilde = 0.0;
    double beta = 0.0;
};

// Pi_T: all (N, m, n) with sqrt(alpha_tilde / (1 - alpha_tilde)) > T, every
// |m| <= N admitted together; ordered by decreasing alpha_tilde, then N, then m.
struct TruncationSet {
    BandSpec band;
    double T = 1.0;
    std::vector<TruncationEntry> entries; // admitted (N, n) pairs in order
    std::vector<BasisIndex> indices;      // expanded with m

    std::size_t count() const { return indices.size(); }
};

inline double concentration_ratio(double alpha_tilde) {
    return std::sqrt(alpha_tilde / (1.0 - alpha_tilde));
}

inline TruncationSet truncation_set(const RadialBank& bank, double T) {
    if (!(T > 0.0)) throw std::invalid_argument("truncation_set: T must be positive");
    // the bank only keeps alpha_tilde > 1e-16; a T at or below the ratio of the
    // cutoff could admit indices the bank never solved for
    if (T <= concentration_ratio(1e-16))
        throw constraint_error("truncation_set: T is below the eigenvalue keep cutoff; N coverage is insufficient");
    TruncationSet set;
    set.band = bank.band();
    set.T = T;
    for (const RadialEigensystem& sys : bank.systems())
        for (int n = 0; n < sys.n_kept(); ++n)
            if (concentration_ratio(sys.alpha_tilde[n]) > T)
                set.entries.push_back({sys.N, n, sys.alpha_tilde[n], sys.beta[n]});
    std::stable_sort(set.entries.begin(), set.entries.end(),
                     [](const TruncationEntry& a, const TruncationEntry& b) {
                         if (a.alpha_tilde != b.alpha_tilde) return a.alpha_tilde > b.alpha_tilde;
                         if (a.N != b.N) return a.N < b.N;
                         return a.n < b.n;
                     });
    for (const TruncationEntry& e : set.entries)
        for (int m = -e.N; m <= e.N; ++m) set.indices.push_back({e.N, m, e.n});
    return set;
}

// The two printed leading terms of the |Pi_T| asymptotic; a qualitative
// estimate only (it underestimates the exact counts substantially).
inline double count_asymptotic(const BandSpec& band, double T) {
    validate_band(band);
    if (!(band.c > 1.0)) throw std::invalid_argument("count_asymptotic: requires c > 1");
    static const double pi = std::acos(-1.0);
    const double c = band.c;
    return c * c * c / 32.0 - c * c * std::log(c) * std::log(T) / (2.0 * pi * pi);
}

namespace detail {

inline SphericalPoint to_spherical(const std::array<double, 3>& x) {
    static const double pi = std::acos(-1.0);
    SphericalPoint p;
    p.r = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
    if (p.r == 0.0) return p; // polar = azimuth = 0 at the origin
    double u = x[2] / p.r;
    if (u > 1.0) u = 1.0;
    if (u < -1.0) u = -1.0;
    p.polar = std::acos(u);
    p.azimuth = std::atan2(x[1], x[0]);
    if (p.azimuth < 0.0) p.azimuth += 2.0 * pi;
    return p;
}

// Per-point spherical data for the in-ball lattice, with points of equal
// radius mapped to a shared slot so radial evaluations can be tabulated once.
struct LatticeGeometry {
    std::vector<std::array<int, 3>> lattice;
    std::vector<int> radius_slot;   // per point, into distinct_radius
    std::vector<double> cos_polar;  // per point
    std::vector<double> azimuth;    // per point
    std::vector<double> distinct_radius;

    explicit LatticeGeometry(const GridSpec& grid) {
        lattice = grid_points_in_ball(grid);
        const int L = grid.L;
        std::map<long long, int> slot_of;
        radius_slot.reserve(lattice.size());
        cos_polar.reserve(lattice.size());
        azimuth.reserve(lattice.size());
        for (const auto& k : lattice) {
            const long long n2 = static_cast<long long>(k[0]) * k[0] +
                                 static_cast<long long>(k[1]) * k[1] +
                                 static_cast<long long>(k[2]) * k[2];
            auto [it, fresh] = slot_of.emplace(n2, static_cast<int>(slot_of.size()));
            radius_slot.push_back(it->second);
            const std::array<double, 3> x = {k[0] / static_cast<double>(L), k[1] / static_cast<double>(L),
                                             k[2] / static_cast<double>(L)};
            const SphericalPoint sp = to_spherical(x);
            cos_polar.push_back(std::cos(sp.polar));
            azimuth.push_back(sp.azimuth);
        }
        distinct_radius.resize(slot_of.size());
        for (const auto& [n2, slot] : slot_of)
            distinct_radius[static_cast<std::size_t>(slot)] = std::sqrt(static_cast<double>(n2)) / L;
    }
};

} // namespace detail

// psi_{N,m,n}(point) = K_{n,N}(r) S_{m,N}(polar, azimuth), for points in the
// closed unit ball.
inline std::complex<double> eval_basis(const BasisIndex& index, const RadialEigensystem& sys,
                                       const std::array<double, 3>& point) {
    if (index.N != sys.N) throw std::invalid_argument("eval_basis: eigensystem degree does not match index");
    if (std::abs(index.m) > index.N) throw std::invalid_argument("eval_basis: |m| must not exceed N");
    SphericalPoint sp = detail::to_spherical(point);
    if (sp.r > 1.0 + 1e-12) throw std::invalid_argument("eval_basis: point outside the unit ball");
    if (sp.r > 1.0) sp.r = 1.0;
    const double K = eval_radial(sys, index.n, sp.r);
    return K * spherical_harmonic({index.N, index.m}, sp);
}

// Streaming sampled-basis generator over the in-ball lattice: per-index vectors
// of psi(k/L) (and the normalized psi_hat variant) in lattice order, computed
// one at a time. Radial values are cached per distinct lattice radius, so a
// column costs one Legendre sweep over the points.
class BasisSampler {
public:
    BasisSampler(const TruncationSet& set, const RadialBank& bank, GridSpec grid)
        : set_(set), grid_(grid), c_(bank.band().c), geo_(grid) {
        const std::size_t ndist = geo_.distinct_radius.size();
        ktab_.assign(set.entries.size() * ndist, 0.0);
        offsets_.reserve(set.entries.size() + 1);
        offsets_.push_back(0);
        for (const TruncationEntry& e : set.entries)
            offsets_.push_back(offsets_.back() + static_cast<std::size_t>(2 * e.N + 1));

        std::vector<std::vector<int>> row_of(static_cast<std::size_t>(bank.max_degree()) + 1);
        for (std::size_t i = 0; i < set.entries.size(); ++i) {
            const TruncationEntry& e = set.entries[i];
            auto& rows = row_of[static_cast<std::size_t>(e.N)];
            if (rows.size() <= static_cast<std::size_t>(e.n)) rows.resize(e.n + 1, -1);
            rows[static_cast<std::size_t>(e.n)] = static_cast<int>(i);
        }
        std::vector<double> vals;
        for (std::size_t slot = 0; slot < ndist; ++slot) {
            const double r = geo_.distinct_radius[slot];
            for (int N = 0; N <= bank.max_degree(); ++N) {
                if (row_of[static_cast<std::size_t>(N)].empty()) continue;
                eval_radial_all(bank.at(N), r, vals);
                const auto& rows = row_of[static_cast<std::size_t>(N)];
                for (std::size_t n = 0; n < rows.size(); ++n)
                    if (rows[n] >= 0) ktab_[static_cast<std::size_t>(rows[n]) * ndist + slot] = vals[n];
            }
        }
        ndist_ = ndist;
    }

    std::size_t count() const { return set_.indices.size(); }
    const std::vector<BasisIndex>& indices() const { return set_.indices; }
    const std::vector<std::array<int, 3>>& lattice() const { return geo_.lattice; }
    const TruncationSet& set() const { return set_; }
    GridSpec grid() const { return grid_; }

    // psi_{N,m,n}(k/L) over the lattice, in lattice order
    void sampled(std::size_t pos, std::complex<double>* out) const {
        const auto [entry, m] = locate(pos);
        const TruncationEntry& e = set_.entries[entry];
        const double* krow = ktab_.data() + entry * ndist_;
        for (std::size_t p = 0; p < geo_.lattice.size(); ++p) {
            const double K = krow[geo_.radius_slot[p]];
            const double leg = assoc_legendre_norm(e.N, m, geo_.cos_polar[p]);
            const double arg = m * geo_.azimuth[p];
            out[p] = std::complex<double>(std::cos(arg), std::sin(arg)) * (K * leg);
        }
    }

    // normalized variant psi_hat = (c / (2 pi L))^{3/2} alpha psi
    void sampled_normalized(std::size_t pos, std::complex<double>* out) const {
        sampled(pos, out);
        const auto [entry, m] = locate(pos);
        const std::complex<double> scale = normalization(entry);
        for (std::size_t p = 0; p < geo_.lattice.size(); ++p) out[p] *= scale;
    }

    std::complex<double> normalization(std::size_t entry) const {
        static const double pi = std::acos(-1.0);
        const TruncationEntry& e = set_.entries[entry];
        static const std::complex<double> phases[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
        const double s = std::pow(c_ / (2.0 * pi * grid_.L), 1.5);
        return phases[e.N & 3] * (s * e.beta);
    }

private:
    std::pair<std::size_t, int> locate(std::size_t pos) const {
        if (pos >= set_.indices.size()) throw std::out_of_range("BasisSampler: index position out of range");
        // offsets_ is small (one per (N,n) pair); binary search keeps this O(log)
        const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), pos);
        const std::size_t entry = static_cast<std::size_t>(it - offsets_.begin()) - 1;
        const int m = -set_.entries[entry].N + static_cast<int>(pos - offsets_[entry]);
        return {entry, m};
    }

    TruncationSet set_;
    GridSpec grid_;
    double c_;
    detail::LatticeGeometry geo_;
    std::vector<double> ktab_; // entries x distinct radii
    std::size_t ndist_ = 0;
    std::vector<std::size_t> offsets_;
};

// ---------------------------------------------------------------------------
// manifest: JSON description of a truncation set tied to a grid

struct BasisManifest {
    double c = 0.0;
    int L = 0;
    double T = 0.0;
    std::vector<BasisIndex> indices;
    std::vector<double> alpha_tilde; // aligned with indices
};

inline void write_basis_manifest(const std::filesystem::path& path, const TruncationSet& set, GridSpec grid) {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["c"] = set.band.c;
    j["L"] = grid.L;
    j["T"] = set.T;
    j["count"] = set.indices.size();
    nlohmann::ordered_json idx = nlohmann::ordered_json::array();
    for (std::size_t e = 0; e < set.entries.size(); ++e)
        for (int m = -set.entries[e].N; m <= set.entries[e].N; ++m)
            idx.push_back({set.entries[e].N, m, set.entries[e].n, set.entries[e].alpha_tilde});
    j["indices"] = std::move(idx);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot write basis manifest: " + path.string());
    out << j.dump() << '\n';
    if (!out) throw io_error("short write on basis manifest: " + path.string());
}

inline BasisManifest read_basis_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read basis manifest: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw format_error("basis manifest is not valid JSON: " + path.string() + ": " + e.what());
    }
    try {
        if (j.at("format_version").get<int>() != 1)
            throw format_error("basis manifest format version not supported: " + path.string());
        BasisManifest m;
        m.c = j.at("c").get<double>();
        m.L = j.at("L").get<int>();
        m.T = j.at("T").get<double>();
        const auto& idx = j.at("indices");
        for (const auto& row : idx) {
            if (!row.is_array() || row.size() != 4)
                throw format_error("basis manifest index rows must be [N, m, n, alpha_tilde]: " + path.string());
            m.indices.push_back({row[0].get<int>(), row[1].get<int>(), row[2].get<int>()});
            m.alpha_tilde.push_back(row[3].get<double>());
        }
        if (j.at("count").get<std::size_t>() != m.indices.size())
            throw format_error("basis manifest count does not match its index list: " + path.string());
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw format_error("basis manifest missing fields: " + path.string() + ": " + e.what());
    }
}

} // namespace gpswf
