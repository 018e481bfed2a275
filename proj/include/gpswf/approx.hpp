#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gpswf/basis.hpp"
#include "gpswf/errors.hpp"
#include "gpswf/parallel.hpp"
#include "gpswf/quadrature.hpp"
#include "gpswf/radial.hpp"

namespace gpswf {

// ---------------------------------------------------------------------------
// volume samples: f(k/L) on the full cube k in [-L, L]^3, kx slowest and kz
// fastest; raw little-endian float64 (interleaved re, im unless real_flag)
// plus a JSON sidecar at <path>.json

struct VolumeSamples {
    GridSpec grid;
    double c = 0.0; // bandlimit tag carried in the sidecar
    bool real_flag = false;
    std::vector<std::complex<double>> data;

    int side() const { return 2 * grid.L + 1; }
    std::size_t index(int kx, int ky, int kz) const {
        const int L = grid.L, s = side();
        return (static_cast<std::size_t>(kx + L) * s + static_cast<std::size_t>(ky + L)) * s +
               static_cast<std::size_t>(kz + L);
    }
    std::complex<double>& at(int kx, int ky, int kz) { return data[index(kx, ky, kz)]; }
    const std::complex<double>& at(int kx, int ky, int kz) const { return data[index(kx, ky, kz)]; }
};

inline VolumeSamples make_volume(GridSpec grid, double c = 0.0, bool real_flag = false) {
    validate_grid(grid);
    VolumeSamples vol;
    vol.grid = grid;
    vol.c = c;
    vol.real_flag = real_flag;
    vol.data.assign(static_cast<std::size_t>(vol.side()) * vol.side() * vol.side(), {0.0, 0.0});
    return vol;
}

inline void write_volume(const std::filesystem::path& path, const VolumeSamples& vol) {
    validate_grid(vol.grid);
    const std::size_t n = static_cast<std::size_t>(vol.side()) * vol.side() * vol.side();
    if (vol.data.size() != n) throw std::invalid_argument("write_volume: sample count does not match the cube");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write volume: " + path.string());
    std::vector<double> raw;
    raw.reserve(vol.real_flag ? n : 2 * n);
    for (const std::complex<double>& v : vol.data) {
        raw.push_back(v.real());
        if (!vol.real_flag) raw.push_back(v.imag());
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(double)));
    if (!out) throw io_error("short write on volume: " + path.string());
    out.close();

    nlohmann::ordered_json j;
    j["L"] = vol.grid.L;
    j["c"] = vol.c;
    j["dtype"] = "float64";
    j["real_flag"] = vol.real_flag;
    j["format_version"] = 1;
    const std::filesystem::path side = path.string() + ".json";
    std::ofstream hdr(side, std::ios::trunc);
    if (!hdr) throw io_error("cannot write volume header: " + side.string());
    hdr << j.dump() << '\n';
    if (!hdr) throw io_error("short write on volume header: " + side.string());
}

inline VolumeSamples read_volume(const std::filesystem::path& path) {
    const std::filesystem::path side = path.string() + ".json";
    std::ifstream hdr(side);
    if (!hdr) throw format_error("volume header missing: " + side.string());
    nlohmann::json j;
    try {
        hdr >> j;
    } catch (const nlohmann::json::exception& e) {
        throw format_error("volume header is not valid JSON: " + side.string() + ": " + e.what());
    }
    VolumeSamples vol;
    try {
        if (j.at("format_version").get<int>() != 1)
            throw format_error("volume header format version not supported: " + side.string());
        if (j.at("dtype").get<std::string>() != "float64")
            throw format_error("volume dtype must be float64: " + side.string());
        vol.grid.L = j.at("L").get<int>();
        vol.c = j.at("c").get<double>();
        vol.real_flag = j.at("real_flag").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw format_error("volume header missing fields: " + side.string() + ": " + e.what());
    }
    if (vol.grid.L < 1) throw format_error("volume header has a non-positive sampling rate: " + side.string());

    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot read volume: " + path.string());
    const std::size_t n = static_cast<std::size_t>(vol.side()) * vol.side() * vol.side();
    const std::size_t doubles = vol.real_flag ? n : 2 * n;
    std::vector<double> raw(doubles);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(doubles * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != doubles * sizeof(double))
        throw format_error("volume payload shorter than its header promises: " + path.string());
    in.get();
    if (!in.eof()) throw format_error("volume payload has trailing bytes: " + path.string());
    vol.data.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        vol.data[i] = vol.real_flag ? std::complex<double>(raw[i], 0.0)
                                    : std::complex<double>(raw[2 * i], raw[2 * i + 1]);
    return vol;
}

// Values at the in-ball lattice points, in lattice order.
inline std::vector<std::complex<double>> extract_inside(const VolumeSamples& vol) {
    std::vector<std::complex<double>> f;
    for (const auto& k : grid_points_in_ball(vol.grid)) f.push_back(vol.at(k[0], k[1], k[2]));
    return f;
}

// ---------------------------------------------------------------------------
// coefficient sets and their CSV form

struct CoefficientSet {
    BandSpec band;
    GridSpec grid;
    double T = 0.0;
    std::vector<BasisIndex> indices;
    std::vector<double> alpha_tilde;
    std::vector<std::complex<double>> b_hat;
    std::vector<std::complex<double>> a_hat;

    std::size_t count() const { return indices.size(); }
};

namespace detail {

inline void append_double(std::string& line, double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    line.append(buf, res.ptr);
}

inline double parse_double(const std::string& field, const std::filesystem::path& path) {
    double v = 0.0;
    const char* b = field.data();
    const char* e = b + field.size();
    const auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc{} || res.ptr != e)
        throw format_error("coefficient CSV has a malformed number '" + field + "': " + path.string());
    return v;
}

inline int parse_int(const std::string& field, const std::filesystem::path& path) {
    int v = 0;
    const char* b = field.data();
    const char* e = b + field.size();
    const auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc{} || res.ptr != e)
        throw format_error("coefficient CSV has a malformed integer '" + field + "': " + path.string());
    return v;
}

} // namespace detail

inline void write_coefficients(const std::filesystem::path& path, const CoefficientSet& cs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot write coefficient CSV: " + path.string());
    out << "N,m,n,b_hat_re,b_hat_im,a_hat_re,a_hat_im,alpha_tilde\n";
    std::string line;
    for (std::size_t i = 0; i < cs.indices.size(); ++i) {
        line.clear();
        line += std::to_string(cs.indices[i].N);
        line += ',';
        line += std::to_string(cs.indices[i].m);
        line += ',';
        line += std::to_string(cs.indices[i].n);
        line += ',';
        detail::append_double(line, cs.b_hat[i].real());
        line += ',';
        detail::append_double(line, cs.b_hat[i].imag());
        line += ',';
        detail::append_double(line, cs.a_hat[i].real());
        line += ',';
        detail::append_double(line, cs.a_hat[i].imag());
        line += ',';
        detail::append_double(line, cs.alpha_tilde[i]);
        line += '\n';
        out << line;
    }
    if (!out) throw io_error("short write on coefficient CSV: " + path.string());
}

inline CoefficientSet read_coefficients(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read coefficient CSV: " + path.string());
    CoefficientSet cs;
    std::string row;
    bool first = true;
    while (std::getline(in, row)) {
        if (!row.empty() && row.back() == '\r') row.pop_back();
        if (row.empty()) continue;
        if (first) {
            first = false;
            if (row.rfind("N,", 0) == 0) continue; // header line
        }
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = row.find(',', start);
            fields.push_back(row.substr(start, comma == std::string::npos ? comma : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() != 8)
            throw format_error("coefficient CSV rows need 8 fields: " + path.string());
        BasisIndex idx{detail::parse_int(fields[0], path), detail::parse_int(fields[1], path),
                       detail::parse_int(fields[2], path)};
        cs.indices.push_back(idx);
        cs.b_hat.emplace_back(detail::parse_double(fields[3], path), detail::parse_double(fields[4], path));
        cs.a_hat.emplace_back(detail::parse_double(fields[5], path), detail::parse_double(fields[6], path));
        cs.alpha_tilde.push_back(detail::parse_double(fields[7], path));
    }
    return cs;
}

// ---------------------------------------------------------------------------
// expansion: b_hat_i = (c/(2 pi L))^3 sum_k f(k/L) conj(alpha_i psi_i(k/L))

namespace detail {

inline void require_nyquist(const BandSpec& band, GridSpec grid, const char* who) {
    static const double pi = std::acos(-1.0);
    if (band.c > pi * grid.L * (1.0 + 1e-12)) {
        char msg[160];
        std::snprintf(msg, sizeof(msg), "%s: the bandlimit must satisfy c <= pi*L; got c=%.17g with L=%d", who,
                      band.c, grid.L);
        throw constraint_error(msg);
    }
}

} // namespace detail

// Shared-pass expansion of several sample sets against one truncation set.
// Each fs[j] points at lattice-ordered values f(k/L) (one per in-ball point).
// Work is blocked over lattice points with per-block compensated partial sums
// and a fixed-order reduction, so results do not depend on the thread count.
inline std::vector<CoefficientSet> expand_many(const RadialBank& bank, const TruncationSet& set, GridSpec grid,
                                               const std::vector<const std::complex<double>*>& fs,
                                               int parallelism = static_cast<int>(default_parallelism())) {
    static const double pi = std::acos(-1.0);
    validate_grid(grid);
    detail::require_nyquist(bank.band(), grid, "expand");
    const detail::LatticeGeometry geo(grid);
    const std::size_t npts = geo.lattice.size();
    const std::size_t nf = fs.size();
    const std::size_t nent = set.entries.size();
    const std::size_t nidx = set.indices.size();

    std::vector<std::size_t> offsets(nent + 1, 0);
    int Nmax = 0;
    for (std::size_t e = 0; e < nent; ++e) {
        offsets[e + 1] = offsets[e] + static_cast<std::size_t>(2 * set.entries[e].N + 1);
        Nmax = std::max(Nmax, set.entries[e].N);
    }

    // radial table, radius-slot major so the per-point scan is contiguous
    const std::size_t ndist = geo.distinct_radius.size();
    std::vector<double> ktab(ndist * nent, 0.0);
    if (nent > 0) {
        std::vector<std::vector<int>> col_of(static_cast<std::size_t>(bank.max_degree()) + 1);
        for (std::size_t e = 0; e < nent; ++e) {
            auto& cols = col_of[static_cast<std::size_t>(set.entries[e].N)];
            if (cols.size() <= static_cast<std::size_t>(set.entries[e].n)) cols.resize(set.entries[e].n + 1, -1);
            cols[static_cast<std::size_t>(set.entries[e].n)] = static_cast<int>(e);
        }
        std::vector<double> vals;
        for (std::size_t slot = 0; slot < ndist; ++slot)
            for (int N = 0; N <= bank.max_degree(); ++N) {
                if (col_of[static_cast<std::size_t>(N)].empty()) continue;
                eval_radial_all(bank.at(N), geo.distinct_radius[slot], vals);
                for (std::size_t n = 0; n < col_of[static_cast<std::size_t>(N)].size(); ++n) {
                    const int e = col_of[static_cast<std::size_t>(N)][n];
                    if (e >= 0) ktab[slot * nent + static_cast<std::size_t>(e)] = vals[n];
                }
            }
    }

    constexpr std::size_t block = 1024;
    const std::size_t nblk = nidx == 0 ? 0 : (npts + block - 1) / block;
    std::vector<std::complex<double>> partial(nblk * nf * nidx, {0.0, 0.0});

    parallel_for_blocks(nblk, static_cast<unsigned>(std::max(parallelism, 1)), [&](std::size_t b) {
        std::vector<kahan_csum> acc(nf * nidx);
        std::vector<double> tri;
        std::vector<std::complex<double>> phases(static_cast<std::size_t>(Nmax) + 1);
        const std::size_t lo = b * block, hi = std::min(npts, lo + block);
        for (std::size_t p = lo; p < hi; ++p) {
            legendre_triangle(Nmax, geo.cos_polar[p], tri);
            const double phi = geo.azimuth[p];
            const std::complex<double> rot(std::cos(phi), std::sin(phi));
            phases[0] = {1.0, 0.0};
            for (int m = 1; m <= Nmax; ++m) phases[static_cast<std::size_t>(m)] = phases[static_cast<std::size_t>(m) - 1] * rot;
            const double* krow = ktab.data() + static_cast<std::size_t>(geo.radius_slot[p]) * nent;
            for (std::size_t e = 0; e < nent; ++e) {
                const double K = krow[e];
                const int N = set.entries[e].N;
                const std::size_t triN = static_cast<std::size_t>(N) * (N + 1) / 2;
                const std::size_t mid = offsets[e] + static_cast<std::size_t>(N);
                for (int m = 0; m <= N; ++m) {
                    const double v = K * tri[triN + static_cast<std::size_t>(m)];
                    const double pr = v * phases[static_cast<std::size_t>(m)].real();
                    const double pim = v * phases[static_cast<std::size_t>(m)].imag();
                    const double sgn = (m & 1) ? -1.0 : 1.0;
                    for (std::size_t j = 0; j < nf; ++j) {
                        const std::complex<double> fv = fs[j][p];
                        // f * conj(psi_m) for order +m
                        acc[j * nidx + mid + static_cast<std::size_t>(m)].add(
                            {fv.real() * pr + fv.imag() * pim, fv.imag() * pr - fv.real() * pim});
                        // psi_{-m} = (-1)^m conj(psi_m), so f * conj(psi_{-m}) = (-1)^m f * psi_m
                        if (m > 0)
                            acc[j * nidx + mid - static_cast<std::size_t>(m)].add(
                                {sgn * (fv.real() * pr - fv.imag() * pim), sgn * (fv.imag() * pr + fv.real() * pim)});
                    }
                }
            }
        }
        std::complex<double>* dst = partial.data() + b * nf * nidx;
        for (std::size_t i = 0; i < nf * nidx; ++i) dst[i] = acc[i].value();
    });

    std::vector<std::size_t> entry_of(nidx);
    for (std::size_t e = 0; e < nent; ++e)
        for (std::size_t i = offsets[e]; i < offsets[e + 1]; ++i) entry_of[i] = e;

    const double scale = std::pow(bank.band().c / (2.0 * pi * grid.L), 3.0);
    std::vector<CoefficientSet> out(nf);
    for (std::size_t j = 0; j < nf; ++j) {
        CoefficientSet& cs = out[j];
        cs.band = bank.band();
        cs.grid = grid;
        cs.T = set.T;
        cs.indices = set.indices;
        cs.alpha_tilde.resize(nidx);
        cs.b_hat.resize(nidx);
        cs.a_hat.resize(nidx);
        for (std::size_t i = 0; i < nidx; ++i) {
            kahan_csum total;
            for (std::size_t b = 0; b < nblk; ++b) total.add(partial[(b * nf + j) * nidx + i]);
            const TruncationEntry& ent = set.entries[entry_of[i]];
            const std::complex<double> alpha = bank.at(ent.N).alpha(ent.n);
            cs.alpha_tilde[i] = ent.alpha_tilde;
            cs.b_hat[i] = scale * std::conj(alpha) * total.value();
            cs.a_hat[i] = alpha * cs.b_hat[i];
        }
    }
    return out;
}

inline CoefficientSet expand(const RadialBank& bank, const TruncationSet& set, GridSpec grid,
                             const std::vector<std::complex<double>>& f_inside,
                             int parallelism = static_cast<int>(default_parallelism())) {
    if (f_inside.size() != grid_points_in_ball(grid).size())
        throw std::invalid_argument("expand: sample count does not match the in-ball lattice");
    return expand_many(bank, set, grid, {f_inside.data()}, parallelism)[0];
}

// ---------------------------------------------------------------------------
// reconstruction: f_hat(x) = sum_i a_hat_i psi_i(x)

namespace detail {

// coefficients regrouped by radial pair (N, n) with a dense order vector
struct CoeffGroup {
    int N = 0;
    int n = 0;
    std::vector<std::complex<double>> am; // order m at am[m + N]
};

inline std::vector<CoeffGroup> group_coefficients(const CoefficientSet& cs, const RadialBank& bank, int& Nmax) {
    std::vector<CoeffGroup> groups;
    std::map<std::pair<int, int>, std::size_t> slot;
    Nmax = -1;
    for (std::size_t i = 0; i < cs.indices.size(); ++i) {
        const BasisIndex& idx = cs.indices[i];
        if (idx.N < 0 || std::abs(idx.m) > idx.N)
            throw std::invalid_argument("reconstruct: malformed basis index in coefficient set");
        if (idx.N > bank.max_degree() || idx.n >= bank.at(idx.N).n_kept() || idx.n < 0)
            throw std::invalid_argument("reconstruct: coefficient index outside the available eigensystems");
        auto [it, fresh] = slot.emplace(std::make_pair(idx.N, idx.n), groups.size());
        if (fresh) {
            CoeffGroup g;
            g.N = idx.N;
            g.n = idx.n;
            g.am.assign(static_cast<std::size_t>(2 * idx.N + 1), {0.0, 0.0});
            groups.push_back(std::move(g));
        }
        groups[it->second].am[static_cast<std::size_t>(idx.m + idx.N)] += cs.a_hat[i];
        Nmax = std::max(Nmax, idx.N);
    }
    return groups;
}

// sum over one group's orders given Legendre triangle and azimuth phases
inline std::complex<double> angular_sum(const CoeffGroup& g, const std::vector<double>& tri,
                                        const std::vector<std::complex<double>>& phases) {
    const std::size_t triN = static_cast<std::size_t>(g.N) * (g.N + 1) / 2;
    std::complex<double> s = g.am[static_cast<std::size_t>(g.N)] * tri[triN];
    for (int m = 1; m <= g.N; ++m) {
        const double leg = tri[triN + static_cast<std::size_t>(m)];
        const double sgn = (m & 1) ? -1.0 : 1.0;
        const std::complex<double>& ph = phases[static_cast<std::size_t>(m)];
        s += g.am[static_cast<std::size_t>(g.N + m)] * (leg * ph);
        s += g.am[static_cast<std::size_t>(g.N - m)] * (sgn * leg * std::conj(ph));
    }
    return s;
}

} // namespace detail

// Pointwise synthesis at arbitrary points of the closed unit ball. Points are
// independent, so parallel blocks write disjoint outputs and the result is
// identical for any thread count.
inline std::vector<std::complex<double>> reconstruct(const CoefficientSet& cs, const RadialBank& bank,
                                                     const std::vector<std::array<double, 3>>& points,
                                                     int parallelism = static_cast<int>(default_parallelism())) {
    int Nmax = -1;
    const std::vector<detail::CoeffGroup> groups = detail::group_coefficients(cs, bank, Nmax);
    std::vector<std::complex<double>> out(points.size(), {0.0, 0.0});
    if (groups.empty() || points.empty()) return out;

    constexpr std::size_t block = 64;
    const std::size_t nblk = (points.size() + block - 1) / block;
    parallel_for_blocks(nblk, static_cast<unsigned>(std::max(parallelism, 1)), [&](std::size_t b) {
        std::vector<double> tri, kv;
        std::vector<std::vector<double>> kbyN(static_cast<std::size_t>(Nmax) + 1);
        std::vector<std::complex<double>> phases(static_cast<std::size_t>(Nmax) + 1);
        const std::size_t lo = b * block, hi = std::min(points.size(), lo + block);
        for (std::size_t p = lo; p < hi; ++p) {
            const SphericalPoint sp = detail::to_spherical(points[p]);
            if (sp.r > 1.0 + 1e-12) throw std::invalid_argument("reconstruct: point outside the unit ball");
            const double r = std::min(sp.r, 1.0);
            const double u = std::cos(sp.polar);
            legendre_triangle(Nmax, u, tri);
            const std::complex<double> rot(std::cos(sp.azimuth), std::sin(sp.azimuth));
            phases[0] = {1.0, 0.0};
            for (int m = 1; m <= Nmax; ++m)
                phases[static_cast<std::size_t>(m)] = phases[static_cast<std::size_t>(m) - 1] * rot;
            for (auto& v : kbyN) v.clear();
            kahan_csum acc;
            for (const detail::CoeffGroup& g : groups) {
                auto& kv_n = kbyN[static_cast<std::size_t>(g.N)];
                if (kv_n.empty()) eval_radial_all(bank.at(g.N), r, kv_n);
                acc.add(kv_n[static_cast<std::size_t>(g.n)] * detail::angular_sum(g, tri, phases));
            }
            out[p] = acc.value();
        }
    });
    return out;
}

// Synthesis on the sampling cube: values at every k in [-L, L]^3 with k/L
// inside the ball, zero elsewhere (the basis lives on the ball). Ordering
// matches the volume layout.
inline VolumeSamples reconstruct_on_lattice(const CoefficientSet& cs, const RadialBank& bank, GridSpec grid,
                                            int parallelism = static_cast<int>(default_parallelism())) {
    VolumeSamples vol = make_volume(grid, bank.band().c, false);
    int Nmax = -1;
    const std::vector<detail::CoeffGroup> groups = detail::group_coefficients(cs, bank, Nmax);
    if (groups.empty()) return vol;
    const detail::LatticeGeometry geo(grid);
    const std::size_t ng = groups.size();

    const std::size_t ndist = geo.distinct_radius.size();
    std::vector<double> ktab(ndist * ng, 0.0);
    {
        std::vector<std::vector<int>> col_of(static_cast<std::size_t>(Nmax) + 1);
        for (std::size_t g = 0; g < ng; ++g) {
            auto& cols = col_of[static_cast<std::size_t>(groups[g].N)];
            if (cols.size() <= static_cast<std::size_t>(groups[g].n)) cols.resize(groups[g].n + 1, -1);
            cols[static_cast<std::size_t>(groups[g].n)] = static_cast<int>(g);
        }
        std::vector<double> vals;
        for (std::size_t slot = 0; slot < ndist; ++slot)
            for (int N = 0; N <= Nmax; ++N) {
                if (col_of[static_cast<std::size_t>(N)].empty()) continue;
                eval_radial_all(bank.at(N), geo.distinct_radius[slot], vals);
                for (std::size_t n = 0; n < col_of[static_cast<std::size_t>(N)].size(); ++n) {
                    const int g = col_of[static_cast<std::size_t>(N)][n];
                    if (g >= 0) ktab[slot * ng + static_cast<std::size_t>(g)] = vals[n];
                }
            }
    }

    constexpr std::size_t block = 1024;
    const std::size_t npts = geo.lattice.size();
    const std::size_t nblk = (npts + block - 1) / block;
    parallel_for_blocks(nblk, static_cast<unsigned>(std::max(parallelism, 1)), [&](std::size_t b) {
        std::vector<double> tri;
        std::vector<std::complex<double>> phases(static_cast<std::size_t>(Nmax) + 1);
        const std::size_t lo = b * block, hi = std::min(npts, lo + block);
        for (std::size_t p = lo; p < hi; ++p) {
            legendre_triangle(Nmax, geo.cos_polar[p], tri);
            const double phi = geo.azimuth[p];
            const std::complex<double> rot(std::cos(phi), std::sin(phi));
            phases[0] = {1.0, 0.0};
            for (int m = 1; m <= Nmax; ++m)
                phases[static_cast<std::size_t>(m)] = phases[static_cast<std::size_t>(m) - 1] * rot;
            const double* krow = ktab.data() + static_cast<std::size_t>(geo.radius_slot[p]) * ng;
            kahan_csum acc;
            for (std::size_t g = 0; g < ng; ++g)
                acc.add(krow[g] * detail::angular_sum(groups[g], tri, phases));
            const auto& k = geo.lattice[p];
            vol.at(k[0], k[1], k[2]) = acc.value();
        }
    });
    return vol;
}

// Synthesis at the nodes of a separable ball rule, exploiting the tensor
// layout: radial and polar factors are contracted per order m, then the
// azimuth phases are applied as one dense product.
inline std::vector<std::complex<double>> reconstruct_on_rule(const CoefficientSet& cs, const RadialBank& bank,
                                                             const BallRule& rule) {
    std::vector<std::complex<double>> out(rule.points.size(), {0.0, 0.0});
    int Nmax = -1;
    const std::vector<detail::CoeffGroup> groups = detail::group_coefficients(cs, bank, Nmax);
    if (groups.empty()) return out;
    static const double pi = std::acos(-1.0);
    const int nr = rule.radial_order, nu = rule.polar_order, naz = rule.azimuth_order;
    const Rule1D rad = gauss_legendre(nr, 0.0, 1.0);
    const Rule1D pol = gauss_legendre(nu, -1.0, 1.0);
    const std::size_t ng = groups.size();

    Eigen::MatrixXd krad(nr, static_cast<Eigen::Index>(ng));
    {
        std::vector<std::vector<int>> col_of(static_cast<std::size_t>(Nmax) + 1);
        for (std::size_t g = 0; g < ng; ++g) {
            auto& cols = col_of[static_cast<std::size_t>(groups[g].N)];
            if (cols.size() <= static_cast<std::size_t>(groups[g].n)) cols.resize(groups[g].n + 1, -1);
            cols[static_cast<std::size_t>(groups[g].n)] = static_cast<int>(g);
        }
        std::vector<double> vals;
        for (int i = 0; i < nr; ++i)
            for (int N = 0; N <= Nmax; ++N) {
                if (col_of[static_cast<std::size_t>(N)].empty()) continue;
                eval_radial_all(bank.at(N), rad.nodes[static_cast<std::size_t>(i)], vals);
                for (std::size_t n = 0; n < col_of[static_cast<std::size_t>(N)].size(); ++n) {
                    const int g = col_of[static_cast<std::size_t>(N)][n];
                    if (g >= 0) krad(i, g) = vals[n];
                }
            }
    }

    // Legendre triangle at every polar node
    const std::size_t trisz = static_cast<std::size_t>(Nmax + 1) * (Nmax + 2) / 2;
    std::vector<double> ptab(trisz * static_cast<std::size_t>(nu));
    {
        std::vector<double> tri;
        for (int iu = 0; iu < nu; ++iu) {
            legendre_triangle(Nmax, pol.nodes[static_cast<std::size_t>(iu)], tri);
            for (std::size_t t = 0; t < trisz; ++t) ptab[t * static_cast<std::size_t>(nu) + iu] = tri[t];
        }
    }

    const int nm = 2 * Nmax + 1;
    Eigen::MatrixXcd contracted(static_cast<Eigen::Index>(nr) * nu, nm);
    contracted.setZero();
    Eigen::VectorXcd cN(nr);
    for (int m = -Nmax; m <= Nmax; ++m) {
        const int am = std::abs(m);
        const double msign = (m < 0 && (am & 1)) ? -1.0 : 1.0;
        auto col = contracted.col(m + Nmax);
        for (int N = am; N <= Nmax; ++N) {
            cN.setZero();
            bool any = false;
            for (std::size_t g = 0; g < ng; ++g) {
                if (groups[g].N != N) continue;
                const std::complex<double> a = groups[g].am[static_cast<std::size_t>(m + N)];
                if (a == std::complex<double>(0.0, 0.0)) continue;
                any = true;
                cN += a * krad.col(static_cast<Eigen::Index>(g)).cast<std::complex<double>>();
            }
            if (!any) continue;
            const double* prow = ptab.data() + (static_cast<std::size_t>(N) * (N + 1) / 2 + am) * nu;
            for (int iu = 0; iu < nu; ++iu) {
                const double leg = msign * prow[iu];
                for (int ir = 0; ir < nr; ++ir) col[static_cast<Eigen::Index>(ir) * nu + iu] += cN[ir] * leg;
            }
        }
    }

    Eigen::MatrixXcd phase(nm, naz);
    for (int k = 0; k < naz; ++k) {
        const double phi = 2.0 * pi * k / naz;
        for (int m = -Nmax; m <= Nmax; ++m) phase(m + Nmax, k) = std::complex<double>(std::cos(m * phi), std::sin(m * phi));
    }
    Eigen::MatrixXcd vals = contracted * phase; // (nr*nu) x naz

    for (int ir = 0; ir < nr; ++ir)
        for (int iu = 0; iu < nu; ++iu)
            for (int k = 0; k < naz; ++k)
                out[(static_cast<std::size_t>(ir) * nu + iu) * naz + k] =
                    vals(static_cast<Eigen::Index>(ir) * nu + iu, k);
    return out;
}

// ---------------------------------------------------------------------------
// error budget and the Gaussian reference family

inline double eta_bound(const BandSpec& band, GridSpec grid) {
    validate_band(band);
    validate_grid(grid);
    static const double pi = std::acos(-1.0);
    return (4.0 * pi / 3.0) * std::pow(band.c, 1.5) * std::pow(static_cast<double>(grid.L), 1.5);
}

struct ErrorBudget {
    double T = 0.0;
    double eps = 0.0;
    double delta_c = 0.0;
    double outside_l2 = 0.0;
    double eta = 0.0;
    double eps_term = 0.0;   // eps * T
    double delta_term = 0.0; // delta_c * (T + 4)
    double eta_term = 0.0;   // eta / L^3 * outside_l2
    double total = 0.0;
};

inline ErrorBudget error_budget(const BandSpec& band, GridSpec grid, double T, double eps, double delta_c,
                                double outside_l2) {
    if (!(T > 0.0)) throw std::invalid_argument("error_budget: T must be positive");
    if (!(eps >= 0.0) || !(delta_c >= 0.0) || !(outside_l2 >= 0.0))
        throw std::invalid_argument("error_budget: eps, delta_c and the outside energy must be non-negative");
    ErrorBudget b;
    b.T = T;
    b.eps = eps;
    b.delta_c = delta_c;
    b.outside_l2 = outside_l2;
    b.eta = eta_bound(band, grid);
    b.eps_term = eps * T;
    b.delta_term = delta_c * (T + 4.0);
    const double L3 = static_cast<double>(grid.L) * grid.L * grid.L;
    b.eta_term = b.eta / L3 * outside_l2;
    b.total = b.eps_term + b.delta_term + b.eta_term;
    return b;
}

inline const char* dominant_term(const ErrorBudget& b) {
    if (b.eps_term >= b.delta_term && b.eps_term >= b.eta_term) return "eps";
    if (b.delta_term >= b.eta_term) return "delta_c";
    return "eta";
}

// aliasing group (delta) versus truncated-tail group (eps plus the lattice
// leakage term); the sweep watches this flip as sigma grows
inline bool delta_group_dominates(const ErrorBudget& b) { return b.delta_term >= b.eps_term + b.eta_term; }

struct GaussianSpec {
    double sigma = 0.01;
    std::array<double, 3> mu = {0.0, 0.0, 0.0};
};

inline double gaussian_value(const GaussianSpec& g, const std::array<double, 3>& x) {
    static const double pi = std::acos(-1.0);
    const double dx = x[0] - g.mu[0], dy = x[1] - g.mu[1], dz = x[2] - g.mu[2];
    return std::pow(2.0 * pi * g.sigma, -1.5) * std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * g.sigma));
}

// Fourier transform with the e^{-i<xi,x>} convention: a unit-mass Gaussian
// maps to e^{-i<xi,mu>} e^{-sigma |xi|^2 / 2}.
inline std::complex<double> gaussian_transform(const GaussianSpec& g, const std::array<double, 3>& xi) {
    const double xi2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    const double arg = -(xi[0] * g.mu[0] + xi[1] * g.mu[1] + xi[2] * g.mu[2]);
    const double mag = std::exp(-g.sigma * xi2 / 2.0);
    return {mag * std::cos(arg), mag * std::sin(arg)};
}

struct GaussianOracles {
    double eps = 0.0;     // L2 mass of f outside the unit ball
    double delta_c = 0.0; // L2 mass of the transform outside the band, (2 pi)^{-3/2} scaled
};

// Semi-analytic one-dimensional reductions of both tail integrals.
inline GaussianOracles gaussian_oracles(const BandSpec& band, const GaussianSpec& g) {
    validate_band(band);
    if (!(g.sigma > 0.0)) throw std::invalid_argument("gaussian_oracles: sigma must be positive");
    static const double pi = std::acos(-1.0);
    const double sigma = g.sigma;
    const double mu0 = std::sqrt(g.mu[0] * g.mu[0] + g.mu[1] * g.mu[1] + g.mu[2] * g.mu[2]);

    const double hi = std::max(2.0, mu0 + 1.0 + 16.0 * std::sqrt(sigma));
    const Rule1D outer = gauss_legendre(400, 1.0, hi);
    kahan_sum eps2;
    if (mu0 > 1e-12) {
        for (std::size_t i = 0; i < outer.nodes.size(); ++i) {
            const double r = outer.nodes[i];
            const double dm = r - mu0;
            // exp(-dm^2/s) - exp(-dp^2/s) with dp = r + mu0 cancels badly for
            // small mu0; dp^2 - dm^2 = 4 r mu0 gives a stable product form
            eps2.add(outer.weights[i] * r * -std::exp(-dm * dm / sigma) * std::expm1(-4.0 * r * mu0 / sigma));
        }
        eps2.sum *= std::pow(2.0 * pi * sigma, -3.0) * (pi * sigma / mu0);
    } else {
        for (std::size_t i = 0; i < outer.nodes.size(); ++i) {
            const double r = outer.nodes[i];
            eps2.add(outer.weights[i] * r * r * std::exp(-r * r / sigma));
        }
        eps2.sum *= std::pow(2.0 * pi * sigma, -3.0) * 4.0 * pi;
    }

    const double c = band.c;
    const double hi2 = std::sqrt(c * c + 50.0 / sigma);
    const Rule1D band_tail = gauss_legendre(600, c, hi2);
    kahan_sum d2;
    for (std::size_t i = 0; i < band_tail.nodes.size(); ++i) {
        const double w = band_tail.nodes[i];
        d2.add(band_tail.weights[i] * w * w * std::exp(-sigma * w * w));
    }
    d2.sum *= std::pow(2.0 * pi, -3.0) * 4.0 * pi;

    GaussianOracles o;
    o.eps = std::sqrt(std::max(eps2.sum, 0.0));
    o.delta_c = std::sqrt(std::max(d2.sum, 0.0));
    return o;
}

// sqrt of the summed |f|^2 over lattice points outside the ball on the
// enlarged cube; the budget's leakage factor
template <class F>
double outside_sample_l2(const GridSpec& grid, F&& f, int factor = 2) {
    kahan_sum acc;
    for (const auto& k : grid_points_outside_ball(grid, factor)) {
        const std::array<double, 3> x = {k[0] / static_cast<double>(grid.L), k[1] / static_cast<double>(grid.L),
                                         k[2] / static_cast<double>(grid.L)};
        acc.add(std::norm(std::complex<double>(f(x))));
    }
    return std::sqrt(std::max(acc.sum, 0.0));
}

} // namespace gpswf
