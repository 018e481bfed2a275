#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gpswf/errors.hpp"
#include "gpswf/quadrature.hpp"
#include "gpswf/specfun.hpp"

namespace gpswf {

static_assert(std::endian::native == std::endian::little,
              "binary caches and volume files are little-endian");

struct BandSpec {
    double c = 0.0; // bandlimit: frequency support is the ball of radius c
};

inline void validate_band(const BandSpec& band) {
    if (!(band.c > 0.0)) throw std::invalid_argument("BandSpec: bandlimit must be positive");
}

// Eigen-decomposition of the radial integral operator for one angular degree N.
// Eigenvalues are alpha = i^N * beta with beta real, sorted by |beta| descending;
// K holds the eigenfunction values at the quadrature nodes (one column per n),
// normalized so that the rule applied to K^2 r^2 gives 1, and sign-fixed so the
// value at the node closest to r = 1 is positive.
struct RadialEigensystem {
    BandSpec band;
    int N = 0;
    Rule1D quad;                     // Gauss-Legendre on [0,1], size q
    std::vector<double> beta;        // signed real eigenvalues, |beta| descending
    std::vector<double> alpha_tilde; // (c/2pi)^3 beta^2, clamped into (0,1)
    Eigen::MatrixXd K;               // q x n_kept node values
    std::vector<double> wr2;         // w_j * rho_j^2, cached for interpolation

    int n_kept() const { return static_cast<int>(beta.size()); }
    std::complex<double> alpha(int n) const {
        static const std::complex<double> phases[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
        return phases[N & 3] * beta.at(static_cast<std::size_t>(n));
    }
};

namespace detail {

inline double clamp_alpha_tilde(double raw) {
    const double hi = std::nextafter(1.0, 0.0);
    if (raw < std::numeric_limits<double>::min()) return std::numeric_limits<double>::min();
    if (raw > hi) return hi;
    return raw;
}

// signed eigenvalues of the symmetrized Nystrom matrix, |value| descending
inline std::vector<double> radial_spectrum(double c, int N, int q) {
    const Rule1D rule = gauss_legendre(q, 0.0, 1.0);
    static const double pi = std::acos(-1.0);
    Eigen::MatrixXd M(q, q);
    std::vector<double> sw(q);
    for (int i = 0; i < q; ++i) sw[i] = std::sqrt(rule.weights[i]) * rule.nodes[i];
    for (int i = 0; i < q; ++i)
        for (int j = 0; j <= i; ++j) {
            const double v = 4.0 * pi * sw[i] * sw[j] * spherical_bessel(N, c * rule.nodes[i] * rule.nodes[j]);
            M(i, j) = v;
            M(j, i) = v;
        }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    std::vector<double> vals(es.eigenvalues().data(), es.eigenvalues().data() + q);
    std::stable_sort(vals.begin(), vals.end(),
                     [](double a, double b) { return std::abs(a) > std::abs(b); });
    return vals;
}

} // namespace detail

inline int radial_quadrature_floor(double c, int N) {
    static const double pi = std::acos(-1.0);
    return static_cast<int>(std::ceil(std::max(2.0 * c / pi + 20.0, static_cast<double>(N) + 20.0)));
}

// Default quadrature size used by the bank and the CLI: the resolution floor
// plus a safety margin.
inline int radial_quadrature_default(double c, int N) { return radial_quadrature_floor(c, N) + 8; }

inline RadialEigensystem solve_radial(const BandSpec& band, int N, int q, int n_max = -1) {
    validate_band(band);
    if (N < 0) throw std::invalid_argument("solve_radial: degree must be non-negative");
    if (q < radial_quadrature_floor(band.c, N))
        throw std::invalid_argument("solve_radial: quadrature size below the resolution floor");
    if (n_max > q) throw std::invalid_argument("solve_radial: n_max must not exceed q");

    const double c = band.c;
    static const double pi = std::acos(-1.0);

    RadialEigensystem sys;
    sys.band = band;
    sys.N = N;
    sys.quad = gauss_legendre(q, 0.0, 1.0);

    Eigen::MatrixXd M(q, q);
    std::vector<double> sw(q);
    for (int i = 0; i < q; ++i) sw[i] = std::sqrt(sys.quad.weights[i]) * sys.quad.nodes[i];
    for (int i = 0; i < q; ++i)
        for (int j = 0; j <= i; ++j) {
            const double v = 4.0 * pi * sw[i] * sw[j] *
                             spherical_bessel(N, c * sys.quad.nodes[i] * sys.quad.nodes[j]);
            M(i, j) = v;
            M(j, i) = v;
        }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    if (es.info() != Eigen::Success) throw std::runtime_error("solve_radial: eigendecomposition failed");

    // built-in resolution check: the top eigenvalue must be stable under q -> q+8
    {
        const std::vector<double> probe = detail::radial_spectrum(c, N, q + 8);
        double top = 0.0;
        for (int i = 0; i < q; ++i) top = std::max(top, std::abs(es.eigenvalues()[i]));
        if (std::abs(top - std::abs(probe.front())) > 1e-9)
            throw resolution_error("solve_radial: top eigenvalue not converged at this quadrature size");
    }

    std::vector<int> order(q);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return std::abs(es.eigenvalues()[a]) > std::abs(es.eigenvalues()[b]);
    });

    const double atil_scale = std::pow(c / (2.0 * pi), 3.0);
    const int limit = n_max < 0 ? q : n_max;
    std::vector<int> kept;
    for (int rank = 0; rank < q && static_cast<int>(kept.size()) < limit; ++rank) {
        const double b = es.eigenvalues()[order[rank]];
        if (atil_scale * b * b <= 1e-16) break; // spectrum below here is numerically zero
        kept.push_back(order[rank]);
    }

    const int nk = static_cast<int>(kept.size());
    sys.beta.resize(nk);
    sys.alpha_tilde.resize(nk);
    sys.K.resize(q, nk);
    sys.wr2.resize(q);
    for (int j = 0; j < q; ++j) sys.wr2[j] = sys.quad.weights[j] * sys.quad.nodes[j] * sys.quad.nodes[j];
    for (int n = 0; n < nk; ++n) {
        const int src = kept[n];
        const double b = es.eigenvalues()[src];
        sys.beta[n] = b;
        sys.alpha_tilde[n] = detail::clamp_alpha_tilde(atil_scale * b * b);
        Eigen::VectorXd col = es.eigenvectors().col(src);
        for (int j = 0; j < q; ++j) col[j] /= sw[j]; // un-weight back to K values
        // boundary sign convention: first nonzero node value from r = 1 is positive
        for (int j = q - 1; j >= 0; --j) {
            if (col[j] != 0.0) {
                if (col[j] < 0.0) col = -col;
                break;
            }
        }
        sys.K.col(n) = col;
    }
    return sys;
}

// Nystrom natural interpolation K_n(r) = (4 pi / beta_n) sum_j w_j rho_j^2
// j_N(c r rho_j) K_n(rho_j); reproduces the stored values exactly at the nodes.
inline double eval_radial(const RadialEigensystem& sys, int n, double r) {
    if (n < 0 || n >= sys.n_kept()) throw std::invalid_argument("eval_radial: eigenfunction index out of range");
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("eval_radial: radius outside [0,1]");
    const int q = static_cast<int>(sys.quad.nodes.size());
    for (int j = 0; j < q; ++j)
        if (r == sys.quad.nodes[j]) return sys.K(j, n);
    static const double pi = std::acos(-1.0);
    double acc = 0.0;
    for (int j = 0; j < q; ++j)
        acc += sys.wr2[j] * spherical_bessel(sys.N, sys.band.c * r * sys.quad.nodes[j]) * sys.K(j, n);
    return 4.0 * pi * acc / sys.beta[n];
}

// All kept eigenfunctions at one radius; shares the Bessel row across n.
inline void eval_radial_all(const RadialEigensystem& sys, double r, std::vector<double>& out) {
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("eval_radial_all: radius outside [0,1]");
    const int q = static_cast<int>(sys.quad.nodes.size());
    const int nk = sys.n_kept();
    out.resize(nk);
    for (int j = 0; j < q; ++j)
        if (r == sys.quad.nodes[j]) {
            for (int n = 0; n < nk; ++n) out[n] = sys.K(j, n);
            return;
        }
    static const double pi = std::acos(-1.0);
    Eigen::VectorXd v(q);
    for (int j = 0; j < q; ++j)
        v[j] = sys.wr2[j] * spherical_bessel(sys.N, sys.band.c * r * sys.quad.nodes[j]);
    Eigen::VectorXd res = sys.K.transpose() * v;
    for (int n = 0; n < nk; ++n) out[n] = 4.0 * pi * res[n] / sys.beta[n];
}

// ---------------------------------------------------------------------------
// binary cache: one file per (c, N, q), JSON header line + little-endian
// float64 arrays (nodes, weights, beta, eigenvector matrix column-major)

inline std::string radial_cache_name(double c, int N, int q) {
    char cbuf[64];
    std::snprintf(cbuf, sizeof cbuf, "%a", c);
    std::string key(cbuf);
    for (char& ch : key)
        if (ch == '/' || ch == '\\') ch = '_';
    return "radial_c" + key + "_N" + std::to_string(N) + "_q" + std::to_string(q) + ".bin";
}

inline void write_radial_cache(const std::filesystem::path& dir, const RadialEigensystem& sys) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const int q = static_cast<int>(sys.quad.nodes.size());
    const int nk = sys.n_kept();
    nlohmann::ordered_json header;
    header["c"] = sys.band.c;
    header["N"] = sys.N;
    header["q"] = q;
    header["n_kept"] = nk;
    header["format_version"] = 1;
    const std::filesystem::path path = dir / radial_cache_name(sys.band.c, sys.N, q);
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot write radial cache: " + tmp.string());
        const std::string h = header.dump();
        out.write(h.data(), static_cast<std::streamsize>(h.size()));
        out.put('\n');
        auto put = [&out](const double* p, std::size_t count) {
            out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
        };
        put(sys.quad.nodes.data(), sys.quad.nodes.size());
        put(sys.quad.weights.data(), sys.quad.weights.size());
        put(sys.beta.data(), sys.beta.size());
        put(sys.K.data(), static_cast<std::size_t>(q) * nk); // column-major
        if (!out) throw io_error("short write on radial cache: " + tmp.string());
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw io_error("cannot finalize radial cache: " + path.string());
}

inline std::optional<RadialEigensystem> load_radial_cache(const std::filesystem::path& dir,
                                                          const BandSpec& band, int N, int q) {
    const std::filesystem::path path = dir / radial_cache_name(band.c, N, q);
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::string header_line;
    if (!std::getline(in, header_line)) throw format_error("radial cache truncated: " + path.string());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw format_error("radial cache header is not valid JSON: " + path.string() + ": " + e.what());
    }
    try {
        if (header.at("format_version").get<int>() != 1)
            throw format_error("radial cache format version not supported: " + path.string());
        if (header.at("c").get<double>() != band.c || header.at("N").get<int>() != N ||
            header.at("q").get<int>() != q)
            throw format_error("radial cache header does not match its key: " + path.string());
        const int nk = header.at("n_kept").get<int>();
        if (nk < 0 || nk > q) throw format_error("radial cache n_kept out of range: " + path.string());

        RadialEigensystem sys;
        sys.band = band;
        sys.N = N;
        sys.quad.lo = 0.0;
        sys.quad.hi = 1.0;
        sys.quad.nodes.resize(q);
        sys.quad.weights.resize(q);
        sys.beta.resize(nk);
        sys.K.resize(q, nk);
        auto get = [&in, &path](double* p, std::size_t count) {
            in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
            if (in.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
                throw format_error("radial cache payload truncated: " + path.string());
        };
        get(sys.quad.nodes.data(), sys.quad.nodes.size());
        get(sys.quad.weights.data(), sys.quad.weights.size());
        get(sys.beta.data(), sys.beta.size());
        get(sys.K.data(), static_cast<std::size_t>(q) * nk);
        if (in.peek() != std::ifstream::traits_type::eof())
            throw format_error("radial cache has trailing bytes: " + path.string());

        static const double pi = std::acos(-1.0);
        const double atil_scale = std::pow(band.c / (2.0 * pi), 3.0);
        sys.alpha_tilde.resize(nk);
        for (int n = 0; n < nk; ++n)
            sys.alpha_tilde[n] = detail::clamp_alpha_tilde(atil_scale * sys.beta[n] * sys.beta[n]);
        sys.wr2.resize(q);
        for (int j = 0; j < q; ++j)
            sys.wr2[j] = sys.quad.weights[j] * sys.quad.nodes[j] * sys.quad.nodes[j];
        return sys;
    } catch (const nlohmann::json::exception& e) {
        throw format_error("radial cache header missing fields: " + path.string() + ": " + e.what());
    }
}

// All radial eigensystems for one bandlimit: N = 0, 1, ... until the leading
// concentration ratio alpha_tilde_{N,0} falls below the keep cutoff. With a
// cache directory, solved systems are reused across runs keyed by (c, N, q).
class RadialBank {
public:
    explicit RadialBank(const BandSpec& band, std::filesystem::path cache_dir = {})
        : band_(band), cache_dir_(std::move(cache_dir)) {
        validate_band(band);
        for (int N = 0;; ++N) {
            const int q = radial_quadrature_default(band.c, N);
            RadialEigensystem sys;
            bool loaded = false;
            if (!cache_dir_.empty()) {
                if (auto cached = load_radial_cache(cache_dir_, band, N, q)) {
                    sys = std::move(*cached);
                    loaded = true;
                }
            }
            if (!loaded) {
                sys = solve_radial(band, N, q);
                if (!cache_dir_.empty()) write_radial_cache(cache_dir_, sys);
            }
            if (sys.n_kept() == 0) break;
            systems_.push_back(std::move(sys));
        }
        if (systems_.empty())
            throw std::runtime_error("RadialBank: no eigenvalues above the keep cutoff");
    }

    const BandSpec& band() const { return band_; }
    int max_degree() const { return static_cast<int>(systems_.size()) - 1; }
    const RadialEigensystem& at(int N) const { return systems_.at(static_cast<std::size_t>(N)); }
    const std::vector<RadialEigensystem>& systems() const { return systems_; }

private:
    BandSpec band_;
    std::filesystem::path cache_dir_;
    std::vector<RadialEigensystem> systems_;
};

} // namespace gpswf
