#pragma once

// Shared helpers for the test suites: scratch directories, a subprocess
// runner for CLI tests, extension of the radial eigenfunctions beyond the
// unit ball (the library itself refuses r > 1), quadrature oracles for
// continuous expansion coefficients and Gram matrices, and a Monte-Carlo
// oracle for the out-of-band Gaussian energy.

#include <gpswf/gpswf.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace testsup {

inline std::filesystem::path scratch_dir(const std::string& tag) {
    static int counter = 0;
    const auto base = std::filesystem::temp_directory_path() / "gpswf-tests";
    std::filesystem::path dir;
    do {
        dir = base / (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    } while (std::filesystem::exists(dir));
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline void spew(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

struct RunResult {
    int status = -1;
    std::string out;
    std::string err;
};

// Run a shell command with `dir` as working directory, capturing the exit
// status and both output streams.
inline RunResult run_process(const std::string& command, const std::filesystem::path& dir) {
    const std::filesystem::path out_file = dir / "__stdout.txt";
    const std::filesystem::path err_file = dir / "__stderr.txt";
    const std::string full = "cd '" + dir.string() + "' && " + command + " >'" + out_file.string() + "' 2>'" +
                             err_file.string() + "'";
    const int rc = std::system(full.c_str());
    RunResult res;
    res.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    res.out = slurp(out_file);
    res.err = slurp(err_file);
    std::filesystem::remove(out_file);
    std::filesystem::remove(err_file);
    return res;
}

// ---------------------------------------------------------------------------
// radial extension beyond the ball

// Nystrom interpolation without the r <= 1 guard. The interpolation formula
// is entire in r, so with enough quadrature resolution it evaluates the
// bandlimited extension of K outside the ball.
inline double eval_radial_free(const gpswf::RadialEigensystem& sys, int n, double r) {
    static const double pi = std::acos(-1.0);
    const int q = static_cast<int>(sys.quad.nodes.size());
    double acc = 0.0;
    for (int j = 0; j < q; ++j)
        acc += sys.wr2[j] * gpswf::spherical_bessel(sys.N, sys.band.c * r * sys.quad.nodes[j]) * sys.K(j, n);
    return 4.0 * pi * acc / sys.beta[n];
}

// Same interpolation with the Bessel row computed once and reused for every
// kept mode of the system; returns K_n(r) for all n.
inline std::vector<double> eval_radial_free_all(const gpswf::RadialEigensystem& sys, double r) {
    static const double pi = std::acos(-1.0);
    const int q = static_cast<int>(sys.quad.nodes.size());
    std::vector<double> bes(static_cast<std::size_t>(q));
    for (int j = 0; j < q; ++j)
        bes[static_cast<std::size_t>(j)] = gpswf::spherical_bessel(sys.N, sys.band.c * r * sys.quad.nodes[j]);
    std::vector<double> out(static_cast<std::size_t>(sys.n_kept()));
    for (int n = 0; n < sys.n_kept(); ++n) {
        double acc = 0.0;
        for (int j = 0; j < q; ++j) acc += sys.wr2[j] * bes[static_cast<std::size_t>(j)] * sys.K(j, n);
        out[static_cast<std::size_t>(n)] = 4.0 * pi * acc / sys.beta[n];
    }
    return out;
}

// Per-degree eigensystems re-solved at a quadrature size that resolves the
// oscillation c * rmax * rho of the extended interpolation integrand, so
// eval_radial_free stays accurate out to radius rmax.
class ExtendedBasis {
public:
    ExtendedBasis(double c, const std::vector<gpswf::BasisIndex>& indices, double rmax) {
        static const double pi = std::acos(-1.0);
        for (const auto& i : indices) {
            if (systems_.count(i.N)) continue;
            const int q = std::max(gpswf::radial_quadrature_floor(c, i.N),
                                   static_cast<int>(std::ceil(c * (1.0 + rmax) / pi)) + 20) +
                          20;
            systems_.emplace(i.N, gpswf::solve_radial({c}, i.N, q));
        }
    }

    std::complex<double> eval(const gpswf::BasisIndex& i, const std::array<double, 3>& x) const {
        const auto& sys = systems_.at(i.N);
        const gpswf::SphericalPoint sp = gpswf::detail::to_spherical(x);
        const double K = eval_radial_free(sys, i.n, sp.r);
        return K * gpswf::spherical_harmonic({i.N, i.m}, sp);
    }

    const gpswf::RadialEigensystem& at(int N) const { return systems_.at(N); }

private:
    std::map<int, gpswf::RadialEigensystem> systems_;
};

// A fixed linear combination of GPSWFs, evaluable anywhere the extension is.
struct SynthFunction {
    std::vector<gpswf::BasisIndex> indices;
    std::vector<std::complex<double>> coeff; // f = sum coeff_i psi_i
    const ExtendedBasis* basis = nullptr;

    std::complex<double> value(const std::array<double, 3>& x) const {
        gpswf::kahan_csum acc;
        for (std::size_t i = 0; i < indices.size(); ++i) acc.add(coeff[i] * basis->eval(indices[i], x));
        return acc.value();
    }
};

// psi_i over a point list, one column per index. Lattice and product-rule
// point sets repeat the same radii over and over, so the radial factors are
// memoized per degree on the exact radius value.
inline std::vector<std::vector<std::complex<double>>> columns_on_points(
    const ExtendedBasis& basis, const std::vector<gpswf::BasisIndex>& indices,
    const std::vector<std::array<double, 3>>& pts) {
    std::map<int, std::map<double, std::vector<double>>> memo;
    std::vector<std::vector<std::complex<double>>> cols(indices.size(),
                                                        std::vector<std::complex<double>>(pts.size()));
    for (std::size_t p = 0; p < pts.size(); ++p) {
        const gpswf::SphericalPoint sp = gpswf::detail::to_spherical(pts[p]);
        for (std::size_t ii = 0; ii < indices.size(); ++ii) {
            const auto& bi = indices[ii];
            auto& rmap = memo[bi.N];
            auto it = rmap.find(sp.r);
            if (it == rmap.end()) it = rmap.emplace(sp.r, eval_radial_free_all(basis.at(bi.N), sp.r)).first;
            cols[ii][p] = it->second[static_cast<std::size_t>(bi.n)] * gpswf::spherical_harmonic({bi.N, bi.m}, sp);
        }
    }
    return cols;
}

// (N, n) pairs suitable for synthetic test functions: concentration in a
// requested band, and isolated from their intra-degree neighbours so an
// independently re-solved eigensystem (ExtendedBasis) cannot disagree about
// which mode is which. m is left 0; callers randomize it per draw.
inline std::vector<gpswf::BasisIndex> synthetic_pool(const gpswf::RadialBank& bank, double lo, double hi) {
    std::vector<gpswf::BasisIndex> pool;
    for (const auto& sys : bank.systems()) {
        for (int n = 0; n < sys.n_kept(); ++n) {
            const double at = sys.alpha_tilde[n];
            if (!(at > lo && at < hi)) continue;
            const double b = std::abs(sys.beta[n]);
            double gap = std::numeric_limits<double>::infinity();
            if (n > 0) gap = std::min(gap, std::abs(sys.beta[n - 1]) - b);
            if (n + 1 < sys.n_kept()) gap = std::min(gap, b - std::abs(sys.beta[n + 1]));
            if (!(gap > 1e-6 * b)) continue;
            pool.push_back({sys.N, 0, n});
        }
    }
    return pool;
}

// ---------------------------------------------------------------------------
// oracles

// Monte-Carlo version of the out-of-band Gaussian tail
//   delta_c^2 = (2pi)^{-3} 4pi int_c^inf w^2 e^{-sigma w^2} dw,
// reduced with t = w^2 and an Exp(1) draw:
//   int_c^inf w^2 e^{-sigma w^2} dw = e^{-sigma c^2}/(2 sigma) E[ sqrt(c^2 + U/sigma) ].
inline double mc_delta_c(double c, double sigma, std::size_t samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> exp1(1.0);
    gpswf::kahan_sum acc;
    for (std::size_t i = 0; i < samples; ++i) acc.add(std::sqrt(c * c + exp1(rng) / sigma));
    static const double pi = std::acos(-1.0);
    const double integral = 0.5 * std::exp(-sigma * c * c) / sigma * (acc.sum / static_cast<double>(samples));
    return std::sqrt(std::pow(2.0 * pi, -3.0) * 4.0 * pi * integral);
}

// Continuous expansion coefficients b_i = (c/2pi)^3 int_B F(c w) conj(psi_i(w)) dw
// by a product rule over the unit ball; `transform` is F evaluated at c * w.
template <class F>
std::vector<std::complex<double>> continuous_coefficients(const gpswf::RadialBank& bank,
                                                          const std::vector<gpswf::BasisIndex>& indices,
                                                          F&& transform, int nr, int npol, int naz) {
    static const double pi = std::acos(-1.0);
    const double c = bank.band().c;
    const gpswf::Rule1D rad = gpswf::gauss_legendre(nr, 0.0, 1.0);
    const gpswf::Rule1D pol = gpswf::gauss_legendre(npol, -1.0, 1.0);
    int Nmax = 0;
    for (const auto& i : indices) Nmax = std::max(Nmax, i.N);

    // radial factor per (shell, index), sharing the per-degree Bessel row
    std::vector<double> ktab(indices.size() * static_cast<std::size_t>(nr));
    {
        std::vector<double> vals;
        for (int s = 0; s < nr; ++s)
            for (int N = 0; N <= Nmax; ++N) {
                bool used = false;
                for (const auto& i : indices) used = used || (i.N == N);
                if (!used) continue;
                gpswf::eval_radial_all(bank.at(N), rad.nodes[s], vals);
                for (std::size_t ii = 0; ii < indices.size(); ++ii)
                    if (indices[ii].N == N) ktab[ii * nr + s] = vals[static_cast<std::size_t>(indices[ii].n)];
            }
    }

    std::vector<gpswf::kahan_csum> acc(indices.size());
    std::vector<double> tri;
    for (int s = 0; s < nr; ++s) {
        const double r = rad.nodes[s];
        const double wr = rad.weights[s] * r * r;
        for (int j = 0; j < npol; ++j) {
            const double u = pol.nodes[j];
            gpswf::legendre_triangle(Nmax, u, tri);
            const double su = std::sqrt(std::max(0.0, 1.0 - u * u));
            for (int k = 0; k < naz; ++k) {
                const double phi = 2.0 * pi * k / naz;
                const double wt = wr * pol.weights[j] * (2.0 * pi / naz);
                const std::array<double, 3> w = {r * su * std::cos(phi), r * su * std::sin(phi), r * u};
                const std::complex<double> Fv = transform(std::array<double, 3>{c * w[0], c * w[1], c * w[2]});
                for (std::size_t ii = 0; ii < indices.size(); ++ii) {
                    const auto& bi = indices[ii];
                    const int ma = std::abs(bi.m);
                    double leg = tri[static_cast<std::size_t>(bi.N) * (bi.N + 1) / 2 + ma];
                    if (bi.m < 0 && (ma & 1)) leg = -leg;
                    const double arg = -bi.m * phi; // conj(psi)
                    acc[ii].add(Fv * std::complex<double>(std::cos(arg), std::sin(arg)) *
                                (wt * ktab[ii * nr + s] * leg));
                }
            }
        }
    }
    const double scale = std::pow(c / (2.0 * pi), 3.0);
    std::vector<std::complex<double>> out(indices.size());
    for (std::size_t ii = 0; ii < indices.size(); ++ii) out[ii] = scale * acc[ii].value();
    return out;
}

// Continuous Gram of the whole truncation set by ball quadrature, exploiting
// the product structure: the azimuth integral of e^{i(m'-m)phi} is exactly
// 2 pi delta_{mm'}, so the Gram is block diagonal in m and each block splits
// into a radial and a polar Gauss-Legendre factor. Returns max |G - I| over
// all same-m blocks. Cross-m entries vanish identically; spot checks with the
// full 3D rule live in the callers.
inline double gram_identity_deviation(const gpswf::RadialBank& bank, const gpswf::TruncationSet& set, int nr,
                                      int npol) {
    const std::size_t ne = set.entries.size();
    if (ne == 0) return 0.0;
    const gpswf::Rule1D rad = gpswf::gauss_legendre(nr, 0.0, 1.0);
    const gpswf::Rule1D pol = gpswf::gauss_legendre(npol, -1.0, 1.0);
    int Nmax = 0;
    for (const auto& e : set.entries) Nmax = std::max(Nmax, e.N);

    // radial values and pairwise radial inner products (independent of m)
    std::vector<double> rv(ne * static_cast<std::size_t>(nr));
    {
        std::vector<double> vals;
        for (int s = 0; s < nr; ++s)
            for (int N = 0; N <= Nmax; ++N) {
                bool used = false;
                for (const auto& e : set.entries) used = used || (e.N == N);
                if (!used) continue;
                gpswf::eval_radial_all(bank.at(N), rad.nodes[s], vals);
                for (std::size_t i = 0; i < ne; ++i)
                    if (set.entries[i].N == N) rv[i * nr + s] = vals[static_cast<std::size_t>(set.entries[i].n)];
            }
    }
    std::vector<double> rint(ne * ne);
    for (std::size_t i = 0; i < ne; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            gpswf::kahan_sum s;
            for (int t = 0; t < nr; ++t)
                s.add(rad.weights[t] * rad.nodes[t] * rad.nodes[t] * rv[i * nr + t] * rv[j * nr + t]);
            rint[i * ne + j] = s.sum;
            rint[j * ne + i] = s.sum;
        }

    // Legendre triangles at the polar nodes
    const std::size_t tri = static_cast<std::size_t>(Nmax + 1) * (Nmax + 2) / 2;
    std::vector<double> leg(static_cast<std::size_t>(npol) * tri);
    {
        std::vector<double> row;
        for (int j = 0; j < npol; ++j) {
            gpswf::legendre_triangle(Nmax, pol.nodes[j], row);
            std::copy(row.begin(), row.end(), leg.begin() + j * tri);
        }
    }

    double worst = 0.0;
    for (int m = -Nmax; m <= Nmax; ++m) {
        const int ma = std::abs(m);
        std::vector<std::size_t> block;
        for (std::size_t i = 0; i < ne; ++i)
            if (set.entries[i].N >= ma) block.push_back(i);
        for (std::size_t a = 0; a < block.size(); ++a)
            for (std::size_t b = 0; b <= a; ++b) {
                const auto& ea = set.entries[block[a]];
                const auto& eb = set.entries[block[b]];
                gpswf::kahan_sum p;
                for (int j = 0; j < npol; ++j) {
                    const double pa = leg[j * tri + static_cast<std::size_t>(ea.N) * (ea.N + 1) / 2 + ma];
                    const double pb = leg[j * tri + static_cast<std::size_t>(eb.N) * (eb.N + 1) / 2 + ma];
                    p.add(pol.weights[j] * pa * pb);
                }
                // negative m flips both harmonics by (-1)^m; the product is even
                const double g = 2.0 * std::acos(-1.0) * rint[block[a] * ne + block[b]] * p.sum;
                const double target = (block[a] == block[b]) ? 1.0 : 0.0;
                worst = std::max(worst, std::abs(g - target));
            }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// frozen reference values (mpmath, 25 significant digits)

namespace frozen {
inline constexpr double j5_10 = -0.05553451162145218090882829;      // j_5(10)
inline constexpr double j50_25 = 1.254041697375897507776805e-12;    // j_50(25)
inline constexpr double j200_150 = 5.519313111132791903771529e-15;  // j_200(150)
inline constexpr double j3_1em3 = 9.52380899470900673400658e-12;    // j_3(0.001)
inline constexpr double j500_9000 = -7.086115180203031956010755e-5; // j_500(9000)
inline constexpr double j120_10000 = -8.607054753079607786922101e-5;
inline constexpr double z_star = 4.493409457909064175307881;          // tan z = z
inline constexpr double h2_at_half = 0.1220590681047014467124437;     // h_c, c=2, r=1/2
inline constexpr double inv_pi = 0.3183098861837906715377675;         // j_1(pi)
inline constexpr double y00 = 0.2820947917738781434740397;            // 1/sqrt(4 pi)
inline constexpr double y10 = 0.4886025119029199215863846;            // sqrt(3/(4 pi))
inline constexpr double ball_volume = 4.188790204786390984616858;     // 4 pi / 3
inline constexpr double ball_x1sq = 0.8377580409572781969233716;      // 4 pi / 15
inline constexpr double gauss_ball = 2.380979718752334152074029;      // int_B e^{-|x|^2}
inline constexpr double eta_pi_1 = 23.3245577701664837950171;         // (4pi/3) pi^{3/2}

// Gaussian tails: eps is the L2 mass outside the unit ball of the normalized
// Gaussian, delta is the (2 pi)^{-3/2}-scaled L2 mass of its transform
// outside radius c (closed form via erfc; independent of the center)
inline constexpr double eps_s005_mu0 = 1.462660949857836553735843e-4;   // sigma 0.05, centered
inline constexpr double eps_s005_mu111 = 1.007586721514637761826342e-3; // sigma 0.05, mu = (.1,.1,.1)
inline constexpr double eps_s001_mu0 = 3.077327690154504553371449e-21;  // sigma 0.01, centered
inline constexpr double eps_s001_mu111 = 3.010071042544736121735427e-15;
inline constexpr double delta_s005_c16pi = 1.868143264886168292022707e-27;
inline constexpr double delta_s001_c16pi = 3.7166232996367972854507e-5;
inline constexpr double delta_s001_c8pi = 0.35141396425370919647603;
inline constexpr double delta_s005_c8pi = 4.985527265326489542063305e-7;
} // namespace frozen

} // namespace testsup
