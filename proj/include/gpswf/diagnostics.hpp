#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpswf/approx.hpp"
#include "gpswf/basis.hpp"
#include "gpswf/errors.hpp"
#include "gpswf/parallel.hpp"
#include "gpswf/quadrature.hpp"
#include "gpswf/radial.hpp"
#include "gpswf/specfun.hpp"

namespace gpswf {

// ---------------------------------------------------------------------------
// xi_c lattice sums: xi_c(x)^2 = sum over lattice points k/L outside the unit
// ball of |h_c(x - k/L)|^2, measured on the ball of radius r1

struct XiConfig {
    BandSpec band;
    GridSpec grid;
    double r1 = 0.95;
    double lattice_radius = 4.0; // sum truncated at ||k||/L <= lattice_radius
    // orders of the evaluation rule for the pointwise maximum; 0 skips that
    // (costly) pass and reports NaN
    int pointwise_radial = 0;
    int pointwise_polar = 0;
    int pointwise_azimuth = 0;
};

struct XiNorm {
    double pointwise_max = std::numeric_limits<double>::quiet_NaN();
    double norm_sq = 0.0;    // ||xi_c||^2 over the r1 ball, lattice sum part
    double tail_bound = 0.0; // certified bound on the mass beyond lattice_radius
};

inline void validate_xi(const XiConfig& cfg) {
    validate_band(cfg.band);
    validate_grid(cfg.grid);
    // the appendix develops the tail bound for r1 < 1 - sqrt(3)/L, but the
    // scaling experiment runs r1 = 0.95 at every L, so only the hard geometric
    // requirements are enforced here
    if (!(cfg.r1 > 0.0 && cfg.r1 <= 1.0)) throw std::invalid_argument("xi_norm: r1 must lie in (0, 1]");
    if (!(cfg.lattice_radius > 1.0)) throw std::invalid_argument("xi_norm: lattice_radius must exceed 1");
    const double margin = cfg.lattice_radius - std::sqrt(3.0) / cfg.grid.L - cfg.r1;
    if (!(margin > 0.0))
        throw std::invalid_argument("xi_norm: lattice_radius too small for the tail certificate at this r1");
}

namespace detail {

// per-shell integral: int over the r1 ball of h_c(x - v)^2 dx for |v| = a,
// reduced to one dimension by spherical symmetry
inline double xi_shell_integral(double c, double r1, double a, const Rule1D& unit) {
    static const double pi = std::acos(-1.0);
    const double lo = a - r1, hi = a + r1;
    kahan_sum acc;
    for (std::size_t i = 0; i < unit.nodes.size(); ++i) {
        const double s = 0.5 * (hi - lo) * unit.nodes[i] + 0.5 * (hi + lo);
        const double w = 0.5 * (hi - lo) * unit.weights[i];
        const double h = besinc_radial(c, s);
        acc.add(w * s * (r1 * r1 - (a - s) * (a - s)) * h * h);
    }
    return pi / a * acc.sum;
}

// multiplicities of squared lattice norms n2 with L^2 < n2 <= (radius*L)^2
inline std::vector<long long> shell_histogram(int L, double lattice_radius) {
    const double rL = lattice_radius * L;
    const long long lo2 = static_cast<long long>(L) * L;
    const long long hi2 = static_cast<long long>(std::floor(rL * rL + 1e-9));
    const int M = static_cast<int>(std::floor(rL + 1e-9));
    std::vector<long long> counts(static_cast<std::size_t>(hi2) + 1, 0);
    for (int kx = -M; kx <= M; ++kx)
        for (int ky = -M; ky <= M; ++ky) {
            const long long xy = static_cast<long long>(kx) * kx + static_cast<long long>(ky) * ky;
            if (xy > hi2) continue;
            for (int kz = -M; kz <= M; ++kz) {
                const long long n2 = xy + static_cast<long long>(kz) * kz;
                if (n2 > lo2 && n2 <= hi2) ++counts[static_cast<std::size_t>(n2)];
            }
        }
    return counts;
}

// closed form of (4 L^3 / pi^3) int_{u0+r1}^inf t^2 (1 + c r1 + c t)^2 / (t - r1)^6 dt
inline double xi_tail_bound(double c, double r1, int L, double lattice_radius) {
    static const double pi = std::acos(-1.0);
    const double u0 = lattice_radius - std::sqrt(3.0) / L - r1; // validated positive
    const double A = 1.0 + 2.0 * c * r1;
    const double u2 = u0 * u0, u3 = u2 * u0, u4 = u3 * u0, u5 = u4 * u0;
    const double integral = c * c / u0 + (2.0 * A * c + 2.0 * r1 * c * c) / (2.0 * u2) +
                            (A * A + 4.0 * A * r1 * c + r1 * r1 * c * c) / (3.0 * u3) +
                            (2.0 * A * A * r1 + 2.0 * A * r1 * r1 * c) / (4.0 * u4) +
                            A * A * r1 * r1 / (5.0 * u5);
    const double L3 = static_cast<double>(L) * L * L;
    return 4.0 * L3 / (pi * pi * pi) * integral;
}

} // namespace detail

inline XiNorm xi_norm(const XiConfig& cfg, int parallelism = static_cast<int>(default_parallelism())) {
    validate_xi(cfg);
    const double c = cfg.band.c;
    const int L = cfg.grid.L;

    XiNorm result;
    const std::vector<long long> counts = detail::shell_histogram(L, cfg.lattice_radius);
    const Rule1D unit = gauss_legendre(128 + static_cast<int>(c * cfg.r1));
    kahan_sum norm2;
    for (std::size_t n2 = 0; n2 < counts.size(); ++n2) {
        if (counts[n2] == 0) continue;
        const double a = std::sqrt(static_cast<double>(n2)) / L;
        norm2.add(static_cast<double>(counts[n2]) * detail::xi_shell_integral(c, cfg.r1, a, unit));
    }
    result.norm_sq = norm2.sum;
    result.tail_bound = detail::xi_tail_bound(c, cfg.r1, L, cfg.lattice_radius);

    if (cfg.pointwise_radial > 0 && cfg.pointwise_polar > 0 && cfg.pointwise_azimuth > 0) {
        const BallRule rule = ball_rule(cfg.pointwise_radial, cfg.pointwise_polar, cfg.pointwise_azimuth);
        std::vector<std::array<double, 3>> shifts;
        const double rL = cfg.lattice_radius * L;
        const long long lo2 = static_cast<long long>(L) * L;
        const long long hi2 = static_cast<long long>(std::floor(rL * rL + 1e-9));
        const int M = static_cast<int>(std::floor(rL + 1e-9));
        for (int kx = -M; kx <= M; ++kx)
            for (int ky = -M; ky <= M; ++ky)
                for (int kz = -M; kz <= M; ++kz) {
                    const long long n2 = static_cast<long long>(kx) * kx + static_cast<long long>(ky) * ky +
                                         static_cast<long long>(kz) * kz;
                    if (n2 > lo2 && n2 <= hi2)
                        shifts.push_back({kx / static_cast<double>(L), ky / static_cast<double>(L),
                                          kz / static_cast<double>(L)});
                }
        constexpr std::size_t block = 256;
        const std::size_t nblk = (rule.points.size() + block - 1) / block;
        std::vector<double> block_max(nblk, 0.0);
        parallel_for_blocks(nblk, static_cast<unsigned>(std::max(parallelism, 1)), [&](std::size_t b) {
            double best = 0.0;
            const std::size_t lo = b * block, hi = std::min(rule.points.size(), lo + block);
            for (std::size_t p = lo; p < hi; ++p) {
                const std::array<double, 3> x = {cfg.r1 * rule.points[p][0], cfg.r1 * rule.points[p][1],
                                                 cfg.r1 * rule.points[p][2]};
                kahan_sum s;
                for (const auto& v : shifts) {
                    const double h = besinc(c, {x[0] - v[0], x[1] - v[1], x[2] - v[2]});
                    s.add(h * h);
                }
                best = std::max(best, s.sum);
            }
            block_max[b] = best;
        });
        double xmax2 = 0.0;
        for (double v : block_max) xmax2 = std::max(xmax2, v);
        result.pointwise_max = std::sqrt(xmax2);
    }
    return result;
}

struct XiScanRow {
    int L = 0;
    double c = 0.0;
    double norm_sq_scaled = 0.0; // (1/c^6) ||xi_c||^2
    double tail_bound = 0.0;
};

struct XiSlopeResult {
    std::vector<XiScanRow> rows;
    double slope = 0.0;
    double intercept = 0.0;
};

// Fig. 1 experiment: fit log10((1/c^6) ||xi_c||^2) against log10(L) with
// c = pi L and fixed r1.
inline XiSlopeResult xi_slope_experiment(const std::vector<int>& L_list, double r1 = 0.95,
                                         double lattice_radius = 4.0,
                                         int parallelism = static_cast<int>(default_parallelism())) {
    if (L_list.size() < 3)
        throw std::invalid_argument("xi_slope_experiment: need at least 3 sampling rates for a fit");
    static const double pi = std::acos(-1.0);
    XiSlopeResult res;
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (int L : L_list) {
        if (L < 8 || L > 50)
            throw std::invalid_argument("xi_slope_experiment: sampling rates must lie in [8, 50]");
        XiConfig cfg;
        cfg.band.c = pi * L;
        cfg.grid.L = L;
        cfg.r1 = r1;
        cfg.lattice_radius = lattice_radius;
        const XiNorm xn = xi_norm(cfg, parallelism);
        XiScanRow row;
        row.L = L;
        row.c = cfg.band.c;
        row.norm_sq_scaled = xn.norm_sq / std::pow(cfg.band.c, 6.0);
        row.tail_bound = xn.tail_bound;
        res.rows.push_back(row);
        const double x = std::log10(static_cast<double>(L));
        const double y = std::log10(row.norm_sq_scaled);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double n = static_cast<double>(res.rows.size());
    res.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    res.intercept = (sy - res.slope * sx) / n;
    return res;
}

// ---------------------------------------------------------------------------
// Gram near-orthogonality of the normalized sampled basis

struct GramReport {
    double T = 0.0;
    double c = 0.0;
    int L = 0;
    std::vector<double> tau; // eigenvalues of H_c, ascending
    double max_deviation = 0.0;
    double min_tau = 0.0;
};

inline GramReport gram_deviation(const RadialBank& bank, GridSpec grid, double T, std::size_t index_cap = 5000) {
    const TruncationSet set = truncation_set(bank, T);
    if (set.count() == 0)
        throw constraint_error("gram_deviation: the truncation set is empty; lower T");
    if (set.count() > index_cap) {
        char msg[160];
        std::snprintf(msg, sizeof(msg),
                      "gram_deviation: |Pi_T| = %zu exceeds the cap of %zu; raise T or lower L",
                      set.count(), index_cap);
        throw constraint_error(msg);
    }
    const BasisSampler sampler(set, bank, grid);
    const std::size_t npts = sampler.lattice().size();
    const std::size_t nidx = sampler.count();
    Eigen::MatrixXcd psi(static_cast<Eigen::Index>(npts), static_cast<Eigen::Index>(nidx));
    std::vector<std::complex<double>> col(npts);
    for (std::size_t i = 0; i < nidx; ++i) {
        sampler.sampled_normalized(i, col.data());
        for (std::size_t p = 0; p < npts; ++p) psi(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(i)) = col[p];
    }
    const Eigen::MatrixXcd H = psi.adjoint() * psi;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw std::runtime_error("gram_deviation: eigendecomposition failed");

    GramReport rep;
    rep.T = T;
    rep.c = bank.band().c;
    rep.L = grid.L;
    rep.tau.assign(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    rep.min_tau = rep.tau.empty() ? 0.0 : rep.tau.front();
    for (double t : rep.tau) rep.max_deviation = std::max(rep.max_deviation, std::abs(t - 1.0));
    return rep;
}

// ---------------------------------------------------------------------------
// Table 1: |Pi_T| / (number of in-ball samples) at c = pi L

struct Table1Result {
    std::vector<int> L_list;
    std::vector<double> logT_list;
    std::vector<std::size_t> samples;       // per L
    std::vector<std::vector<double>> ratio; // [logT][L]
};

inline Table1Result table1(const std::vector<int>& L_list, const std::vector<double>& logT_list,
                           const std::filesystem::path& cache_dir = {}) {
    static const double pi = std::acos(-1.0);
    Table1Result res;
    res.L_list = L_list;
    res.logT_list = logT_list;
    res.ratio.assign(logT_list.size(), std::vector<double>(L_list.size(), 0.0));
    for (std::size_t li = 0; li < L_list.size(); ++li) {
        const int L = L_list[li];
        GridSpec grid{L};
        res.samples.push_back(grid_points_in_ball(grid).size());
        const RadialBank bank(BandSpec{pi * L}, cache_dir);
        for (std::size_t ti = 0; ti < logT_list.size(); ++ti) {
            const double T = std::pow(10.0, logT_list[ti]);
            long long count = 0;
            for (const RadialEigensystem& sys : bank.systems())
                for (int n = 0; n < sys.n_kept(); ++n)
                    if (concentration_ratio(sys.alpha_tilde[n]) > T) count += 2 * sys.N + 1;
            res.ratio[ti][li] = static_cast<double>(count) / static_cast<double>(res.samples[li]);
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Gaussian error-versus-bound sweep

struct SweepRow {
    double sigma = 0.0;
    double measured_error = 0.0;
    ErrorBudget budget;
};

struct SweepResult {
    double T = 0.0;
    std::array<double, 3> mu{};
    std::vector<SweepRow> rows;
};

inline SweepResult gaussian_sweep(const RadialBank& bank, GridSpec grid, double T,
                                  const std::vector<double>& sigma_list, std::array<double, 3> mu,
                                  int parallelism = static_cast<int>(default_parallelism())) {
    static const double pi = std::acos(-1.0);
    validate_grid(grid);
    detail::require_nyquist(bank.band(), grid, "gaussian_sweep");
    if (mu[0] * mu[0] + mu[1] * mu[1] + mu[2] * mu[2] >= 1.0)
        throw std::invalid_argument("gaussian_sweep: the Gaussian center must lie inside the unit ball");
    if (sigma_list.empty()) throw std::invalid_argument("gaussian_sweep: need at least one sigma");
    for (double s : sigma_list)
        if (!(s > 0.0)) throw std::invalid_argument("gaussian_sweep: sigma values must be positive");

    const TruncationSet set = truncation_set(bank, T);
    const std::vector<std::array<int, 3>> lattice = grid_points_in_ball(grid);
    const std::size_t npts = lattice.size();
    const std::size_t nsig = sigma_list.size();

    std::vector<std::vector<std::complex<double>>> fvals(nsig, std::vector<std::complex<double>>(npts));
    std::vector<const std::complex<double>*> fptr(nsig);
    for (std::size_t j = 0; j < nsig; ++j) {
        const GaussianSpec g{sigma_list[j], mu};
        for (std::size_t p = 0; p < npts; ++p) {
            const std::array<double, 3> x = {lattice[p][0] / static_cast<double>(grid.L),
                                             lattice[p][1] / static_cast<double>(grid.L),
                                             lattice[p][2] / static_cast<double>(grid.L)};
            fvals[j][p] = gaussian_value(g, x);
        }
        fptr[j] = fvals[j].data();
    }
    const std::vector<CoefficientSet> coeffs = expand_many(bank, set, grid, fptr, parallelism);

    // evaluation rule sized to the bandlimit: radial oscillation ~c, angular
    // degree up to twice the largest harmonic degree in the bank
    const double c = bank.band().c;
    const int nr = std::max(96, 4 * static_cast<int>(c / pi) + 48);
    const int npol = std::max(48, bank.max_degree() + 16);
    const int naz = std::max(96, 2 * bank.max_degree() + 32);
    const BallRule rule = ball_rule(nr, npol, naz);

    SweepResult res;
    res.T = T;
    res.mu = mu;
    for (std::size_t j = 0; j < nsig; ++j) {
        const GaussianSpec g{sigma_list[j], mu};
        const std::vector<std::complex<double>> fhat = reconstruct_on_rule(coeffs[j], bank, rule);
        kahan_sum err2;
        for (std::size_t p = 0; p < rule.points.size(); ++p) {
            const std::complex<double> d = fhat[p] - gaussian_value(g, rule.points[p]);
            err2.add(rule.weights[p] * std::norm(d));
        }
        const GaussianOracles oracle = gaussian_oracles(bank.band(), g);
        const double out_l2 = outside_sample_l2(grid, [&](const std::array<double, 3>& x) {
            return gaussian_value(g, x);
        });
        SweepRow row;
        row.sigma = sigma_list[j];
        row.measured_error = std::sqrt(std::max(err2.sum, 0.0));
        row.budget = error_budget(bank.band(), grid, T, oracle.eps, oracle.delta_c, out_l2);
        res.rows.push_back(row);
    }
    return res;
}

// ---------------------------------------------------------------------------
// CSV writers with the fixed headers

inline void write_xi_csv(const std::filesystem::path& path, const std::vector<XiScanRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot write xi scan CSV: " + path.string());
    out << "L,c,norm_sq_scaled,tail_bound\n";
    std::string line;
    for (const XiScanRow& r : rows) {
        line.clear();
        line += std::to_string(r.L);
        line += ',';
        detail::append_double(line, r.c);
        line += ',';
        detail::append_double(line, r.norm_sq_scaled);
        line += ',';
        detail::append_double(line, r.tail_bound);
        line += '\n';
        out << line;
    }
    if (!out) throw io_error("short write on xi scan CSV: " + path.string());
}

inline void write_gram_csv(const std::filesystem::path& path, const std::vector<GramReport>& reports) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot write gram CSV: " + path.string());
    out << "T,max_deviation\n";
    std::string line;
    for (const GramReport& r : reports) {
        line.clear();
        detail::append_double(line, r.T);
        line += ',';
        detail::append_double(line, r.max_deviation);
        line += '\n';
        out << line;
    }
    if (!out) throw io_error("short write on gram CSV: " + path.string());
}

inline void write_table1_csv(const std::filesystem::path& path, const Table1Result& t) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot write table1 CSV: " + path.string());
    out << "log10T";
    for (int L : t.L_list) out << ",L=" << L;
    out << '\n';
    out << "samples";
    for (std::size_t s : t.samples) out << ',' << s;
    out << '\n';
    std::string line;
    for (std::size_t ti = 0; ti < t.logT_list.size(); ++ti) {
        line.clear();
        detail::append_double(line, t.logT_list[ti]);
        for (std::size_t li = 0; li < t.L_list.size(); ++li) {
            line += ',';
            detail::append_double(line, t.ratio[ti][li]);
        }
        line += '\n';
        out << line;
    }
    if (!out) throw io_error("short write on table1 CSV: " + path.string());
}

inline void write_gaussian_csv(const std::filesystem::path& path, const SweepResult& sweep) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot write gaussian sweep CSV: " + path.string());
    out << "sigma,measured_error,bound_total,eps,delta_c,eta_term\n";
    std::string line;
    for (const SweepRow& r : sweep.rows) {
        line.clear();
        detail::append_double(line, r.sigma);
        line += ',';
        detail::append_double(line, r.measured_error);
        line += ',';
        detail::append_double(line, r.budget.total);
        line += ',';
        detail::append_double(line, r.budget.eps);
        line += ',';
        detail::append_double(line, r.budget.delta_c);
        line += ',';
        detail::append_double(line, r.budget.eta_term);
        line += '\n';
        out << line;
    }
    if (!out) throw io_error("short write on gaussian sweep CSV: " + path.string());
}

} // namespace gpswf
