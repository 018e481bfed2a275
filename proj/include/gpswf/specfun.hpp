#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace gpswf {

struct SphericalPoint {
    double r = 0.0;       // radius >= 0
    double polar = 0.0;   // in [0, pi]; Legendre argument is cos(polar)
    double azimuth = 0.0; // in [0, 2*pi)
};

struct HarmonicIndex {
    int N = 0; // degree >= 0
    int m = 0; // order, |m| <= N
};

namespace detail {

// j_1 with the closed-form subtraction replaced by its series below z = 0.1,
// where sin(z)/z^2 and cos(z)/z cancel to ~z/3 and lose digits
inline double sph_bessel_j1(double z) {
    if (z < 0.1) {
        const double z2 = z * z;
        return z * (1.0 / 3.0 +
                    z2 * (-1.0 / 30.0 + z2 * (1.0 / 840.0 + z2 * (-1.0 / 45360.0 + z2 / 3991680.0))));
    }
    return std::sin(z) / (z * z) - std::cos(z) / z;
}

// Downward (Miller) recurrence for j_N(z), needed when N >= z where the upward
// direction is unstable. Start well above N, recur down with rescaling, then
// normalize against the closed forms for j_0 or j_1 (whichever is larger).
inline double sph_bessel_miller(int N, double z) {
    const int M = N + 26 + static_cast<int>(2.0 * std::sqrt(static_cast<double>(N) + 1.0));
    double jnp1 = 0.0;       // j_{n+1}, starting at order M+1
    double jn = 1e-300;      // j_n, starting at order M
    double jN = (N == M) ? jn : 0.0;
    double j1 = 0.0;
    double j0 = 0.0;
    for (int n = M; n >= 1; --n) {
        double jnm1 = (2.0 * n + 1.0) / z * jn - jnp1;
        jnp1 = jn;
        jn = jnm1;
        if (n - 1 == N) jN = jn;
        if (n - 1 == 1) j1 = jn;
        if (std::abs(jn) > 1e250) {
            jn *= 1e-250;
            jnp1 *= 1e-250;
            jN *= 1e-250;
            j1 *= 1e-250;
        }
    }
    j0 = jn;
    const double j0_true = std::sin(z) / z;
    const double j1_true = sph_bessel_j1(z);
    double scale;
    if (std::abs(j0_true) >= std::abs(j1_true))
        scale = j0_true / j0;
    else
        scale = j1_true / j1;
    return jN * scale;
}

} // namespace detail

// Spherical Bessel function of the first kind, j_N(z) = sqrt(pi/(2z)) J_{N+1/2}(z).
inline double spherical_bessel(int N, double z) {
    if (N < 0) throw std::invalid_argument("spherical_bessel: order must be non-negative");
    if (!(z >= 0.0)) throw std::invalid_argument("spherical_bessel: argument must be non-negative");
    if (z == 0.0) return N == 0 ? 1.0 : 0.0;
    const double j0 = std::sin(z) / z;
    if (N == 0) return j0;
    const double j1 = detail::sph_bessel_j1(z);
    if (N == 1) return j1;
    if (static_cast<double>(N) < z) {
        // upward recurrence is stable while the order stays below the argument
        double jm1 = j0, jcur = j1;
        for (int n = 1; n < N; ++n) {
            double jnext = (2.0 * n + 1.0) / z * jcur - jm1;
            jm1 = jcur;
            jcur = jnext;
        }
        return jcur;
    }
    return detail::sph_bessel_miller(N, z);
}

// j_0(z) .. j_{N_max}(z) in one recurrence sweep, for code that needs a whole
// column of orders at a fixed argument.
inline void spherical_bessel_all(int N_max, double z, std::vector<double>& out) {
    if (N_max < 0) throw std::invalid_argument("spherical_bessel_all: order must be non-negative");
    if (!(z >= 0.0)) throw std::invalid_argument("spherical_bessel_all: argument must be non-negative");
    out.assign(static_cast<std::size_t>(N_max) + 1, 0.0);
    if (z == 0.0) {
        out[0] = 1.0;
        return;
    }
    out[0] = std::sin(z) / z;
    if (N_max == 0) return;
    out[1] = detail::sph_bessel_j1(z);
    if (N_max == 1) return;
    if (static_cast<double>(N_max) < z) {
        for (int n = 1; n < N_max; ++n)
            out[static_cast<std::size_t>(n) + 1] = (2.0 * n + 1.0) / z * out[static_cast<std::size_t>(n)] -
                                                   out[static_cast<std::size_t>(n) - 1];
        return;
    }
    // Miller sweep; entries stored before a rescale are shrunk along with the
    // running pair (underflow to zero there is the correct rounding)
    const int M = N_max + 26 + static_cast<int>(2.0 * std::sqrt(static_cast<double>(N_max) + 1.0));
    std::vector<double> tmp(static_cast<std::size_t>(M) + 1, 0.0);
    double jnp1 = 0.0;
    double jn = 1e-300;
    tmp[static_cast<std::size_t>(M)] = jn;
    for (int n = M; n >= 1; --n) {
        double jnm1 = (2.0 * n + 1.0) / z * jn - jnp1;
        jnp1 = jn;
        jn = jnm1;
        tmp[static_cast<std::size_t>(n) - 1] = jn;
        if (std::abs(jn) > 1e250) {
            jn *= 1e-250;
            jnp1 *= 1e-250;
            for (int k = n - 1; k <= M; ++k) tmp[static_cast<std::size_t>(k)] *= 1e-250;
        }
    }
    const double j0_true = std::sin(z) / z;
    const double j1_true = detail::sph_bessel_j1(z);
    const double scale = std::abs(j0_true) >= std::abs(j1_true) ? j0_true / tmp[0] : j1_true / tmp[1];
    for (int n = 0; n <= N_max; ++n) out[static_cast<std::size_t>(n)] = tmp[static_cast<std::size_t>(n)] * scale;
}

// Normalized associated Legendre P~_N^m(x) with the Condon-Shortley phase,
// scaled so that S_{m,N} = P~_N^m(cos theta) e^{i m phi} is orthonormal on the
// sphere. Negative orders via P~_N^{-m} = (-1)^m P~_N^m.
inline double assoc_legendre_norm(int N, int m, double x) {
    if (N < 0) throw std::invalid_argument("assoc_legendre_norm: degree must be non-negative");
    bool neg = m < 0;
    if (neg) m = -m;
    if (m > N) throw std::invalid_argument("assoc_legendre_norm: |m| must not exceed N");
    if (!(x >= -1.0 && x <= 1.0)) throw std::invalid_argument("assoc_legendre_norm: |x| must not exceed 1");
    static const double inv4pi = 1.0 / (4.0 * std::acos(-1.0));
    double pmm = 1.0;
    if (m > 0) {
        const double omx2 = (1.0 - x) * (1.0 + x);
        double fact = 1.0;
        for (int i = 1; i <= m; ++i) {
            pmm *= omx2 * fact / (fact + 1.0);
            fact += 2.0;
        }
    }
    pmm = std::sqrt((2.0 * m + 1.0) * pmm * inv4pi);
    if (m & 1) pmm = -pmm;
    double result;
    if (N == m) {
        result = pmm;
    } else {
        double pmmp1 = x * std::sqrt(2.0 * m + 3.0) * pmm;
        if (N == m + 1) {
            result = pmmp1;
        } else {
            double oldfact = std::sqrt(2.0 * m + 3.0);
            double pll = 0.0;
            for (int ll = m + 2; ll <= N; ++ll) {
                const double fact = std::sqrt((4.0 * ll * ll - 1.0) / (static_cast<double>(ll) * ll - static_cast<double>(m) * m));
                pll = (x * pmmp1 - pmm / oldfact) * fact;
                oldfact = fact;
                pmm = pmmp1;
                pmmp1 = pll;
            }
            result = pll;
        }
    }
    if (neg && (m & 1)) result = -result;
    return result;
}

// Fills the whole triangle P~_N^m(x) for 0 <= m <= N <= N_max into
// out[N(N+1)/2 + m]. One O(N_max^2) pass; the workhorse for code that needs
// every (N, m) at a fixed point.
inline void legendre_triangle(int N_max, double x, std::vector<double>& out) {
    if (N_max < 0) throw std::invalid_argument("legendre_triangle: N_max must be non-negative");
    if (!(x >= -1.0 && x <= 1.0)) throw std::invalid_argument("legendre_triangle: |x| must not exceed 1");
    static const double inv4pi = 1.0 / (4.0 * std::acos(-1.0));
    const std::size_t tri = static_cast<std::size_t>(N_max + 1) * (N_max + 2) / 2;
    out.resize(tri);
    auto at = [&out](int N, int m) -> double& {
        return out[static_cast<std::size_t>(N) * (N + 1) / 2 + m];
    };
    const double omx2 = (1.0 - x) * (1.0 + x);
    double prod = 1.0; // running product inside pmm
    double fact = 1.0;
    for (int m = 0; m <= N_max; ++m) {
        if (m > 0) {
            prod *= omx2 * fact / (fact + 1.0);
            fact += 2.0;
        }
        double pmm = std::sqrt((2.0 * m + 1.0) * prod * inv4pi);
        if (m & 1) pmm = -pmm;
        at(m, m) = pmm;
        if (m == N_max) break;
        double pmmp1 = x * std::sqrt(2.0 * m + 3.0) * pmm;
        at(m + 1, m) = pmmp1;
        double oldfact = std::sqrt(2.0 * m + 3.0);
        double pa = pmm, pb = pmmp1;
        for (int ll = m + 2; ll <= N_max; ++ll) {
            const double f = std::sqrt((4.0 * ll * ll - 1.0) / (static_cast<double>(ll) * ll - static_cast<double>(m) * m));
            const double pll = (x * pb - pa / oldfact) * f;
            oldfact = f;
            pa = pb;
            pb = pll;
            at(ll, m) = pll;
        }
    }
}

// S_{m,N}(theta, phi) = P~_N^m(cos(polar)) e^{i m azimuth}.
inline std::complex<double> spherical_harmonic(HarmonicIndex index, SphericalPoint point) {
    const double p = assoc_legendre_norm(index.N, index.m, std::cos(point.polar));
    const double arg = index.m * point.azimuth;
    return {p * std::cos(arg), p * std::sin(arg)};
}

namespace detail {

// (sin w - w cos w) / w^3, the radial profile of the unit-bandlimit besinc up
// to the 1/(2 pi^2) constant. The subtraction loses ~3 digits per decade below
// w ~ 1e-2, so a short Taylor series takes over there.
inline double besinc_profile(double w) {
    if (w < 1e-2) {
        const double w2 = w * w;
        return 1.0 / 3.0 + w2 * (-1.0 / 30.0 + w2 * (1.0 / 840.0 + w2 * (-1.0 / 45360.0 + w2 / 3991680.0)));
    }
    return (std::sin(w) - w * std::cos(w)) / (w * w * w);
}

} // namespace detail

// besinc at radius r: h_c(x) = (c/2pi)^3 * integral of e^{ic<x,y>} over the
// unit ball, which reduces to c^3 (sin(cr) - cr cos(cr)) / (2 pi^2 (cr)^3).
inline double besinc_radial(double c, double r) {
    if (!(c > 0.0)) throw std::invalid_argument("besinc: bandlimit must be positive");
    if (!(r >= 0.0)) throw std::invalid_argument("besinc: radius must be non-negative");
    static const double pi = std::acos(-1.0);
    return c * c * c * detail::besinc_profile(c * r) / (2.0 * pi * pi);
}

inline double besinc(double c, const std::array<double, 3>& x) {
    const double r = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
    return besinc_radial(c, r);
}

} // namespace gpswf
