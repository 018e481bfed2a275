#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace gpswf {

struct Rule1D {
    std::vector<double> nodes;
    std::vector<double> weights;
    double lo = -1.0;
    double hi = 1.0;
};

// Gauss-Legendre rule on (lo, hi); nodes by Newton iteration on P_n, exact for
// polynomials of degree <= 2n-1.
inline Rule1D gauss_legendre(int n, double lo = -1.0, double hi = 1.0) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: need at least one node");
    if (!(hi > lo)) throw std::invalid_argument("gauss_legendre: empty interval");
    static const double pi = std::acos(-1.0);
    Rule1D rule;
    rule.lo = lo;
    rule.hi = hi;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const int mid = (n + 1) / 2;
    for (int i = 0; i < mid; ++i) {
        // Chebyshev-like initial guess, then Newton on P_n(x)
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            pp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) {
                // one final polish after convergence
                p0 = 1.0;
                p1 = x;
                for (int k = 2; k <= n; ++k) {
                    double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                pp = n * (x * p1 - p0) / (x * x - 1.0);
                break;
            }
        }
        const double w = 2.0 / ((1.0 - x * x) * pp * pp);
        // mirror the node pair onto (lo, hi)
        const double half = 0.5 * (hi - lo), mid_ab = 0.5 * (hi + lo);
        rule.nodes[i] = mid_ab - half * x;
        rule.nodes[n - 1 - i] = mid_ab + half * x;
        rule.weights[i] = half * w;
        rule.weights[n - 1 - i] = half * w;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.5 * (hi + lo); // exact center
    return rule;
}

struct BallRule {
    std::vector<std::array<double, 3>> points; // inside the closed unit ball
    std::vector<double> weights;               // sum to 4*pi/3
    int radial_order = 0;
    int polar_order = 0;
    int azimuth_order = 0;
};

// Product rule over the unit ball: Gauss-Legendre in r on [0,1] with the r^2
// volume factor folded into the weights, Gauss-Legendre in cos(polar), and the
// periodic trapezoid (uniform) rule in azimuth. Point order: r-major, then
// polar, then azimuth, which reconstruction code relies on.
inline BallRule ball_rule(int radial_order, int polar_order, int azimuth_order) {
    if (radial_order < 1 || polar_order < 1 || azimuth_order < 1)
        throw std::invalid_argument("ball_rule: all orders must be positive");
    static const double pi = std::acos(-1.0);
    const Rule1D rr = gauss_legendre(radial_order, 0.0, 1.0);
    const Rule1D ru = gauss_legendre(polar_order, -1.0, 1.0);
    BallRule rule;
    rule.radial_order = radial_order;
    rule.polar_order = polar_order;
    rule.azimuth_order = azimuth_order;
    rule.points.reserve(static_cast<std::size_t>(radial_order) * polar_order * azimuth_order);
    rule.weights.reserve(rule.points.capacity());
    const double wphi = 2.0 * pi / azimuth_order;
    for (int i = 0; i < radial_order; ++i) {
        const double r = rr.nodes[i];
        const double wr = rr.weights[i] * r * r;
        for (int j = 0; j < polar_order; ++j) {
            const double u = ru.nodes[j];
            const double s = std::sqrt(std::max(0.0, 1.0 - u * u));
            const double wu = ru.weights[j];
            for (int k = 0; k < azimuth_order; ++k) {
                const double phi = 2.0 * pi * k / azimuth_order;
                rule.points.push_back({r * s * std::cos(phi), r * s * std::sin(phi), r * u});
                rule.weights.push_back(wr * wu * wphi);
            }
        }
    }
    return rule;
}

struct SphereRule {
    std::vector<std::array<double, 3>> points; // unit vectors
    std::vector<double> weights;               // sum to 4*pi
    int polar_order = 0;
    int azimuth_order = 0;
};

inline SphereRule sphere_rule(int polar_order, int azimuth_order) {
    if (polar_order < 1 || azimuth_order < 1)
        throw std::invalid_argument("sphere_rule: all orders must be positive");
    static const double pi = std::acos(-1.0);
    const Rule1D ru = gauss_legendre(polar_order, -1.0, 1.0);
    SphereRule rule;
    rule.polar_order = polar_order;
    rule.azimuth_order = azimuth_order;
    const double wphi = 2.0 * pi / azimuth_order;
    for (int j = 0; j < polar_order; ++j) {
        const double u = ru.nodes[j];
        const double s = std::sqrt(std::max(0.0, 1.0 - u * u));
        for (int k = 0; k < azimuth_order; ++k) {
            const double phi = 2.0 * pi * k / azimuth_order;
            rule.points.push_back({s * std::cos(phi), s * std::sin(phi), u});
            rule.weights.push_back(ru.weights[j] * wphi);
        }
    }
    return rule;
}

} // namespace gpswf
