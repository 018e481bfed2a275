#include <catch2/catch_amalgamated.hpp>

#include <gpswf/gpswf.hpp>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace gpswf;

namespace {

template <class F>
double ball_integral(const BallRule& rule, F&& f) {
    kahan_sum s;
    for (std::size_t p = 0; p < rule.points.size(); ++p) s.add(rule.weights[p] * f(rule.points[p]));
    return s.sum;
}

} // namespace

TEST_CASE("Gauss-Legendre: tiny closed-form rules") {
    const Rule1D one = gauss_legendre(1);
    REQUIRE(one.nodes.size() == 1);
    REQUIRE(std::abs(one.nodes[0]) < 1e-15);
    REQUIRE(std::abs(one.weights[0] - 2.0) < 1e-15);

    const Rule1D two = gauss_legendre(2);
    const double inv_sqrt3 = 1.0 / std::sqrt(3.0);
    REQUIRE(std::abs(two.nodes[0] + inv_sqrt3) < 1e-15);
    REQUIRE(std::abs(two.nodes[1] - inv_sqrt3) < 1e-15);
    REQUIRE(std::abs(two.weights[0] - 1.0) < 1e-15);
    REQUIRE(std::abs(two.weights[1] - 1.0) < 1e-15);
}

TEST_CASE("Gauss-Legendre: n=3 integrates x^4 exactly") {
    const Rule1D rule = gauss_legendre(3);
    kahan_sum s;
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) s.add(rule.weights[j] * std::pow(rule.nodes[j], 4));
    REQUIRE(std::abs(s.sum - 0.4) < 1e-15);
}

TEST_CASE("Gauss-Legendre: weights positive, sum to the interval length") {
    for (const auto& [n, lo, hi] : {std::tuple<int, double, double>{5, -1.0, 1.0}, {17, 0.0, 1.0}, {64, 2.0, 7.5}}) {
        const Rule1D rule = gauss_legendre(n, lo, hi);
        REQUIRE(static_cast<int>(rule.nodes.size()) == n);
        kahan_sum s;
        for (double w : rule.weights) {
            REQUIRE(w > 0.0);
            s.add(w);
        }
        REQUIRE(std::abs(s.sum - (hi - lo)) < 1e-13 * std::abs(hi - lo));
        for (double x : rule.nodes) {
            REQUIRE(x > lo);
            REQUIRE(x < hi);
        }
    }
}

TEST_CASE("Gauss-Legendre: exact for random polynomials of degree 2n-1") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const int n = 8;
    const Rule1D rule = gauss_legendre(n, -0.5, 1.25);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> coef(2 * n); // degree 2n-1
        for (double& c : coef) c = unif(rng);
        auto eval = [&](double x) {
            double acc = 0.0;
            for (std::size_t k = coef.size(); k-- > 0;) acc = acc * x + coef[k];
            return acc;
        };
        kahan_sum s;
        for (std::size_t j = 0; j < rule.nodes.size(); ++j) s.add(rule.weights[j] * eval(rule.nodes[j]));
        // exact antiderivative
        double exact = 0.0;
        for (std::size_t k = 0; k < coef.size(); ++k)
            exact += coef[k] / (k + 1.0) * (std::pow(1.25, k + 1.0) - std::pow(-0.5, k + 1.0));
        REQUIRE(std::abs(s.sum - exact) < 1e-13);
    }
}

TEST_CASE("Gauss-Legendre: rejects n = 0") {
    REQUIRE_THROWS_AS(gauss_legendre(0), std::invalid_argument);
    REQUIRE_THROWS_AS(gauss_legendre(-3), std::invalid_argument);
}

TEST_CASE("ball rule: geometry and moments") {
    const BallRule rule = ball_rule(20, 14, 20);
    kahan_sum wsum;
    for (std::size_t p = 0; p < rule.points.size(); ++p) {
        const auto& x = rule.points[p];
        REQUIRE(x[0] * x[0] + x[1] * x[1] + x[2] * x[2] <= 1.0 + 1e-15);
        REQUIRE(rule.weights[p] > 0.0);
        wsum.add(rule.weights[p]);
    }
    REQUIRE(std::abs(wsum.sum - testsup::frozen::ball_volume) < 1e-13);
    REQUIRE(std::abs(ball_integral(rule, [](const std::array<double, 3>&) { return 1.0; }) -
                     testsup::frozen::ball_volume) < 1e-13);
    REQUIRE(std::abs(ball_integral(rule, [](const std::array<double, 3>& x) { return x[0] * x[0]; }) -
                     testsup::frozen::ball_x1sq) < 1e-12);
    REQUIRE_THROWS_AS(ball_rule(0, 4, 4), std::invalid_argument);
    REQUIRE_THROWS_AS(ball_rule(4, 4, 0), std::invalid_argument);
}

TEST_CASE("ball rule: besinc integral matches the radial reduction") {
    static const double pi = std::acos(-1.0);
    const double c = 3.0;
    const BallRule rule = ball_rule(48, 16, 24);
    const double via_ball = ball_integral(rule, [&](const std::array<double, 3>& x) { return besinc(c, x); });
    const Rule1D rad = gauss_legendre(64, 0.0, 1.0);
    kahan_sum s;
    for (std::size_t j = 0; j < rad.nodes.size(); ++j) {
        const double r = rad.nodes[j];
        s.add(rad.weights[j] * r * r * besinc_radial(c, r));
    }
    REQUIRE(std::abs(via_ball - 4.0 * pi * s.sum) < 1e-10);
}

TEST_CASE("ball rule: self-convergence on a smooth function") {
    auto f = [](const std::array<double, 3>& x) {
        return std::exp(-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]));
    };
    const double coarse = ball_integral(ball_rule(16, 12, 16), f);
    const double fine = ball_integral(ball_rule(32, 24, 32), f);
    REQUIRE(std::abs(coarse - fine) < 1e-12);
    REQUIRE(std::abs(fine - testsup::frozen::gauss_ball) < 1e-12);
}

TEST_CASE("ball rule: harmonic products reproduce Kronecker deltas") {
    const BallRule rule = ball_rule(24, 24, 50);
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> deg(0, 20);
    auto draw = [&]() {
        const int N = deg(rng);
        std::uniform_int_distribution<int> ord(-N, N);
        return HarmonicIndex{N, ord(rng)};
    };
    for (int t = 0; t < 30; ++t) {
        const HarmonicIndex a = draw();
        const HarmonicIndex b = (t % 3 == 0) ? a : draw();
        kahan_csum s;
        for (std::size_t p = 0; p < rule.points.size(); ++p) {
            const auto& x = rule.points[p];
            const double r = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
            const SphericalPoint sp{r, std::acos(r > 0 ? std::clamp(x[2] / r, -1.0, 1.0) : 1.0),
                                    std::atan2(x[1], x[0])};
            s.add(rule.weights[p] * std::pow(r, a.N + b.N) * spherical_harmonic(a, sp) *
                  std::conj(spherical_harmonic(b, sp)));
        }
        const double target = (a.N == b.N && a.m == b.m) ? 1.0 / (a.N + b.N + 3.0) : 0.0;
        REQUIRE(std::abs(s.value() - target) < 1e-10);
    }
}

TEST_CASE("sphere rule: weight sum and point norms") {
    static const double pi = std::acos(-1.0);
    const SphereRule rule = sphere_rule(12, 18);
    kahan_sum s;
    for (std::size_t p = 0; p < rule.points.size(); ++p) {
        const auto& x = rule.points[p];
        REQUIRE(std::abs(x[0] * x[0] + x[1] * x[1] + x[2] * x[2] - 1.0) < 1e-14);
        s.add(rule.weights[p]);
    }
    REQUIRE(std::abs(s.sum - 4.0 * pi) < 1e-12);
    REQUIRE_THROWS_AS(sphere_rule(0, 4), std::invalid_argument);
}
