#include <doctest.h>

#include <cmath>

#include "ipa/dense_reference.hpp"
#include "ipa/grid.hpp"
#include "ipa/potentials.hpp"

using namespace ipa;
using namespace ipa::dense;

TEST_CASE("exhaustive_minima finds exact tie sets") {
    // DNA cut on [-1.5, 2.5] with 2^8 points: unique minimum nearest -1
    const GridSpec g(-1.5, 2.5, 8);
    std::vector<double> v(256);
    for (std::int64_t j = 0; j < 256; ++j)
        v[static_cast<std::size_t>(j)] = DnaPotential::term(g.coord(j));
    const auto mins = exhaustive_minima(v);
    REQUIRE(mins.size() == 1);
    CHECK(std::abs(g.coord(static_cast<std::int64_t>(mins[0])) + 1.0) <= g.spacing());

    // 187 mod p: exact ties at the slots of 11 and 17
    const ModPotential pot(mpz_class(187), PrimeGrid::build(200));
    std::vector<double> m(64);
    for (std::int64_t j = 0; j < 64; ++j) m[static_cast<std::size_t>(j)] = pot.eval_slot(j);
    CHECK(exhaustive_minima(m) == std::vector<std::size_t>{4, 6});

    const std::vector<double> flat(16, 3.25);
    CHECK(exhaustive_minima(flat).size() == 16);
}

TEST_CASE("dense_power_iteration matches the closed form") {
    // two-eigenvalue oracle: n = 100, ratio e, k = 5
    const int n = 100;
    std::vector<double> u(n, 1.0 / std::exp(1.0));
    u[37] = 1.0;
    DenseDensity rho0{std::vector<double>(n, 1.0 / n)};
    const DenseDensity rho5 = dense_power_iteration(u, rho0, 5);
    double mx = 0;
    for (double x : rho5.values) mx = std::max(mx, x);
    CHECK(mx == doctest::Approx(1.0 / (1.0 + 99.0 * std::exp(-5.0))).epsilon(1e-12));

    const DenseDensity same = dense_power_iteration(u, rho0, 0);
    for (int j = 0; j < n; ++j) CHECK(same.values[j] == rho0.values[j]);

    std::vector<double> uniform_u(n, 0.7);
    const DenseDensity still = dense_power_iteration(uniform_u, rho0, 9);
    for (int j = 0; j < n; ++j) CHECK(still.values[j] == doctest::Approx(1.0 / n));

    std::vector<double> zero_u(n, 0.0);
    CHECK_THROWS_AS(dense_power_iteration(zero_u, rho0, 1), DegenerateDensityError);
}

TEST_CASE("min-to-max ratio and amplitude follow the spectral formulas") {
    const int n = 64;
    const double ratio = 2.5;
    std::vector<double> u(n, 1.0 / ratio);
    u[11] = 1.0;
    DenseDensity rho{std::vector<double>(n, 1.0 / n)};
    for (int k = 1; k <= 20; ++k) {
        rho = dense_power_iteration(u, rho, 1);
        double lo = 1e300, hi = 0;
        for (double x : rho.values) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
        CHECK(lo / hi == doctest::Approx(std::pow(1.0 / ratio, k)).epsilon(1e-10));
        CHECK(hi == doctest::Approx(1.0 / (1.0 + (n - 1) * std::pow(1.0 / ratio, k)))
                        .epsilon(1e-10));
    }
}

TEST_CASE("a unique dominant entry drives the density to a Kronecker delta") {
    const int n = 48;
    std::vector<double> u(n);
    for (int j = 0; j < n; ++j) u[static_cast<std::size_t>(j)] = 0.2 + 0.01 * (j % 7);
    u[29] = 1.0;
    DenseDensity rho{std::vector<double>(n, 1.0 / n)};
    rho = dense_power_iteration(u, rho, 60);
    CHECK(rho.values[29] == doctest::Approx(1.0).epsilon(1e-12));
    for (int j = 0; j < n; ++j)
        if (j != 29) CHECK(rho.values[static_cast<std::size_t>(j)] <= 1e-12);
}

TEST_CASE("steepness bound holds against the dense spectrum") {
    // U(x) = 1 - x^2 on [-1, 1], 2^6 points: alpha = 1, gamma = 1
    const int n = 64;
    const double dx = 2.0 / (n - 1);
    std::vector<double> u(n);
    for (int j = 0; j < n; ++j) {
        const double x = -1.0 + j * dx;
        u[static_cast<std::size_t>(j)] = 1.0 - x * x;
    }
    const double bound = steepness_rate_bound(u, dx, 1.0, 1);
    CHECK(bound == doctest::Approx(1.0 - dx * dx));
    CHECK(spectral_ratio(u) >= bound);

    // quartic cap: U = 1 - x^4, gamma = 2
    std::vector<double> u4(n);
    for (int j = 0; j < n; ++j) {
        const double x = -1.0 + j * dx;
        u4[static_cast<std::size_t>(j)] = 1.0 - x * x * x * x;
    }
    const double bound4 = steepness_rate_bound(u4, dx, 1.0, 2);
    CHECK(bound4 == doctest::Approx(1.0 - std::pow(dx, 4.0)));
    CHECK(spectral_ratio(u4) >= bound4);

    // halved spacing shrinks the gap 1 - bound by 4x for gamma = 1 (same U*)
    const double gap1 = 1.0 - steepness_rate_bound(u, dx, 1.0, 1);
    const double gap2 = 1.0 - steepness_rate_bound(u, dx / 2, 1.0, 1);
    CHECK(gap1 / gap2 == doctest::Approx(4.0).epsilon(1e-12));
}
