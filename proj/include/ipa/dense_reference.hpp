#pragma once

// Dense brute-force references used to validate the tensor-train path.
// Deliberately shares no numerics with the TT code: plain loops over flat
// arrays, scalar arithmetic only.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ipa/errors.hpp"

namespace ipa::dense {

inline constexpr std::int64_t size_cap = std::int64_t(1) << 22;

/// Normalized nonnegative density over the full flat grid.
struct DenseDensity {
    std::vector<double> values;

    double mass() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
};

/// All flat indices attaining the exact minimum value.
inline std::vector<std::size_t> exhaustive_minima(std::span<const double> potential_values) {
    if (potential_values.empty())
        throw ShapeError("exhaustive_minima: empty grid");
    if (static_cast<std::int64_t>(potential_values.size()) > size_cap)
        throw SizeCapError("exhaustive_minima: grid exceeds the dense size cap");
    double best = potential_values[0];
    for (double v : potential_values) best = v < best ? v : best;
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < potential_values.size(); ++j)
        if (potential_values[j] == best) out.push_back(j);
    return out;
}

/// k steps of the normalized power recurrence: u^k rho0 / ||u^k rho0||_1,
/// evaluated as repeated multiply-and-renormalize.
inline DenseDensity dense_power_iteration(std::span<const double> u_values,
                                          const DenseDensity& rho0, int k) {
    if (u_values.size() != rho0.values.size())
        throw ShapeError("dense_power_iteration: size mismatch");
    DenseDensity rho = rho0;
    for (int step = 0; step < k; ++step) {
        double mass = 0.0;
        for (std::size_t j = 0; j < rho.values.size(); ++j) {
            rho.values[j] *= u_values[j];
            mass += rho.values[j];
        }
        if (!(mass > 0.0) || !std::isfinite(mass))
            throw DegenerateDensityError("dense_power_iteration: density lost all mass");
        for (double& v : rho.values) v /= mass;
    }
    return rho;
}

/// lambda_2 / lambda_1 of diag(u): second-largest over largest entry.
inline double spectral_ratio(std::span<const double> u_values) {
    if (u_values.size() < 2)
        throw ShapeError("spectral_ratio: need at least two entries");
    std::size_t arg = 0;
    for (std::size_t j = 1; j < u_values.size(); ++j)
        if (u_values[j] > u_values[arg]) arg = j;
    double second = -1.0;
    for (std::size_t j = 0; j < u_values.size(); ++j)
        if (j != arg && u_values[j] > second) second = u_values[j];
    return second / u_values[arg];
}

/// Convergence-rate bound from the local polynomial cap
/// U(x) >= U(x*) - alpha (x - x*)^(2 gamma) near the maximum:
/// returns 1 - (alpha / U(x*)) dx^(2 gamma) and checks that the dense
/// spectrum respects it (lambda_2 / lambda_1 >= bound).
inline double steepness_rate_bound(std::span<const double> u_values, double spacing, double alpha,
                                   int gamma) {
    if (gamma < 1)
        throw ConfigError("steepness_rate_bound: gamma must be >= 1");
    if (!(alpha > 0.0))
        throw ConfigError("steepness_rate_bound: alpha must be > 0");
    double umax = u_values[0];
    for (double v : u_values) umax = v > umax ? v : umax;
    const double bound = 1.0 - alpha / umax * std::pow(spacing, 2.0 * gamma);
    if (spectral_ratio(u_values) < bound)
        throw Error("steepness_rate_bound: spectrum violates the bound; "
                    "the polynomial cap precondition does not hold");
    return bound;
}

} // namespace ipa::dense
