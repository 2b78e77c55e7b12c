#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ipa/cross.hpp"
#include "ipa/errors.hpp"
#include "ipa/grid.hpp"
#include "ipa/potentials.hpp"
#include "ipa/tensor_train.hpp"

namespace ipa {

struct IpaConfig {
    double beta = 1.0;                 ///< scaling parameter of U = exp(-beta V)
    int max_iterations = 100;
    double convergence_tolerance = 0.0; ///< expectation-change threshold; <= 0 means
                                        ///< auto (1e-6 * largest axis span)
    RoundingPolicy rounding{1e-10, 64};
    CrossConfig cross{};
    bool reference_shift_enabled = true; ///< subtract the sampled minimum of V
                                         ///< before exponentiating
    int nonneg_check_samples = 256;

    void validate() const {
        if (!(beta > 0.0)) throw ConfigError("IpaConfig: beta must be > 0");
        if (max_iterations < 1) throw ConfigError("IpaConfig: max_iterations must be >= 1");
        rounding.validate();
        cross.validate();
    }
};

struct IpaState {
    TensorTrain density;
    int iteration = 0;
    std::vector<double> eta_history;
    std::vector<std::vector<double>> expectation_trace; ///< row k: per-dimension <x_i>
};

struct IterationRecord {
    int iteration;
    double eta;
    std::vector<double> expectation;
    Index max_rank;
};

struct RunResult {
    IpaState state;
    bool converged = false;
    std::vector<IterationRecord> trace;
    std::vector<CrossResult> cross_reports; ///< one per Boltzmann cross build
};

struct MinimaReport {
    std::vector<std::vector<double>> positions; ///< ascending in the resolved coordinate
    std::vector<double> masses;                 ///< probability captured per minimum
    int iterations_used = 0;
    bool complete = true; ///< false when a ramp run failed to isolate a spike
};

namespace detail {

inline double clamped_boltzmann(double beta, double v, double v_ref) {
    const double arg = -beta * (v - v_ref);
    if (arg < -708.0) return 0.0; // underflow clamp; scale is irrelevant after normalization
    return std::exp(std::min(arg, 690.0));
}

/// Deterministic scan for the reference shift: the first slots of the axis
/// plus a seeded random batch.
inline double sampled_min_slot_value(const std::function<double(std::int64_t)>& f,
                                     std::int64_t slot_count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double vmin = std::numeric_limits<double>::infinity();
    const std::int64_t head = std::min<std::int64_t>(slot_count, 64);
    for (std::int64_t s = 0; s < head; ++s) vmin = std::min(vmin, f(s));
    for (int i = 0; i < 64; ++i) {
        const auto s = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(slot_count));
        vmin = std::min(vmin, f(s));
    }
    return vmin;
}

} // namespace detail

/// QTT of exp(-beta (V - V_ref)). Separable potentials are built dimension by
/// dimension (cross on each axis, then a Kronecker lift and elementwise
/// product), which keeps every per-dimension factor in [0, O(1)] and avoids
/// the global underflow a direct product evaluation would hit. Non-separable
/// oracles go through one cross over the full quantics index space.
inline TensorTrain boltzmann_tt(const PotentialOracle& potential, const ProductGrid& product,
                                const IpaConfig& config,
                                std::vector<CrossResult>* reports = nullptr) {
    config.validate();
    if (potential.separable) {
        TensorTrain u = constant_tt(product.mode_sizes(), 1.0);
        for (std::size_t dim = 0; dim < product.physical_dims(); ++dim) {
            const int d = product.depth(dim);
            const std::int64_t n = std::int64_t(1) << d;
            auto slot_energy = [&](std::int64_t s) { return potential.separable(dim, s); };
            const double v_ref = config.reference_shift_enabled
                ? detail::sampled_min_slot_value(slot_energy, n,
                                                 config.cross.random_seed ^ (0x9e37 + dim))
                : 0.0;
            Oracle f = [&](std::span<const int> bits) {
                return detail::clamped_boltzmann(config.beta, slot_energy(unfold_index(bits)),
                                                 v_ref);
            };
            CrossConfig cc = config.cross;
            cc.random_seed = config.cross.random_seed + 0x51ab * (dim + 1);
            CrossResult res = cross_interpolate(f, std::vector<int>(static_cast<std::size_t>(d), 2), cc);
            if (reports) reports->push_back(res);
            TensorTrain lifted = lift_to_product(res.tt, dim, product);
            u = (dim == 0) ? std::move(lifted) : hadamard(u, lifted);
        }
        return truncate(u, config.rounding);
    }

    // non-separable: one cross over the full index space
    std::mt19937_64 rng(config.cross.random_seed ^ 0xb017);
    const auto modes = product.mode_sizes();
    double v_ref = 0.0;
    if (config.reference_shift_enabled) {
        v_ref = std::numeric_limits<double>::infinity();
        std::vector<int> idx(modes.size(), 0);
        v_ref = std::min(v_ref, potential.full(idx));
        for (int i = 0; i < 256; ++i) {
            idx = detail::random_index(rng, modes);
            v_ref = std::min(v_ref, potential.full(idx));
        }
    }
    Oracle f = [&](std::span<const int> index) {
        return detail::clamped_boltzmann(config.beta, potential.full(index), v_ref);
    };
    CrossResult res = cross_interpolate(f, modes, config.cross);
    if (reports) reports->push_back(res);
    return truncate(res.tt, config.rounding);
}

/// Sample `samples` entries of a unit-mass density and fail when any is
/// materially negative. The -1e-9 floor is absolute: entries of a normalized
/// density are at most 1, and per-step rounding perturbs them by no more than
/// ~1e-10. Exact nonnegativity of a TT is intractable; IPA construction
/// preserves it analytically.
inline void spot_check_nonnegative(const TensorTrain& tt, int samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto modes = tt.mode_sizes();
    for (int s = 0; s < samples; ++s) {
        const auto idx = detail::random_index(rng, modes);
        if (tt.eval(idx) < -1e-9)
            throw DegenerateDensityError("density spot check: sampled entry is negative");
    }
}

/// One amplitude-amplification step:
/// rho_k = round(U o rho_{k-1}) / eta_k with eta_k its total mass.
inline IpaState ipa_step(IpaState state, const TensorTrain& u, const IpaConfig& config) {
    TensorTrain product = truncate(hadamard(u, state.density), config.rounding);
    const double eta = sum_entries(product);
    if (!(eta > 0.0) || !std::isfinite(eta))
        throw DegenerateDensityError("ipa_step: U annihilated the density (eta <= 0)");
    state.density = scale(product, 1.0 / eta);
    state.iteration += 1;
    state.eta_history.push_back(eta);
    return state;
}

namespace detail {

/// Coordinate train of one axis: affine rank-2 for uniform grids, TT-SVD of
/// the coordinate table otherwise (the prime-value map).
inline TensorTrain axis_position_tt(const ProductGrid& product, std::size_t dim) {
    if (const auto* u = std::get_if<GridSpec>(&product.axis(dim))) return position_tt(*u);
    const auto& table = std::get<CoordTable>(product.axis(dim));
    return from_dense(table.values, std::vector<int>(static_cast<std::size_t>(table.depth), 2),
                      {1e-13, RoundingPolicy::unbounded});
}

/// Mode-summed transfer environments of a density train, reused for all
/// per-dimension expectations.
struct SummedEnvironments {
    std::vector<Matrix> prefix; // prefix[j]: 1 x rank(j)
    std::vector<Matrix> suffix; // suffix[j]: rank(j) x 1
    double mass = 0.0;

    explicit SummedEnvironments(const TensorTrain& tt) {
        const std::size_t n = tt.order();
        std::vector<Matrix> summed(n);
        for (std::size_t j = 0; j < n; ++j) {
            Matrix t = Matrix::Zero(tt.rank(j), tt.rank(j + 1));
            for (const Matrix& s : tt.core(j)) t += s;
            summed[j] = std::move(t);
        }
        prefix.resize(n + 1);
        suffix.resize(n + 1);
        prefix[0] = Matrix::Ones(1, 1);
        for (std::size_t j = 0; j < n; ++j) prefix[j + 1] = prefix[j] * summed[j];
        suffix[n] = Matrix::Ones(1, 1);
        for (std::size_t j = n; j-- > 0;) suffix[j] = summed[j] * suffix[j + 1];
        mass = prefix[n](0, 0);
    }
};

/// <f>_rho for a train f living on one dimension's quantics block, with all
/// other modes contracted against ones.
inline double block_expectation(const TensorTrain& density, const SummedEnvironments& env,
                                const TensorTrain& block, std::size_t begin) {
    Matrix w = env.prefix[begin]; // 1 x r, weight matrix is (r_rho x r_block)
    Matrix wm = w.transpose();    // r_rho x 1 == r_rho x r_block(=1)
    for (std::size_t j = 0; j < block.order(); ++j) {
        const auto& rc = density.core(begin + j);
        const auto& bc = block.core(j);
        Matrix next = Matrix::Zero(rc[0].cols(), bc[0].cols());
        for (std::size_t i = 0; i < rc.size(); ++i)
            next.noalias() += rc[i].transpose() * wm * bc[i];
        wm = std::move(next);
    }
    return (wm.transpose() * env.suffix[begin + block.order()])(0, 0);
}

} // namespace detail

namespace detail {

/// Pre-built per-axis coordinate trains, so loops do not re-decompose the
/// coordinate table of a non-uniform axis on every expectation call.
struct MeasurementContext {
    std::vector<TensorTrain> axis;

    explicit MeasurementContext(const ProductGrid& product) {
        axis.reserve(product.physical_dims());
        for (std::size_t dim = 0; dim < product.physical_dims(); ++dim)
            axis.push_back(axis_position_tt(product, dim));
    }
};

inline std::vector<double> expectation_with(const TensorTrain& density,
                                            const ProductGrid& product,
                                            const MeasurementContext& ctx) {
    if (density.order() != product.total_quantics())
        throw ShapeError("expectation_position: density does not live on this grid");
    SummedEnvironments env(density);
    if (!(env.mass > 0.0) || !std::isfinite(env.mass))
        throw DegenerateDensityError("expectation_position: density has no mass");
    std::vector<double> out(product.physical_dims());
    for (std::size_t dim = 0; dim < product.physical_dims(); ++dim) {
        const auto [begin, end] = product.quantics_span(dim);
        out[dim] = block_expectation(density, env, ctx.axis[dim], begin) / env.mass;
    }
    return out;
}

} // namespace detail

/// Per-dimension position expectation values <x_i> of a normalized density.
inline std::vector<double> expectation_position(const TensorTrain& density,
                                                const ProductGrid& product) {
    return detail::expectation_with(density, product, detail::MeasurementContext(product));
}

namespace detail {

/// Bitwise comparator on one axis: indicator of slot > t (or slot <= t when
/// `complement`). Rank 2: state (still-equal, decided).
inline TensorTrain comparator_tt(int depth, std::int64_t threshold_slot, bool complement) {
    const auto bits = fold_index(threshold_slot, depth);
    auto eq_to_decided = [&](int digit, int b) {
        return complement ? (digit < b ? 1.0 : 0.0) : (digit > b ? 1.0 : 0.0);
    };
    // "equal so far" counts as accepted in the complement (slot == t passes <=)
    const double eq_accept = complement ? 1.0 : 0.0;
    if (depth == 1) {
        TensorTrain::Core c;
        for (int i = 0; i < 2; ++i)
            c.push_back(Matrix::Constant(1, 1, eq_to_decided(i, bits[0]) +
                                                   eq_accept * (i == bits[0] ? 1.0 : 0.0)));
        return TensorTrain({std::move(c)});
    }
    std::vector<TensorTrain::Core> cores(static_cast<std::size_t>(depth));
    for (int i = 0; i < 2; ++i) {
        Matrix first(1, 2);
        first << (i == bits[0] ? 1.0 : 0.0), eq_to_decided(i, bits[0]);
        cores[0].push_back(first);
        const int bl = bits[static_cast<std::size_t>(depth - 1)];
        Matrix last(2, 1);
        last << eq_to_decided(i, bl) + eq_accept * (i == bl ? 1.0 : 0.0), 1.0;
        cores[static_cast<std::size_t>(depth - 1)].push_back(last);
    }
    for (int k = 1; k + 1 < depth; ++k)
        for (int i = 0; i < 2; ++i) {
            const int b = bits[static_cast<std::size_t>(k)];
            Matrix mid(2, 2);
            mid << (i == b ? 1.0 : 0.0), eq_to_decided(i, b), 0.0, 1.0;
            cores[static_cast<std::size_t>(k)].push_back(mid);
        }
    return TensorTrain(std::move(cores));
}

inline TensorTrain axis_step_tt(const ProductGrid& product, std::size_t dim, double threshold,
                                bool complement) {
    const std::int64_t t = product.slot_at_or_below(dim, threshold);
    const std::int64_t n = product.point_count(dim);
    if (t < 0)
        return constant_tt(product.mode_sizes(), complement ? 0.0 : 1.0);
    if (t >= n - 1)
        return constant_tt(product.mode_sizes(), complement ? 1.0 : 0.0);
    return lift_to_product(comparator_tt(product.depth(dim), t, complement), dim, product);
}

} // namespace detail

/// Shifted Heaviside mask: 1 where x_dim > threshold, 0 where x_dim <=
/// threshold. Built analytically as a rank-2 digit comparator, not by cross.
inline TensorTrain heaviside_tt(const ProductGrid& product, std::size_t dim, double threshold) {
    return detail::axis_step_tt(product, dim, threshold, false);
}

/// Complementary mask 1 - Heaviside: 1 where x_dim <= threshold.
inline TensorTrain heaviside_complement_tt(const ProductGrid& product, std::size_t dim,
                                           double threshold) {
    return detail::axis_step_tt(product, dim, threshold, true);
}

/// Resolve two degenerate minima: mask the comb on both sides of its mean
/// and return the two expectation positions, ascending in `dim`'s coordinate.
inline std::pair<std::vector<double>, std::vector<double>>
split_pair(const TensorTrain& density, const ProductGrid& product, std::size_t dim) {
    const detail::MeasurementContext ctx(product);
    const auto exps = detail::expectation_with(density, product, ctx);
    const double mean = exps.at(dim);
    TensorTrain upper = hadamard(density, heaviside_tt(product, dim, mean));
    TensorTrain lower = hadamard(density, heaviside_complement_tt(product, dim, mean));
    const double mu = sum_entries(upper), ml = sum_entries(lower);
    if (mu < 1e-9 || ml < 1e-9)
        throw NotDegenerateError("split_pair: one side of the mean carries no mass; "
                                 "the density is not a two-spike comb");
    auto lo = detail::expectation_with(scale(lower, 1.0 / ml), product, ctx);
    auto hi = detail::expectation_with(scale(upper, 1.0 / mu), product, ctx);
    if (lo[dim] > hi[dim]) std::swap(lo, hi);
    return {lo, hi};
}

namespace detail {

inline double resolve_tolerance(const IpaConfig& config, const ProductGrid& product) {
    if (config.convergence_tolerance > 0.0) return config.convergence_tolerance;
    double span = 0.0;
    for (std::size_t dim = 0; dim < product.physical_dims(); ++dim)
        span = std::max(span, product.coord_span(dim));
    return 1e-6 * span;
}

} // namespace detail

/// Full IPA run: build U once, iterate amplitude amplification with
/// per-iteration rounding until the per-dimension expectation values
/// stabilize or max_iterations is reached. `initial` overrides the uniform
/// starting density (used by the ramp sweep, which reinitializes from a
/// converged comb).
inline RunResult run(const PotentialOracle& potential, const ProductGrid& product,
                     const IpaConfig& config, const TensorTrain* initial = nullptr) {
    config.validate();
    RunResult out;
    const TensorTrain u = boltzmann_tt(potential, product, config, &out.cross_reports);
    const double tol = detail::resolve_tolerance(config, product);
    const detail::MeasurementContext ctx(product);

    IpaState state;
    state.density = initial ? *initial : uniform_density(product);
    std::vector<double> prev = detail::expectation_with(state.density, product, ctx);
    state.expectation_trace.push_back(prev);

    for (int k = 1; k <= config.max_iterations; ++k) {
        state = ipa_step(std::move(state), u, config);
        spot_check_nonnegative(state.density, config.nonneg_check_samples,
                               config.cross.random_seed + static_cast<std::uint64_t>(k));
        const double mass = sum_entries(state.density);
        if (std::abs(mass - 1.0) > 1e-9)
            throw DegenerateDensityError("run: density mass drifted from 1 after rounding");
        std::vector<double> exps = detail::expectation_with(state.density, product, ctx);
        state.expectation_trace.push_back(exps);
        out.trace.push_back({k, state.eta_history.back(), exps, state.density.max_rank()});
        double change = 0.0;
        for (std::size_t i = 0; i < exps.size(); ++i)
            change = std::max(change, std::abs(exps[i] - prev[i]));
        prev = exps;
        if (change < tol) {
            out.converged = true;
            break;
        }
    }
    out.state = std::move(state);
    return out;
}

/// Smallest iteration count k with k >= log(n-1) / log(lambda_ratio): the
/// number of steps amplifying a unique minimum to majority amplitude on an
/// n-state search space.
inline int iteration_estimate(std::int64_t n, double lambda_ratio) {
    if (n < 2) throw ConfigError("iteration_estimate: n must be >= 2");
    if (!(lambda_ratio > 1.0))
        throw NoGapError("iteration_estimate: lambda ratio must exceed 1");
    const double bound = std::log(static_cast<double>(n - 1)) / std::log(lambda_ratio);
    const auto k = static_cast<int>(std::ceil(bound - 1e-12));
    return std::max(1, k);
}

namespace detail {

inline TensorTrain comparator_lifted(const ProductGrid& product, std::size_t dim,
                                     std::int64_t slot) {
    if (slot >= product.point_count(dim) - 1)
        return constant_tt(product.mode_sizes(), 0.0);
    return lift_to_product(comparator_tt(product.depth(dim), slot, false), dim, product);
}

/// Mass strictly above a slot boundary, via a comparator mask.
inline double mass_above(const TensorTrain& density, const ProductGrid& product, std::size_t dim,
                         std::int64_t slot) {
    if (slot < 0) return sum_entries(density);
    return sum_entries(hadamard(density, comparator_lifted(product, dim, slot)));
}

} // namespace detail

/// Ramp sweep: repeatedly reinitialize from the remaining comb, amplify the
/// lowest spike with the exponential of a strictly increasing slot ramp,
/// record its position, mask it away, and continue until the remaining mass
/// falls below the floor. The effective ramp exponent is capped so the
/// farthest slot of the axis cannot underflow to zero.
///
/// Ramp evolution deliberately skips rank rounding: the transform is rank 1,
/// so the Hadamard product scales core slices without growing ranks, and
/// truncating here would seed noise below the surviving spike that the ramp
/// then amplifies exponentially. The comb is rounded only between passes,
/// with the mask re-applied afterwards (the comparator's structural zeros
/// wipe any truncation residue below the resolved window).
inline MinimaReport resolve_all_minima(const TensorTrain& density, const ProductGrid& product,
                                       double ramp_beta, const IpaConfig& config,
                                       std::size_t dim = 0) {
    if (!(ramp_beta > 0.0)) throw ConfigError("resolve_all_minima: ramp beta must be > 0");
    config.rounding.validate();
    const int d = product.depth(dim);
    const std::int64_t n = std::int64_t(1) << d;
    const double c_eff = std::min(ramp_beta, 690.0 / static_cast<double>(n));
    constexpr double mass_floor = 1e-6;
    // residual mass tolerated outside the candidate spike; must stay well
    // above the comb's rounding noise after ramp amplification
    constexpr double isolation_residual = 1e-4;

    // exact rank-1 exponential of the slot ramp: product of per-digit factors
    std::vector<TensorTrain::Core> ramp_cores;
    for (int k = 0; k < d; ++k) {
        const double w = c_eff * static_cast<double>(std::int64_t(1) << (d - 1 - k));
        TensorTrain::Core c{Matrix::Ones(1, 1), Matrix::Constant(1, 1, std::exp(-w))};
        ramp_cores.push_back(std::move(c));
    }
    const TensorTrain u_ramp = lift_to_product(TensorTrain(std::move(ramp_cores)), dim, product);

    auto ramp_step = [&](TensorTrain rho) {
        TensorTrain next = hadamard(u_ramp, std::move(rho));
        const double eta = sum_entries(next);
        if (!(eta > 0.0) || !std::isfinite(eta))
            throw DegenerateDensityError("resolve_all_minima: ramp annihilated the comb");
        return scale(next, 1.0 / eta);
    };

    MinimaReport report;
    const detail::MeasurementContext ctx(product);
    TensorTrain comb = density; // unnormalized relative to the original mass
    double remaining = sum_entries(comb);
    const double initial_mass = remaining;
    const int max_ramp_iters =
        static_cast<int>(std::min(2e6, std::ceil(46.0 / c_eff))) + 64;

    while (remaining >= mass_floor * initial_mass) {
        TensorTrain rho = scale(comb, 1.0 / remaining);
        bool isolated = false;
        std::int64_t slot = -1;
        for (int k = 1; k <= max_ramp_iters; ++k) {
            rho = ramp_step(std::move(rho));
            report.iterations_used += 1;
            if (k % 8 != 0 && k != max_ramp_iters) continue;
            const auto exps = detail::expectation_with(rho, product, ctx);
            slot = product.nearest_slot(dim, exps[dim]);
            const double above = detail::mass_above(rho, product, dim, slot);
            const double at_or_above = detail::mass_above(rho, product, dim, slot - 1);
            if (above <= isolation_residual && at_or_above >= 1.0 - isolation_residual) {
                isolated = true;
                break;
            }
        }
        if (!isolated) {
            report.complete = false;
            break;
        }
        const double coord = product.coord(dim, slot);
        auto position = detail::expectation_with(rho, product, ctx);
        position[dim] = coord;
        const TensorTrain mask = heaviside_tt(product, dim, coord);
        TensorTrain masked = hadamard(truncate(hadamard(comb, mask), config.rounding), mask);
        const double new_remaining = sum_entries(masked);
        const double spike_mass = remaining - new_remaining;
        if (spike_mass < 0.5 * mass_floor * initial_mass) {
            report.complete = false; // isolated something that carries no mass
            break;
        }
        report.positions.push_back(std::move(position));
        report.masses.push_back(spike_mass / initial_mass);
        comb = std::move(masked);
        remaining = new_remaining;
    }
    return report;
}

} // namespace ipa
