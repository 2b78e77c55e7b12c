#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <gmpxx.h>

#include "ipa/errors.hpp"
#include "ipa/grid.hpp"

namespace ipa {

/// All primes in [2, limit], ascending.
inline std::vector<std::int64_t> sieve_primes(std::int64_t limit) {
    if (limit < 2)
        throw ConfigError("sieve_primes: limit must be >= 2 (empty search domain)");
    std::vector<bool> composite(static_cast<std::size_t>(limit) + 1, false);
    std::vector<std::int64_t> primes;
    for (std::int64_t i = 2; i <= limit; ++i) {
        if (composite[static_cast<std::size_t>(i)]) continue;
        primes.push_back(i);
        if (i > limit / i) continue;
        for (std::int64_t k = i * i; k <= limit; k += i) composite[static_cast<std::size_t>(k)] = true;
    }
    return primes;
}

/// Separable double-well chain: V(x) = sum_i v(x_i) with the quartic
/// v(x) = 0.429 x - 1.126 x^2 - 0.143 x^3 + 0.563 x^4 (eV per reduced proton
/// coordinate). Global per-dimension minimum at x = -1, tautomeric local
/// minimum at x = +1.
struct DnaPotential {
    std::size_t physical_dims = 50;

    static double term(double x) {
        return 0.429 * x - 1.126 * x * x - 0.143 * x * x * x + 0.563 * x * x * x * x;
    }
};

/// Sum of the quartic over all physical dimensions at a product multi-index.
inline double dna_eval(const DnaPotential& pot, std::span<const int> index,
                       const ProductGrid& product) {
    if (product.physical_dims() != pot.physical_dims)
        throw ShapeError("dna_eval: grid dimensionality mismatch");
    const auto slots = product.slots_of(index);
    double v = 0.0;
    for (std::size_t i = 0; i < slots.size(); ++i)
        v += DnaPotential::term(product.coord(i, slots[i]));
    return v;
}

/// Prime search space folded into quantics: slot j < primes.size() carries
/// the j-th prime; padded slots carry pad_value = p_max, a strict upper bound
/// on every remainder, so padding can never tie a global minimum.
struct PrimeGrid {
    std::int64_t p_max = 2;
    std::vector<std::int64_t> primes;
    int quantics_depth = 1;
    double pad_value = 2.0;

    static PrimeGrid build(std::int64_t p_max) {
        PrimeGrid g;
        g.p_max = p_max;
        g.primes = sieve_primes(p_max);
        g.quantics_depth = 1;
        while ((std::int64_t(1) << g.quantics_depth) < static_cast<std::int64_t>(g.primes.size()))
            ++g.quantics_depth;
        g.pad_value = static_cast<double>(p_max);
        return g;
    }

    std::int64_t slot_count() const { return std::int64_t(1) << quantics_depth; }

    bool is_padded(std::int64_t slot) const {
        return slot >= static_cast<std::int64_t>(primes.size());
    }

    /// Coordinate table for measurement: slot -> prime value (pad_value on
    /// padded slots, nondecreasing overall).
    CoordTable coord_table() const {
        CoordTable t;
        t.depth = quantics_depth;
        t.values.reserve(static_cast<std::size_t>(slot_count()));
        for (std::int64_t p : primes) t.values.push_back(static_cast<double>(p));
        t.values.resize(static_cast<std::size_t>(slot_count()), pad_value);
        return t;
    }
};

/// V(p) = N mod p on the prime grid, with N held in exact arbitrary
/// precision; remainders are below p_max and hence exactly representable as
/// doubles once reduced.
class ModPotential {
public:
    ModPotential(mpz_class target, PrimeGrid grid)
        : target_(std::move(target)), grid_(std::move(grid)) {
        if (target_ < 2)
            throw ConfigError("ModPotential: N must be >= 2");
    }

    static ModPotential from_decimal(const std::string& decimal, std::int64_t p_max) {
        mpz_class n;
        if (n.set_str(decimal, 10) != 0)
            throw ConfigError("ModPotential: N is not a valid decimal integer");
        return ModPotential(std::move(n), PrimeGrid::build(p_max));
    }

    const PrimeGrid& grid() const { return grid_; }
    const mpz_class& target() const { return target_; }

    double eval_slot(std::int64_t slot) const {
        if (slot < 0 || slot >= grid_.slot_count())
            throw IndexError("ModPotential: slot out of range");
        if (grid_.is_padded(slot)) return grid_.pad_value;
        mpz_class r = target_ % grid_.primes[static_cast<std::size_t>(slot)];
        return r.get_d();
    }

    /// Exhaustive zero set over the prime sequence: all primes dividing N.
    /// Used as the test oracle and for multiplicity reporting.
    std::vector<std::int64_t> zero_primes() const {
        std::vector<std::int64_t> out;
        for (std::int64_t p : grid_.primes)
            if (mpz_divisible_ui_p(target_.get_mpz_t(), static_cast<unsigned long>(p)))
                out.push_back(p);
        return out;
    }

    /// Multiplicity of a prime factor by repeated exact division.
    int multiplicity(std::int64_t p) const {
        mpz_class n = target_;
        int e = 0;
        while (mpz_divisible_ui_p(n.get_mpz_t(), static_cast<unsigned long>(p))) {
            mpz_divexact_ui(n.get_mpz_t(), n.get_mpz_t(), static_cast<unsigned long>(p));
            ++e;
        }
        return e;
    }

private:
    mpz_class target_;
    PrimeGrid grid_;
};

inline std::vector<std::int64_t> minima_of_mod(const ModPotential& pot) {
    return pot.zero_primes();
}

/// Strictly increasing surrogate potential on the flat slot index, used to
/// break the degeneracy of a converged Dirac comb.
struct RampPotential {
    double slope = 1.0;

    double eval_slot(std::int64_t slot) const { return slope * static_cast<double>(slot); }
};

/// Separable polynomial chain for the custom workload: per-dimension
/// coefficients in ascending powers (index 0 = constant term).
struct PolynomialPotential {
    std::vector<std::vector<double>> coefficients; // one list per physical dimension

    double term(std::size_t dim, double x) const {
        const auto& c = coefficients.at(dim);
        double v = 0.0;
        for (std::size_t k = c.size(); k-- > 0;) v = v * x + c[k];
        return v;
    }
};

/// Callable surface handed to the engine: full multi-index energy, plus the
/// separable per-dimension form when the potential decomposes as a sum of
/// one-dimensional terms (all built-in potentials do). The engine exploits
/// separability to build Boltzmann factors dimension by dimension.
struct PotentialOracle {
    /// energy contribution of `dim` at flat slot index (null when the
    /// potential is not separable)
    std::function<double(std::size_t dim, std::int64_t slot)> separable;
    /// total energy at a full quantics multi-index
    std::function<double(std::span<const int>)> full;
};

inline PotentialOracle make_separable_oracle(
    std::function<double(std::size_t, std::int64_t)> per_dim, const ProductGrid& product) {
    PotentialOracle o;
    o.separable = per_dim;
    o.full = [per_dim, &product](std::span<const int> index) {
        const auto slots = product.slots_of(index);
        double v = 0.0;
        for (std::size_t i = 0; i < slots.size(); ++i) v += per_dim(i, slots[i]);
        return v;
    };
    return o;
}

inline PotentialOracle make_dna_oracle(const DnaPotential& pot, const ProductGrid& product) {
    if (product.physical_dims() != pot.physical_dims)
        throw ShapeError("make_dna_oracle: grid dimensionality mismatch");
    return make_separable_oracle(
        [&product](std::size_t dim, std::int64_t slot) {
            return DnaPotential::term(product.coord(dim, slot));
        },
        product);
}

inline PotentialOracle make_mod_oracle(const ModPotential& pot, const ProductGrid& product) {
    if (product.physical_dims() != 1)
        throw ShapeError("make_mod_oracle: mod potential lives on one physical dimension");
    return make_separable_oracle(
        [&pot](std::size_t, std::int64_t slot) { return pot.eval_slot(slot); }, product);
}

inline PotentialOracle make_ramp_oracle(const RampPotential& ramp, const ProductGrid& product,
                                        std::size_t dim) {
    return make_separable_oracle(
        [&ramp, dim](std::size_t d, std::int64_t slot) {
            return d == dim ? ramp.eval_slot(slot) : 0.0;
        },
        product);
}

inline PotentialOracle make_polynomial_oracle(const PolynomialPotential& pot,
                                              const ProductGrid& product) {
    if (product.physical_dims() != pot.coefficients.size())
        throw ShapeError("make_polynomial_oracle: coefficient count does not match dimensions");
    return make_separable_oracle(
        [&pot, &product](std::size_t dim, std::int64_t slot) {
            return pot.term(dim, product.coord(dim, slot));
        },
        product);
}

} // namespace ipa
