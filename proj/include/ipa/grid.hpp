#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "ipa/errors.hpp"
#include "ipa/tensor_train.hpp"

namespace ipa {

/// Uniform grid of 2^d points on [lower, upper].
struct GridSpec {
    double lower = 0.0;
    double upper = 1.0;
    int quantics_depth = 1; ///< d; grid has 2^d points

    GridSpec() = default;
    GridSpec(double a, double b, int d) : lower(a), upper(b), quantics_depth(d) {
        if (!(upper > lower))
            throw ConfigError("GridSpec: upper must exceed lower");
        if (d < 1 || d > 62)
            throw ConfigError("GridSpec: quantics_depth must be in [1, 62]");
    }

    std::int64_t point_count() const { return std::int64_t(1) << quantics_depth; }
    double spacing() const { return (upper - lower) / static_cast<double>(point_count() - 1); }
    double coord(std::int64_t j) const { return lower + static_cast<double>(j) * spacing(); }
    double span() const { return upper - lower; }
};

/// Arbitrary slot -> coordinate table on a 2^depth grid (used for the prime
/// search space, where slot j carries the j-th prime).
struct CoordTable {
    std::vector<double> values; ///< size 2^depth, nondecreasing
    int depth = 1;
};

using AxisSpec = std::variant<GridSpec, CoordTable>;

/// Big-endian binary digits of `flat` (first digit = most significant bit).
inline std::vector<int> fold_index(std::int64_t flat, int depth) {
    if (depth < 1 || depth > 62)
        throw IndexError("fold_index: depth out of range");
    if (flat < 0 || flat >= (std::int64_t(1) << depth))
        throw IndexError("fold_index: flat index out of range");
    std::vector<int> bits(static_cast<std::size_t>(depth));
    for (int k = 0; k < depth; ++k)
        bits[static_cast<std::size_t>(k)] = static_cast<int>((flat >> (depth - 1 - k)) & 1);
    return bits;
}

inline std::int64_t unfold_index(std::span<const int> bits) {
    if (bits.empty() || bits.size() > 62)
        throw IndexError("unfold_index: depth out of range");
    std::int64_t flat = 0;
    for (int b : bits) {
        if (b != 0 && b != 1)
            throw IndexError("unfold_index: digit must be binary");
        flat = (flat << 1) | b;
    }
    return flat;
}

/// D-dimensional product search space: one quantics axis per physical
/// dimension, concatenated into a single mode list of total_quantics() binary
/// modes (dimension 0 first, big-endian digits within each dimension).
class ProductGrid {
public:
    explicit ProductGrid(std::vector<AxisSpec> axes) : axes_(std::move(axes)) {
        if (axes_.empty())
            throw ConfigError("ProductGrid: at least one physical dimension required");
        offsets_.resize(axes_.size() + 1, 0);
        for (std::size_t i = 0; i < axes_.size(); ++i)
            offsets_[i + 1] = offsets_[i] + static_cast<std::size_t>(depth(i));
    }

    /// All physical dimensions share one grid (the common symmetric setup).
    static ProductGrid shared(const GridSpec& g, std::size_t dims) {
        return ProductGrid(std::vector<AxisSpec>(dims, AxisSpec(g)));
    }

    std::size_t physical_dims() const { return axes_.size(); }

    int depth(std::size_t dim) const {
        check_dim(dim);
        if (const auto* u = std::get_if<GridSpec>(&axes_[dim])) return u->quantics_depth;
        return std::get<CoordTable>(axes_[dim]).depth;
    }

    std::size_t total_quantics() const { return offsets_.back(); }

    /// Position of dimension `dim`'s quantics block in the global mode list.
    std::pair<std::size_t, std::size_t> quantics_span(std::size_t dim) const {
        check_dim(dim);
        return {offsets_[dim], offsets_[dim + 1]};
    }

    std::vector<int> mode_sizes() const { return std::vector<int>(total_quantics(), 2); }

    const AxisSpec& axis(std::size_t dim) const {
        check_dim(dim);
        return axes_[dim];
    }

    std::int64_t point_count(std::size_t dim) const { return std::int64_t(1) << depth(dim); }

    double coord(std::size_t dim, std::int64_t slot) const {
        check_dim(dim);
        if (slot < 0 || slot >= point_count(dim))
            throw IndexError("coord: slot out of range");
        if (const auto* u = std::get_if<GridSpec>(&axes_[dim])) return u->coord(slot);
        return std::get<CoordTable>(axes_[dim]).values[static_cast<std::size_t>(slot)];
    }

    /// Largest slot whose coordinate is <= threshold, or -1 when the
    /// threshold lies below the whole axis.
    std::int64_t slot_at_or_below(std::size_t dim, double threshold) const {
        check_dim(dim);
        if (const auto* u = std::get_if<GridSpec>(&axes_[dim])) {
            if (threshold < u->lower) return -1;
            const auto j = static_cast<std::int64_t>(
                std::floor((threshold - u->lower) / u->spacing() + 1e-12));
            return std::min(j, u->point_count() - 1);
        }
        const auto& vals = std::get<CoordTable>(axes_[dim]).values;
        auto it = std::upper_bound(vals.begin(), vals.end(), threshold);
        return static_cast<std::int64_t>(it - vals.begin()) - 1;
    }

    std::int64_t nearest_slot(std::size_t dim, double value) const {
        const std::int64_t lo = slot_at_or_below(dim, value);
        if (lo < 0) return 0;
        if (lo + 1 >= point_count(dim)) return point_count(dim) - 1;
        return (value - coord(dim, lo) <= coord(dim, lo + 1) - value) ? lo : lo + 1;
    }

    /// Coordinate span (largest - smallest) of an axis.
    double coord_span(std::size_t dim) const {
        check_dim(dim);
        if (const auto* u = std::get_if<GridSpec>(&axes_[dim])) return u->span();
        const auto& vals = std::get<CoordTable>(axes_[dim]).values;
        return vals.back() - vals.front();
    }

    /// Split a full quantics multi-index into per-dimension flat slots.
    std::vector<std::int64_t> slots_of(std::span<const int> index) const {
        if (index.size() != total_quantics())
            throw IndexError("slots_of: index length mismatch");
        std::vector<std::int64_t> out(physical_dims());
        for (std::size_t i = 0; i < physical_dims(); ++i) {
            const auto [b, e] = quantics_span(i);
            out[i] = unfold_index(index.subspan(b, e - b));
        }
        return out;
    }

private:
    void check_dim(std::size_t dim) const {
        if (dim >= axes_.size())
            throw IndexError("ProductGrid: dimension out of range");
    }

    std::vector<AxisSpec> axes_;
    std::vector<std::size_t> offsets_;
};

/// QTT of the coordinate function x_j = a + j*dx on one uniform axis. Affine
/// in the binary digits, hence exactly rank 2.
inline TensorTrain position_tt(const GridSpec& grid) {
    const int d = grid.quantics_depth;
    const double a = grid.lower, dx = grid.spacing();
    auto weight = [&](int k) { return dx * static_cast<double>(std::int64_t(1) << (d - 1 - k)); };
    if (d == 1) {
        TensorTrain::Core c{Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, a + dx)};
        return TensorTrain({std::move(c)});
    }
    std::vector<TensorTrain::Core> cores(static_cast<std::size_t>(d));
    for (int i = 0; i < 2; ++i) {
        Matrix first(1, 2);
        first << 1.0, a + weight(0) * i;
        cores[0].push_back(first);
        Matrix last(2, 1);
        last << weight(d - 1) * i, 1.0;
        cores[static_cast<std::size_t>(d - 1)].push_back(last);
    }
    for (int k = 1; k + 1 < d; ++k)
        for (int i = 0; i < 2; ++i) {
            Matrix mid(2, 2);
            mid << 1.0, weight(k) * i, 0.0, 1.0;
            cores[static_cast<std::size_t>(k)].push_back(mid);
        }
    return TensorTrain(std::move(cores));
}

/// Embed a train living on one dimension's quantics block into the full
/// product grid: the result evaluates as `tt` on that block and is constant 1
/// along every other dimension.
inline TensorTrain lift_to_product(const TensorTrain& tt, std::size_t dim_index,
                                   const ProductGrid& product) {
    const auto [begin, end] = product.quantics_span(dim_index);
    if (tt.order() != end - begin)
        throw ShapeError("lift_to_product: train order does not match the dimension depth");
    for (std::size_t j = 0; j < tt.order(); ++j)
        if (tt.mode_size(j) != 2)
            throw ShapeError("lift_to_product: expected binary modes");
    std::vector<TensorTrain::Core> cores;
    cores.reserve(product.total_quantics());
    for (std::size_t j = 0; j < product.total_quantics(); ++j) {
        if (j >= begin && j < end) {
            cores.push_back(tt.core(j - begin));
        } else {
            cores.emplace_back(2, Matrix::Ones(1, 1));
        }
    }
    return TensorTrain(std::move(cores));
}

/// Rank-1 uniform distribution with unit mass over the whole product grid.
inline TensorTrain uniform_density(const ProductGrid& product) {
    const std::size_t n = product.total_quantics();
    std::vector<TensorTrain::Core> cores(n, TensorTrain::Core(2, Matrix::Constant(1, 1, 0.5)));
    return TensorTrain(std::move(cores));
}

} // namespace ipa
