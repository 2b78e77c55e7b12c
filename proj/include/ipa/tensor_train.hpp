#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ipa/errors.hpp"

namespace ipa {

using Eigen::Index;
using Matrix = Eigen::MatrixXd;

/// Truncation policy for SVD-based rank rounding.
struct RoundingPolicy {
    double relative_tolerance = 1e-10; ///< Frobenius-norm relative budget
    Index max_rank = 64;               ///< hard cap on every internal rank

    static constexpr Index unbounded = std::numeric_limits<Index>::max();

    void validate() const {
        if (relative_tolerance < 0.0)
            throw ConfigError("RoundingPolicy: relative_tolerance must be >= 0");
        if (max_rank < 1)
            throw ConfigError("RoundingPolicy: max_rank must be >= 1");
    }
};

/// Tensor train: a chain of order-3 cores A_j with shapes (r_{j-1}, m_j, r_j)
/// and boundary ranks r_0 = r_d = 1. A core is stored as one matrix per mode
/// index, so A_j fixed at i_j is the (r_{j-1} x r_j) slice cores[j][i_j], and
/// evaluating the train at a multi-index is the product of the selected
/// slices. Values are immutable after construction; all operations below are
/// pure functions returning new trains.
class TensorTrain {
public:
    /// One order-3 core: slices[i] is the (left_rank x right_rank) matrix at
    /// mode index i.
    using Core = std::vector<Matrix>;

    TensorTrain() = default;

    explicit TensorTrain(std::vector<Core> cores) : cores_(std::move(cores)) {
        if (cores_.empty())
            throw ShapeError("TensorTrain: at least one core required");
        for (std::size_t j = 0; j < cores_.size(); ++j) {
            const Core& c = cores_[j];
            if (c.empty())
                throw ShapeError("TensorTrain: empty mode at core " + std::to_string(j));
            for (const Matrix& s : c)
                if (s.rows() != c[0].rows() || s.cols() != c[0].cols())
                    throw ShapeError("TensorTrain: ragged slices at core " + std::to_string(j));
            if (j > 0 && cores_[j - 1][0].cols() != c[0].rows())
                throw ShapeError("TensorTrain: rank chain broken at bond " + std::to_string(j));
        }
        if (cores_.front()[0].rows() != 1 || cores_.back()[0].cols() != 1)
            throw ShapeError("TensorTrain: boundary ranks must be 1");
    }

    std::size_t order() const { return cores_.size(); }

    int mode_size(std::size_t j) const { return static_cast<int>(cores_[j].size()); }

    std::vector<int> mode_sizes() const {
        std::vector<int> m(order());
        for (std::size_t j = 0; j < order(); ++j) m[j] = mode_size(j);
        return m;
    }

    /// Rank of bond j (0..order); r_0 = r_order = 1.
    Index rank(std::size_t bond) const {
        return bond == 0 ? cores_.front()[0].rows() : cores_[bond - 1][0].cols();
    }

    std::vector<Index> ranks() const {
        std::vector<Index> r(order() + 1);
        for (std::size_t b = 0; b <= order(); ++b) r[b] = rank(b);
        return r;
    }

    Index max_rank() const {
        Index r = 1;
        for (std::size_t b = 1; b < order(); ++b) r = std::max(r, rank(b));
        return r;
    }

    const Core& core(std::size_t j) const { return cores_[j]; }
    Core& core(std::size_t j) { return cores_[j]; }

    /// Contract the matrix product at a fixed multi-index.
    double eval(std::span<const int> index) const {
        if (index.size() != order())
            throw IndexError("eval: index length " + std::to_string(index.size()) +
                             " does not match order " + std::to_string(order()));
        Eigen::RowVectorXd v = Eigen::RowVectorXd::Ones(1);
        for (std::size_t j = 0; j < order(); ++j) {
            const int i = index[j];
            if (i < 0 || i >= mode_size(j))
                throw IndexError("eval: index " + std::to_string(i) + " out of range at mode " +
                                 std::to_string(j));
            v = v * cores_[j][static_cast<std::size_t>(i)];
        }
        return v(0);
    }

private:
    std::vector<Core> cores_;
};

/// Rank-1 train evaluating to `value` at every multi-index. The magnitude is
/// spread as |value|^(1/d) per core, sign on the first core, to keep slice
/// magnitudes balanced for long chains.
inline TensorTrain constant_tt(std::span<const int> mode_sizes, double value) {
    if (mode_sizes.empty())
        throw ShapeError("constant_tt: mode_sizes must be non-empty");
    const double d = static_cast<double>(mode_sizes.size());
    const double mag = std::pow(std::abs(value), 1.0 / d);
    std::vector<TensorTrain::Core> cores;
    cores.reserve(mode_sizes.size());
    for (std::size_t j = 0; j < mode_sizes.size(); ++j) {
        if (mode_sizes[j] < 1)
            throw ShapeError("constant_tt: mode size must be >= 1");
        const double s = (j == 0 && value < 0.0) ? -mag : mag;
        cores.emplace_back(static_cast<std::size_t>(mode_sizes[j]), Matrix::Constant(1, 1, s));
    }
    return TensorTrain(std::move(cores));
}

inline TensorTrain constant_tt(const std::vector<int>& mode_sizes, double value) {
    return constant_tt(std::span<const int>(mode_sizes), value);
}

namespace detail {

inline void check_same_modes(const TensorTrain& a, const TensorTrain& b, const char* op) {
    if (a.order() != b.order())
        throw ShapeError(std::string(op) + ": order mismatch");
    for (std::size_t j = 0; j < a.order(); ++j)
        if (a.mode_size(j) != b.mode_size(j))
            throw ShapeError(std::string(op) + ": mode size mismatch at mode " + std::to_string(j));
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index k = 0; k < a.cols(); ++k)
            out.block(i * b.rows(), k * b.cols(), b.rows(), b.cols()) = a(i, k) * b;
    return out;
}

inline std::int64_t checked_total_size(std::span<const int> shape, std::int64_t cap) {
    std::int64_t total = 1;
    for (int m : shape) {
        if (m < 1) throw ShapeError("shape: mode size must be >= 1");
        if (total > cap / m + 1) return cap + 1;
        total *= m;
        if (total > cap) return cap + 1;
    }
    return total;
}

} // namespace detail

/// Elementwise product: eval(result, i) == eval(a, i) * eval(b, i). Internal
/// ranks are the products of the operand ranks (Kronecker product per slice).
inline TensorTrain hadamard(const TensorTrain& a, const TensorTrain& b) {
    detail::check_same_modes(a, b, "hadamard");
    std::vector<TensorTrain::Core> cores(a.order());
    for (std::size_t j = 0; j < a.order(); ++j) {
        cores[j].reserve(static_cast<std::size_t>(a.mode_size(j)));
        for (int i = 0; i < a.mode_size(j); ++i)
            cores[j].push_back(detail::kron(a.core(j)[static_cast<std::size_t>(i)],
                                            b.core(j)[static_cast<std::size_t>(i)]));
    }
    return TensorTrain(std::move(cores));
}

/// Multiply every entry by `factor`, spread as |factor|^(1/d) per core.
inline TensorTrain scale(const TensorTrain& tt, double factor) {
    if (!std::isfinite(factor))
        throw OverflowError("scale: factor must be finite");
    const double mag = std::pow(std::abs(factor), 1.0 / static_cast<double>(tt.order()));
    std::vector<TensorTrain::Core> cores;
    cores.reserve(tt.order());
    for (std::size_t j = 0; j < tt.order(); ++j) {
        const double s = (j == 0 && factor < 0.0) ? -mag : mag;
        TensorTrain::Core c = tt.core(j);
        for (Matrix& m : c) m *= s;
        cores.push_back(std::move(c));
    }
    return TensorTrain(std::move(cores));
}

/// Sum of all entries, computed by contracting each core with an all-ones
/// mode vector. Equals the L1 norm when the train is elementwise nonnegative
/// (which the caller asserts; see the sampling check in the engine).
inline double sum_entries(const TensorTrain& tt) {
    Eigen::RowVectorXd v = Eigen::RowVectorXd::Ones(1);
    for (std::size_t j = 0; j < tt.order(); ++j) {
        Matrix t = Matrix::Zero(tt.rank(j), tt.rank(j + 1));
        for (const Matrix& s : tt.core(j)) t += s;
        v = v * t;
    }
    const double r = v(0);
    if (!std::isfinite(r))
        throw OverflowError("sum_entries: non-finite contraction");
    return r;
}

/// <a, b> = sum_i eval(a,i) * eval(b,i).
inline double inner_product(const TensorTrain& a, const TensorTrain& b) {
    detail::check_same_modes(a, b, "inner_product");
    Matrix env = Matrix::Ones(1, 1); // rank_a x rank_b environment
    for (std::size_t j = 0; j < a.order(); ++j) {
        Matrix next = Matrix::Zero(a.rank(j + 1), b.rank(j + 1));
        for (int i = 0; i < a.mode_size(j); ++i) {
            const Matrix& as = a.core(j)[static_cast<std::size_t>(i)];
            const Matrix& bs = b.core(j)[static_cast<std::size_t>(i)];
            next.noalias() += as.transpose() * env * bs;
        }
        env = std::move(next);
    }
    const double r = env(0, 0);
    if (!std::isfinite(r))
        throw OverflowError("inner_product: non-finite contraction");
    return r;
}

/// sqrt(<tt, tt>) with tiny negatives clamped to zero.
inline double frobenius_norm(const TensorTrain& tt) {
    return std::sqrt(std::max(0.0, inner_product(tt, tt)));
}

namespace detail {

// Rank to keep so the discarded singular-value tail stays below `budget` in
// Frobenius norm; always keeps at least one.
inline Index truncation_rank(const Eigen::VectorXd& sv, double budget, Index max_rank) {
    Index keep = sv.size();
    double tail = 0.0;
    while (keep > 1) {
        const double s = sv(keep - 1);
        if (std::sqrt(tail + s * s) > budget) break;
        tail += s * s;
        --keep;
    }
    return std::min(keep, std::max<Index>(1, max_rank));
}

} // namespace detail

/// SVD rounding: left-to-right QR orthogonalization followed by a
/// right-to-left truncated-SVD sweep. The discarded weight per bond is capped
/// at tol * ||tt||_F / sqrt(d-1), which bounds the total relative Frobenius
/// error by tol.
inline TensorTrain truncate(const TensorTrain& tt, const RoundingPolicy& policy) {
    policy.validate();
    const std::size_t d = tt.order();
    if (d == 1) return tt;

    std::vector<TensorTrain::Core> cores;
    cores.reserve(d);
    for (std::size_t j = 0; j < d; ++j) cores.push_back(tt.core(j));

    auto left_rank = [&](std::size_t j) { return cores[j][0].rows(); };
    auto right_rank = [&](std::size_t j) { return cores[j][0].cols(); };
    auto msize = [&](std::size_t j) { return static_cast<Index>(cores[j].size()); };

    // left-to-right QR
    for (std::size_t j = 0; j + 1 < d; ++j) {
        const Index rl = left_rank(j), m = msize(j), rr = right_rank(j);
        Matrix unf(rl * m, rr);
        for (Index i = 0; i < m; ++i)
            unf.middleRows(i * rl, rl) = cores[j][static_cast<std::size_t>(i)];
        Eigen::HouseholderQR<Matrix> qr(unf);
        const Index k = std::min(unf.rows(), unf.cols());
        Matrix q = qr.householderQ() * Matrix::Identity(unf.rows(), k);
        Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
        for (Index i = 0; i < m; ++i)
            cores[j][static_cast<std::size_t>(i)] = q.middleRows(i * rl, rl);
        for (Matrix& s : cores[j + 1]) s = (r * s).eval();
    }

    // norm now lives in the last core
    double nrm2 = 0.0;
    for (const Matrix& s : cores[d - 1]) nrm2 += s.squaredNorm();
    const double nrm = std::sqrt(std::max(0.0, nrm2));
    const double budget =
        policy.relative_tolerance * nrm / std::sqrt(static_cast<double>(d - 1));

    // right-to-left truncated SVD
    for (std::size_t j = d - 1; j >= 1; --j) {
        const Index rl = left_rank(j), m = msize(j), rr = right_rank(j);
        Matrix unf(rl, m * rr);
        for (Index i = 0; i < m; ++i)
            unf.middleCols(i * rr, rr) = cores[j][static_cast<std::size_t>(i)];
        Eigen::BDCSVD<Matrix> svd(unf, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Index keep = detail::truncation_rank(svd.singularValues(), budget, policy.max_rank);
        Matrix vt = svd.matrixV().leftCols(keep).transpose();
        Matrix carry =
            svd.matrixU().leftCols(keep) * svd.singularValues().head(keep).asDiagonal();
        for (Index i = 0; i < m; ++i)
            cores[j][static_cast<std::size_t>(i)] = vt.middleCols(i * rr, rr);
        for (Matrix& s : cores[j - 1]) s = (s * carry).eval();
    }
    return TensorTrain(std::move(cores));
}

/// TT-SVD of a dense row-major table. With tolerance 0 the decomposition
/// keeps the full numerical rank and the round trip is exact to machine
/// precision.
inline TensorTrain from_dense(std::span<const double> table, std::span<const int> shape,
                              const RoundingPolicy& policy = {0.0, RoundingPolicy::unbounded}) {
    policy.validate();
    if (shape.empty())
        throw ShapeError("from_dense: shape must have at least one dimension");
    const std::int64_t total = detail::checked_total_size(shape, std::int64_t(1) << 40);
    if (total != static_cast<std::int64_t>(table.size()))
        throw ShapeError("from_dense: table size does not match shape");

    const std::size_t d = shape.size();
    double nrm = 0.0;
    for (double x : table) nrm += x * x;
    nrm = std::sqrt(nrm);
    const double budget = d > 1
        ? policy.relative_tolerance * nrm / std::sqrt(static_cast<double>(d - 1))
        : 0.0;

    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMajor carry = Eigen::Map<const RowMajor>(table.data(), 1, total);

    std::vector<TensorTrain::Core> cores(d);
    Index r = 1;
    std::int64_t rest = total;
    for (std::size_t j = 0; j + 1 < d; ++j) {
        const Index m = shape[j];
        rest /= m;
        Eigen::Map<const RowMajor> unf(carry.data(), r * m, rest);
        Eigen::BDCSVD<Matrix> svd(unf, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Eigen::VectorXd& sv = svd.singularValues();
        Index keep;
        if (policy.relative_tolerance == 0.0) {
            // numerical rank: drop exact-zero tail only
            const double eps = sv.size() > 0
                ? sv(0) * std::numeric_limits<double>::epsilon() *
                      static_cast<double>(std::max<Index>(unf.rows(), unf.cols()))
                : 0.0;
            keep = 1;
            for (Index k = 0; k < sv.size(); ++k)
                if (sv(k) > eps) keep = k + 1;
        } else {
            keep = detail::truncation_rank(sv, budget, RoundingPolicy::unbounded);
        }
        keep = std::min(keep, std::max<Index>(1, policy.max_rank));
        cores[j].resize(static_cast<std::size_t>(m));
        // U rows are grouped (alpha, i) with alpha outer, i inner
        for (Index i = 0; i < m; ++i) {
            Matrix& slice = cores[j][static_cast<std::size_t>(i)];
            slice.resize(r, keep);
            for (Index a = 0; a < r; ++a)
                slice.row(a) = svd.matrixU().row(a * m + i).head(keep);
        }
        RowMajor next = (sv.head(keep).asDiagonal() * svd.matrixV().leftCols(keep).transpose());
        carry = next;
        r = keep;
    }
    const Index mlast = shape[d - 1];
    cores[d - 1].resize(static_cast<std::size_t>(mlast));
    for (Index i = 0; i < mlast; ++i)
        cores[d - 1][static_cast<std::size_t>(i)] = carry.col(i);
    return TensorTrain(std::move(cores));
}

inline TensorTrain from_dense(const std::vector<double>& table, const std::vector<int>& shape,
                              const RoundingPolicy& policy = {0.0, RoundingPolicy::unbounded}) {
    return from_dense(std::span<const double>(table), std::span<const int>(shape), policy);
}

/// Materialize the full table in row-major order. Refuses grids larger than
/// `cap` entries (default 2^22).
inline std::vector<double> to_dense(const TensorTrain& tt,
                                    std::int64_t cap = std::int64_t(1) << 22) {
    const auto shape = tt.mode_sizes();
    const std::int64_t total = detail::checked_total_size(shape, cap);
    if (total > cap)
        throw SizeCapError("to_dense: grid exceeds cap of " + std::to_string(cap) + " entries");

    Matrix cur = Matrix::Ones(1, 1);
    for (std::size_t j = 0; j < tt.order(); ++j) {
        const Index m = tt.mode_size(j), rows = cur.rows(), rr = tt.rank(j + 1);
        Matrix next(rows * m, rr);
        for (Index i = 0; i < m; ++i)
            next.middleRows(i * rows, rows) = cur * tt.core(j)[static_cast<std::size_t>(i)];
        // rows are currently grouped as (i, n); reorder to row-major (n, i)
        Matrix perm(rows * m, rr);
        for (Index n = 0; n < rows; ++n)
            for (Index i = 0; i < m; ++i)
                perm.row(n * m + i) = next.row(i * rows + n);
        cur = std::move(perm);
    }
    return std::vector<double>(cur.data(), cur.data() + total);
}

} // namespace ipa
