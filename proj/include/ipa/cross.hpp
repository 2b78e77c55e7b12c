#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <sstream>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "ipa/errors.hpp"
#include "ipa/tensor_train.hpp"

namespace ipa {

/// Black-box multi-index evaluator.
using Oracle = std::function<double(std::span<const int>)>;

struct CrossConfig {
    double target_tolerance = 1e-10; ///< relative to the largest sampled |f|
    int max_rank = 64;
    int max_sweeps = 64;          ///< directional passes (left-right or right-left)
    int validation_samples = 256; ///< fresh random indices checked at the end
    std::uint64_t random_seed = 0x1234abcd;
    int probe_samples = 64;      ///< fixed probe set for the between-sweep test
    int enrichment_samples = 512; ///< random global pivot search per escalation

    void validate() const {
        if (!(target_tolerance > 0.0))
            throw ConfigError("CrossConfig: target_tolerance must be > 0");
        if (max_rank < 1) throw ConfigError("CrossConfig: max_rank must be >= 1");
        if (max_sweeps < 1) throw ConfigError("CrossConfig: max_sweeps must be >= 1");
        if (validation_samples < 1)
            throw ConfigError("CrossConfig: validation_samples must be >= 1");
    }
};

struct CrossResult {
    TensorTrain tt;
    double validation_error = 0.0; ///< max |tt - f| / max|f| over fresh samples
    bool tolerance_met = true;     ///< validation_error <= 10 * target_tolerance
    bool converged = true;         ///< probe values stabilized before max_sweeps
    std::size_t oracle_evals = 0;  ///< distinct indices evaluated (cache misses)
    std::size_t construction_evals = 0; ///< distinct evals excluding final validation
    std::size_t oracle_requests = 0;
    int sweeps = 0;
    Index max_rank_used = 1;
};

/// Row subset with the spectral-dominance property: every entry of
/// A * inv(A[rows,:]) has magnitude <= 1 + slack. Input must be tall
/// (rows >= cols) with full column rank.
inline std::vector<Index> maxvol(const Matrix& a, double slack = 0.05) {
    const Index n = a.rows(), r = a.cols();
    if (n < r)
        throw ShapeError("maxvol: matrix must have rows >= columns");
    if (r == 0)
        throw ShapeError("maxvol: empty matrix");

    const double rank_tol = 1e-12 * static_cast<double>(std::max(n, r));
    Eigen::ColPivHouseholderQR<Matrix> qr(a.transpose());
    qr.setThreshold(rank_tol);
    if (qr.rank() < r)
        throw DegeneratePivotError("maxvol: input is rank-deficient");

    std::vector<Index> rows(static_cast<std::size_t>(r));
    for (Index k = 0; k < r; ++k) rows[static_cast<std::size_t>(k)] = qr.colsPermutation().indices()(k);
    if (n == r) return rows;

    auto submatrix = [&]() {
        Matrix s(r, r);
        for (Index k = 0; k < r; ++k) s.row(k) = a.row(rows[static_cast<std::size_t>(k)]);
        return s;
    };
    // B = A * inv(A_I), maintained through rank-1 swap updates
    Matrix b = submatrix().transpose().partialPivLu().solve(a.transpose()).transpose();
    if (!b.allFinite())
        throw DegeneratePivotError("maxvol: singular pivot block");

    // Sherman-Morrison swap update: B' = B - B_{:,j} (B_{i,:} - e_j^T) / B_{ij}
    const Index max_swaps = 4 * r + 32;
    for (Index swap = 0; swap < max_swaps; ++swap) {
        Index bi = 0, bj = 0;
        const double mx = b.array().abs().maxCoeff(&bi, &bj);
        if (mx <= 1.0 + slack) break;
        const double pivot = b(bi, bj);
        Eigen::VectorXd col = b.col(bj);
        Eigen::RowVectorXd row = b.row(bi);
        row(bj) -= 1.0;
        b.noalias() -= col * row / pivot;
        rows[static_cast<std::size_t>(bj)] = bi;
    }
    return rows;
}

namespace detail {

struct IndexHash {
    std::size_t operator()(const std::vector<int>& v) const noexcept {
        std::size_t h = 1469598103934665603ull;
        for (int x : v) {
            h ^= static_cast<std::size_t>(x) + 0x9e3779b97f4a7c15ull;
            h *= 1099511628211ull;
        }
        return h;
    }
};

/// Memoizing oracle wrapper; counts distinct evaluations and guards against
/// non-finite values.
class CachedOracle {
public:
    CachedOracle(const Oracle& f, std::vector<int> modes) : f_(f), modes_(std::move(modes)) {}

    double operator()(const std::vector<int>& idx) {
        ++requests_;
        auto it = cache_.find(idx);
        if (it != cache_.end()) return it->second;
        const double v = f_(idx);
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << "cross: oracle returned non-finite value at index (";
            for (std::size_t k = 0; k < idx.size(); ++k) os << (k ? "," : "") << idx[k];
            os << ")";
            throw OverflowError(os.str());
        }
        scale_ = std::max(scale_, std::abs(v));
        cache_.emplace(idx, v);
        return v;
    }

    std::size_t distinct() const { return cache_.size(); }
    std::size_t requests() const { return requests_; }
    double scale() const { return scale_; }
    const std::vector<int>& modes() const { return modes_; }

    /// Fraction of cached values that are negligible against the scale.
    double near_zero_fraction(double floor) const {
        if (cache_.empty()) return 0.0;
        std::size_t zeros = 0;
        for (const auto& [idx, v] : cache_)
            if (std::abs(v) <= floor * scale_) ++zeros;
        return static_cast<double>(zeros) / static_cast<double>(cache_.size());
    }

private:
    const Oracle& f_;
    std::vector<int> modes_;
    std::unordered_map<std::vector<int>, double, IndexHash> cache_;
    std::size_t requests_ = 0;
    double scale_ = 0.0;
};

inline std::vector<int> random_index(std::mt19937_64& rng, std::span<const int> modes) {
    std::vector<int> idx(modes.size());
    for (std::size_t j = 0; j < modes.size(); ++j)
        idx[j] = static_cast<int>(rng() % static_cast<std::uint64_t>(modes[j]));
    return idx;
}

/// Nested pivot sets of a single-site cross: prefixes I_j (left of bond j)
/// and suffixes J_j (right of bond j), bond j = 0..d.
struct PivotSets {
    std::vector<std::vector<std::vector<int>>> left;  // left[j]: prefixes, length j
    std::vector<std::vector<std::vector<int>>> right; // right[j]: suffixes, length d-j
};

} // namespace detail

/// Adaptive cross interpolation of a black-box oracle in TT format.
///
/// Alternating right-left / left-right single-site sweeps with maxvol pivot
/// refresh, on a rank ladder that doubles the bond budget until the sampled
/// error meets the target. All evaluated entries are cached, so oracle_evals
/// counts distinct grid points. Each escalation samples a fresh batch
/// (random plus a deterministic low-discrepancy cursor) and injects the
/// worst-missed indices as pivots; this is what lets the sweep discover
/// needle-like functions (e.g. Boltzmann factors that vanish on most of the
/// grid) that fiber searches alone would miss. A mostly-zero landscape on an
/// enumerable grid is only accepted once the cursor has visited every index.
class CrossInterpolator {
public:
    CrossInterpolator(const Oracle& f, std::span<const int> mode_sizes, const CrossConfig& cfg)
        : cfg_(cfg), modes_(mode_sizes.begin(), mode_sizes.end()),
          oracle_(f, modes_), rng_(cfg.random_seed) {
        cfg_.validate();
        if (modes_.empty())
            throw ShapeError("cross_interpolate: empty mode list");
        d_ = modes_.size();
        bond_cap_.assign(d_ + 1, 1);
        // bond capacity: min(product of modes to the left, to the right), saturated
        std::int64_t lp = 1;
        for (std::size_t j = 0; j <= d_; ++j) {
            bond_cap_[j] = lp;
            if (j < d_) lp = std::min<std::int64_t>(lp * modes_[j], 1 << 20);
        }
        std::int64_t rp = 1;
        for (std::size_t j = d_ + 1; j-- > 0;) {
            bond_cap_[j] = std::min<std::int64_t>(bond_cap_[j], rp);
            if (j > 0) rp = std::min<std::int64_t>(rp * modes_[j - 1], 1 << 20);
        }
        for (auto& c : bond_cap_) c = std::min<std::int64_t>(c, cfg_.max_rank);
        grid_size_ = 1;
        for (int m : modes_) {
            if (grid_size_ > (std::uint64_t(1) << 42) / static_cast<std::uint64_t>(m)) {
                grid_size_ = 0; // too large to ever wrap
                break;
            }
            grid_size_ *= static_cast<std::uint64_t>(m);
        }
    }

    CrossResult build() {
        init_pivots(1);
        for (int i = 0; i < cfg_.probe_samples; ++i)
            probes_.push_back(detail::random_index(rng_, modes_));

        CrossResult res;
        std::vector<double> probe_prev;
        Index target = 1;
        while (res.sweeps < cfg_.max_sweeps) {
            bool stage_stable = false;
            int stage_passes = 0;
            while (res.sweeps + 1 < cfg_.max_sweeps && stage_passes < 8) {
                // refine column sets, then an emitting row pass keeps the
                // pivot chain and the extracted cores mutually consistent
                pass_right_to_left();
                pass_left_to_right_emit();
                res.sweeps += 2;
                ++stage_passes;
                std::vector<double> pv = probe_values();
                if (!probe_prev.empty() && stage_passes >= 2 &&
                    probe_change(probe_prev, pv) <= cfg_.target_tolerance) {
                    probe_prev = std::move(pv);
                    stage_stable = true;
                    break;
                }
                probe_prev = std::move(pv);
            }
            res.converged = stage_stable;

            // stage decision: a fresh sample batch doubles as the
            // convergence check and the global-pivot enrichment pool. A
            // needle-like landscape (mostly negligible values) on a grid
            // small enough to enumerate is not accepted as converged until
            // the deterministic cursor has visited every index; sampling
            // alone can miss an arbitrarily tall spike.
            std::vector<std::pair<double, std::vector<int>>> misses;
            const double err = stage_error(misses);
            const bool covered = !coverage_required() || cursor_wrapped_;
            if (err <= cfg_.target_tolerance && covered) break;
            if (res.sweeps + 1 >= cfg_.max_sweeps) break;
            const std::size_t injected = inject(misses);
            if (target < max_bond_cap()) {
                target = std::min<Index>(target * 2, max_bond_cap());
                grow_pivots(target);
            } else if (injected == 0 && covered) {
                break; // rank saturated and the landscape probed: done
            }
        }

        res.tt = TensorTrain(cores_);
        res.max_rank_used = res.tt.max_rank();
        res.construction_evals = oracle_.distinct();
        res.validation_error = validate();
        res.tolerance_met = res.validation_error <= 10.0 * cfg_.target_tolerance;
        res.oracle_evals = oracle_.distinct();
        res.oracle_requests = oracle_.requests();
        return res;
    }

private:
    Index max_bond_cap() const {
        std::int64_t c = 1;
        for (std::size_t j = 1; j < d_; ++j) c = std::max(c, bond_cap_[j]);
        return static_cast<Index>(c);
    }

    bool coverage_required() const {
        return grid_size_ > 0 && grid_size_ <= (std::uint64_t(1) << 18) &&
               oracle_.near_zero_fraction(1e-9) > 0.5;
    }

    void init_pivots(Index r) {
        piv_.left.assign(d_ + 1, {});
        piv_.right.assign(d_ + 1, {});
        piv_.left[0] = {{}};
        piv_.right[d_] = {{}};
        for (std::size_t j = 1; j < d_; ++j) {
            const Index want = std::min<Index>(r, bond_cap_[j]);
            add_random_pivots(j, want);
        }
    }

    void add_random_pivots(std::size_t bond, Index want) {
        auto& lset = piv_.left[bond];
        auto& rset = piv_.right[bond];
        int guard = 0;
        while ((static_cast<Index>(lset.size()) < want ||
                static_cast<Index>(rset.size()) < want) &&
               guard++ < 64 * want) {
            std::vector<int> idx = detail::random_index(rng_, modes_);
            insert_pivot_at(bond, idx);
        }
    }

    // split idx into (prefix of length bond, suffix of length d-bond) and add
    bool insert_pivot_at(std::size_t bond, const std::vector<int>& idx) {
        std::vector<int> pre(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(bond));
        std::vector<int> suf(idx.begin() + static_cast<std::ptrdiff_t>(bond), idx.end());
        auto& lset = piv_.left[bond];
        auto& rset = piv_.right[bond];
        bool added = false;
        if (static_cast<Index>(lset.size()) < bond_cap_[bond] &&
            std::find(lset.begin(), lset.end(), pre) == lset.end()) {
            lset.push_back(std::move(pre));
            added = true;
        }
        if (static_cast<Index>(rset.size()) < bond_cap_[bond] &&
            std::find(rset.begin(), rset.end(), suf) == rset.end()) {
            rset.push_back(std::move(suf));
            added = true;
        }
        return added;
    }

    void grow_pivots(Index target) {
        for (std::size_t j = 1; j < d_; ++j)
            add_random_pivots(j, std::min<Index>(target, bond_cap_[j]));
    }

    /// Next index of a deterministic low-discrepancy enumeration (digit
    /// reversal of a running counter). On grids small enough to exhaust, the
    /// cursor eventually visits every index, which makes needle discovery
    /// deterministic rather than a sampling gamble.
    std::vector<int> next_sequential_index() {
        std::vector<int> idx(d_, 0);
        std::uint64_t c = seq_cursor_++;
        for (std::size_t j = 0; j < d_ && c > 0; ++j) {
            idx[j] = static_cast<int>(c % static_cast<std::uint64_t>(modes_[j]));
            c /= static_cast<std::uint64_t>(modes_[j]);
        }
        if (grid_size_ > 0 && seq_cursor_ >= grid_size_) {
            cursor_wrapped_ = true;
            seq_cursor_ = 0;
        }
        return idx;
    }

    /// Sample a fresh batch (random + low-discrepancy + probes) and return
    /// the largest relative deviation; the worst-missed indices are collected
    /// for pivot injection. The injection is what lets the sweep discover
    /// needles that fiber searches alone would miss.
    double stage_error(std::vector<std::pair<double, std::vector<int>>>& misses) {
        // when full coverage is needed, size the sequential batch so the
        // grid wraps within a moderate number of stages
        std::uint64_t seq_batch = static_cast<std::uint64_t>(cfg_.enrichment_samples);
        if (coverage_required())
            seq_batch = std::min<std::uint64_t>(grid_size_, std::max(seq_batch, grid_size_ / 16));
        std::vector<std::vector<int>> pts;
        pts.reserve(static_cast<std::size_t>(cfg_.enrichment_samples) + seq_batch +
                    probes_.size());
        for (int s = 0; s < cfg_.enrichment_samples; ++s)
            pts.push_back(detail::random_index(rng_, modes_));
        for (std::uint64_t s = 0; s < seq_batch && !cursor_wrapped_; ++s)
            pts.push_back(next_sequential_index());
        for (const auto& p : probes_) pts.push_back(p);
        for (auto& p : pts) oracle_(p); // settle the scale first
        const double scale = std::max(oracle_.scale(), 1e-300);
        double maxerr = 0.0;
        for (auto& p : pts) {
            const double fv = oracle_(p);
            const double dev = std::abs(fv - eval_cores(p));
            maxerr = std::max(maxerr, dev / scale);
            const double rel = dev / std::max(scale, std::abs(fv));
            if (rel > cfg_.target_tolerance) misses.emplace_back(rel, std::move(p));
        }
        return maxerr;
    }

    std::size_t inject(std::vector<std::pair<double, std::vector<int>>>& misses) {
        std::sort(misses.begin(), misses.end(),
                  [](const auto& x, const auto& y) { return x.first > y.first; });
        std::size_t injected = 0;
        for (std::size_t t = 0; t < misses.size() && injected < 8; ++t) {
            bool any = false;
            for (std::size_t j = 1; j < d_; ++j)
                any = insert_pivot_at(j, misses[t].second) || any;
            if (any) ++injected;
        }
        return injected;
    }

    Matrix supercore(std::size_t site) {
        const auto& lset = piv_.left[site];
        const auto& rset = piv_.right[site + 1];
        const Index rl = static_cast<Index>(lset.size());
        const Index rr = static_cast<Index>(rset.size());
        const int m = modes_[site];
        Matrix c(rl * m, rr);
        std::vector<int> idx(d_);
        for (Index p = 0; p < rl; ++p) {
            const auto& pre = lset[static_cast<std::size_t>(p)];
            std::copy(pre.begin(), pre.end(), idx.begin());
            for (int i = 0; i < m; ++i) {
                idx[site] = i;
                for (Index q = 0; q < rr; ++q) {
                    const auto& suf = rset[static_cast<std::size_t>(q)];
                    std::copy(suf.begin(), suf.end(),
                              idx.begin() + static_cast<std::ptrdiff_t>(site) + 1);
                    c(p * m + i, q) = oracle_(idx);
                }
            }
        }
        return c;
    }

    // orthonormal column basis with numerical-rank reveal
    static Matrix rank_revealing_basis(const Matrix& c, Index max_keep) {
        Eigen::BDCSVD<Matrix> svd(c, Eigen::ComputeThinU);
        const auto& sv = svd.singularValues();
        const double cut = sv.size() ? sv(0) * 1e-13 : 0.0;
        Index keep = 0;
        for (Index k = 0; k < sv.size(); ++k)
            if (sv(k) > cut) keep = k + 1;
        keep = std::max<Index>(1, std::min(keep, max_keep));
        return svd.matrixU().leftCols(keep);
    }

    /// Refine the suffix sets from the current prefixes.
    void pass_right_to_left() {
        for (std::size_t site = d_; site-- > 1;) {
            Matrix c = supercore(site); // (rl*m) x rr
            if (c.norm() == 0.0) continue;
            const Index rl = static_cast<Index>(piv_.left[site].size());
            const Index rr = static_cast<Index>(piv_.right[site + 1].size());
            const int m = modes_[site];
            // view as rl x (m*rr): transpose-unfold, with (i, suffix) columns
            Matrix ct(m * rr, rl);
            for (Index p = 0; p < rl; ++p)
                for (int i = 0; i < m; ++i)
                    for (Index q = 0; q < rr; ++q)
                        ct(static_cast<Index>(i) * rr + q, p) = c(p * m + i, q);
            Matrix qb = rank_revealing_basis(ct, bond_cap_[site]);
            std::vector<Index> rows = maxvol(qb);
            const auto& rset = piv_.right[site + 1];
            std::vector<std::vector<int>> new_right;
            new_right.reserve(rows.size());
            for (Index r : rows) {
                const int i = static_cast<int>(r / rr);
                const Index q = r % rr;
                std::vector<int> suf;
                suf.reserve(d_ - site);
                suf.push_back(i);
                const auto& tail = rset[static_cast<std::size_t>(q)];
                suf.insert(suf.end(), tail.begin(), tail.end());
                new_right.push_back(std::move(suf));
            }
            piv_.right[site] = std::move(new_right);
        }
    }

    /// Refresh the prefix sets and emit the interpolant cores in the same
    /// pass. Cores are built from the orthonormal supercore basis as
    /// Q inv(Q[rows,:]) — algebraically the skeleton C inv(M) with the cross
    /// matrix M = f[I x J], but conditioned by maxvol on Q instead of by the
    /// (often steeply graded) singular spectrum of the function itself.
    void pass_left_to_right_emit() {
        cores_.assign(d_, {});
        for (std::size_t site = 0; site < d_; ++site) {
            Matrix c = supercore(site);
            const Index rl = static_cast<Index>(piv_.left[site].size());
            const int m = modes_[site];
            Matrix core;
            if (site + 1 == d_) {
                core = c; // raw values close the chain
            } else if (c.norm() == 0.0) {
                // nothing sampled here is nonzero: emit a zero column and a
                // placeholder pivot to keep the chain shapes consistent
                core = Matrix::Zero(c.rows(), 1);
                std::vector<int> pre = piv_.left[site][0];
                pre.push_back(0);
                piv_.left[site + 1] = {std::move(pre)};
            } else {
                Matrix q = rank_revealing_basis(c, bond_cap_[site + 1]);
                const std::vector<Index> rows = maxvol(q);
                Matrix qr(q.cols(), q.cols());
                for (Index k = 0; k < static_cast<Index>(rows.size()); ++k)
                    qr.row(k) = q.row(rows[static_cast<std::size_t>(k)]);
                core = qr.transpose()
                           .partialPivLu()
                           .solve(q.transpose())
                           .transpose(); // Q inv(Q_rows)
                const auto& lset = piv_.left[site];
                std::vector<std::vector<int>> new_left;
                new_left.reserve(rows.size());
                for (Index r : rows) {
                    std::vector<int> pre = lset[static_cast<std::size_t>(r / m)];
                    pre.push_back(static_cast<int>(r % m));
                    new_left.push_back(std::move(pre));
                }
                piv_.left[site + 1] = std::move(new_left);
            }
            cores_[site].resize(static_cast<std::size_t>(m));
            for (int i = 0; i < m; ++i) {
                Matrix slice(rl, core.cols());
                for (Index p = 0; p < rl; ++p) slice.row(p) = core.row(p * m + i);
                cores_[site][static_cast<std::size_t>(i)] = std::move(slice);
            }
        }
    }

    double eval_cores(std::span<const int> idx) const {
        Eigen::RowVectorXd v = Eigen::RowVectorXd::Ones(1);
        for (std::size_t j = 0; j < d_; ++j)
            v = v * cores_[j][static_cast<std::size_t>(idx[j])];
        return v(0);
    }

    std::vector<double> probe_values() {
        std::vector<double> out;
        out.reserve(probes_.size());
        for (const auto& p : probes_) out.push_back(eval_cores(p));
        return out;
    }

    double probe_change(const std::vector<double>& a, const std::vector<double>& b) const {
        const double scale = std::max(oracle_.scale(), 1e-300);
        double mx = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i)
            mx = std::max(mx, std::abs(a[i] - b[i]) / scale);
        return mx;
    }

    double sampled_error(const std::vector<std::vector<int>>& pts) {
        const double scale = std::max(oracle_.scale(), 1e-300);
        double mx = 0.0;
        for (const auto& p : pts)
            mx = std::max(mx, std::abs(oracle_(p) - eval_cores(p)) / scale);
        return mx;
    }

    double validate() {
        std::vector<std::vector<int>> pts;
        pts.reserve(static_cast<std::size_t>(cfg_.validation_samples));
        for (int i = 0; i < cfg_.validation_samples; ++i)
            pts.push_back(detail::random_index(rng_, modes_));
        return sampled_error(pts);
    }

    CrossConfig cfg_;
    std::vector<int> modes_;
    detail::CachedOracle oracle_;
    std::mt19937_64 rng_;
    std::size_t d_ = 0;
    std::vector<std::int64_t> bond_cap_;
    detail::PivotSets piv_;
    std::vector<std::vector<int>> probes_;
    std::vector<TensorTrain::Core> cores_;
    std::uint64_t seq_cursor_ = 0;
    std::uint64_t grid_size_ = 0; ///< 0 when too large to enumerate
    bool cursor_wrapped_ = false;
};

inline CrossResult cross_interpolate(const Oracle& f, std::span<const int> mode_sizes,
                                     const CrossConfig& cfg) {
    return CrossInterpolator(f, mode_sizes, cfg).build();
}

inline CrossResult cross_interpolate(const Oracle& f, const std::vector<int>& mode_sizes,
                                     const CrossConfig& cfg) {
    return cross_interpolate(f, std::span<const int>(mode_sizes), cfg);
}

/// Cross interpolation of g applied elementwise to an existing train, using
/// the composite oracle i -> g(tt(i)).
inline CrossResult elementwise_map(const TensorTrain& tt, const std::function<double(double)>& g,
                                   const CrossConfig& cfg) {
    const auto modes = tt.mode_sizes();
    Oracle f = [&tt, &g](std::span<const int> idx) { return g(tt.eval(idx)); };
    return cross_interpolate(f, modes, cfg);
}

} // namespace ipa
