#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ttalab/matrix.hpp"
#include "ttalab/rng.hpp"

namespace ttalab {

enum class MmdEstimator { Biased, Unbiased };

/// Configuration of the kernel two-sample similarity pipeline.
struct MmdConfig {
    /// sigma_sq <= 0 selects the median heuristic; otherwise a fixed RBF
    /// bandwidth sigma^2 is used.
    double sigma_sq = 0.0;
    MmdEstimator estimator = MmdEstimator::Biased;
    /// Each side is deterministically subsampled to at most this many rows.
    int max_samples = 2000;

    void validate() const {
        require(max_samples >= 2, "MmdConfig: max_samples must be >= 2");
    }
};

struct SimilarityResult {
    double mmd2_raw = 0.0;   // estimator value before clamping
    double mmd = 0.0;        // sqrt(max(mmd2_raw, 0))
    double similarity = 0.0; // exp(-mmd), in (0, 1]
    double sigma_sq = 0.0;   // bandwidth actually used
    int m = 0, n = 0;        // sample counts after subsampling
};

namespace detail {

inline Matrix subsample(const Matrix& x, int cap, Rng rng) {
    if (x.rows() <= cap) return x;
    std::vector<int> idx(static_cast<std::size_t>(x.rows()));
    for (int i = 0; i < x.rows(); ++i) idx[static_cast<std::size_t>(i)] = i;
    rng.shuffle(idx);
    Matrix out(cap, x.cols());
    for (int i = 0; i < cap; ++i) {
        for (int j = 0; j < x.cols(); ++j) out(i, j) = x(idx[static_cast<std::size_t>(i)], j);
    }
    return out;
}

inline double rbf(std::span<const double> a, std::span<const double> b, double sigma_sq) {
    return std::exp(-sq_distance(a, b) / (2.0 * sigma_sq));
}

}  // namespace detail

/// Median heuristic: sigma^2 = median of squared pairwise Euclidean distances
/// over the pooled sample. Errors when every pooled point coincides (the
/// bandwidth would be zero).
inline double median_bandwidth(const Matrix& x, const Matrix& y) {
    require(x.cols() == y.cols(), "median_bandwidth: feature width mismatch");
    const int total = x.rows() + y.rows();
    require(total >= 2, "median_bandwidth: need at least two pooled points");
    auto point = [&](int i) {
        return i < x.rows() ? x.row(i) : y.row(i - x.rows());
    };
    std::vector<double> d2;
    d2.reserve(static_cast<std::size_t>(total) * (total - 1) / 2);
    for (int i = 0; i < total; ++i) {
        for (int j = i + 1; j < total; ++j) {
            d2.push_back(sq_distance(point(i), point(j)));
        }
    }
    const std::size_t mid = d2.size() / 2;
    std::nth_element(d2.begin(), d2.begin() + static_cast<long>(mid), d2.end());
    const double med = d2[mid];
    if (med <= 0.0) throw std::invalid_argument("median_bandwidth: all pooled points identical");
    return med;
}

/// Empirical MMD^2 with the Gaussian RBF kernel:
///   MMD^2 = E[k(x,x')] + E[k(y,y')] - 2 E[k(x,y)].
/// The biased estimator averages over all pairs including the diagonal and is
/// guaranteed nonnegative; the unbiased one excludes the diagonal in the
/// within-set terms and may dip below zero.
inline double mmd_squared(const Matrix& x, const Matrix& y, const MmdConfig& cfg,
                          double* sigma_used = nullptr, Rng rng = Rng(0x5EEDF00D)) {
    cfg.validate();
    require(x.cols() == y.cols(), "mmd_squared: feature width mismatch");
    // one shared permutation keeps identical inputs identical after capping
    const Matrix xs = detail::subsample(x, cfg.max_samples, rng.split(1));
    const Matrix ys = detail::subsample(y, cfg.max_samples, rng.split(1));
    const int m = xs.rows();
    const int n = ys.rows();
    require(m >= 2 && n >= 2, "mmd_squared: need at least two samples per side");

    const double sigma_sq = cfg.sigma_sq > 0.0 ? cfg.sigma_sq : median_bandwidth(xs, ys);
    if (sigma_used) *sigma_used = sigma_sq;

    double kxx = 0.0, kyy = 0.0, kxy = 0.0;
    if (cfg.estimator == MmdEstimator::Biased) {
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) kxx += detail::rbf(xs.row(i), xs.row(j), sigma_sq);
        }
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) kyy += detail::rbf(ys.row(i), ys.row(j), sigma_sq);
        }
        kxx /= static_cast<double>(m) * m;
        kyy /= static_cast<double>(n) * n;
    } else {
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) {
                if (i != j) kxx += detail::rbf(xs.row(i), xs.row(j), sigma_sq);
            }
        }
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (i != j) kyy += detail::rbf(ys.row(i), ys.row(j), sigma_sq);
            }
        }
        kxx /= static_cast<double>(m) * (m - 1);
        kyy /= static_cast<double>(n) * (n - 1);
    }
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) kxy += detail::rbf(xs.row(i), ys.row(j), sigma_sq);
    }
    kxy /= static_cast<double>(m) * n;
    return kxx + kyy - 2.0 * kxy;
}

/// S = exp(-MMD) with MMD = sqrt(max(MMD^2, 0)). Identical inputs give
/// S = 1 exactly; the raw estimator value is retained in the result.
inline SimilarityResult similarity_score(const Matrix& x, const Matrix& y, const MmdConfig& cfg,
                                         Rng rng = Rng(0x5EEDF00D)) {
    SimilarityResult r;
    r.mmd2_raw = mmd_squared(x, y, cfg, &r.sigma_sq, rng);
    r.mmd = std::sqrt(std::max(r.mmd2_raw, 0.0));
    r.similarity = std::exp(-r.mmd);
    r.m = std::min(x.rows(), cfg.max_samples);
    r.n = std::min(y.rows(), cfg.max_samples);
    return r;
}

}  // namespace ttalab
