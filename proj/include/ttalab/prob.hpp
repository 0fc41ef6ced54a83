#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "ttalab/matrix.hpp"

namespace ttalab {

// Row-wise softmax with max-shift. Errors on non-finite input.
inline Matrix softmax(const Matrix& logits) {
    if (!logits.all_finite()) {
        throw std::invalid_argument("softmax: non-finite input");
    }
    Matrix p(logits.rows(), logits.cols());
    for (int i = 0; i < logits.rows(); ++i) {
        double mx = logits(i, 0);
        for (int j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
        double z = 0.0;
        for (int j = 0; j < logits.cols(); ++j) {
            const double e = std::exp(logits(i, j) - mx);
            p(i, j) = e;
            z += e;
        }
        for (int j = 0; j < logits.cols(); ++j) p(i, j) /= z;
    }
    return p;
}

// H(p) = -sum p ln p with 0 ln 0 := 0. No input validation; callers that
// accept external data should use entropy_rows.
inline double entropy_of(std::span<const double> p) noexcept {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

// Per-row entropies. Each row must be a probability vector: nonnegative and
// summing to 1 within 1e-6.
inline std::vector<double> entropy_rows(const Matrix& probs) {
    std::vector<double> h(static_cast<std::size_t>(probs.rows()));
    for (int i = 0; i < probs.rows(); ++i) {
        double s = 0.0;
        for (int j = 0; j < probs.cols(); ++j) {
            const double v = probs(i, j);
            if (!(v >= 0.0)) {
                throw std::invalid_argument("entropy_rows: negative or NaN entry");
            }
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-6) {
            throw std::invalid_argument("entropy_rows: row does not sum to 1");
        }
        h[static_cast<std::size_t>(i)] = entropy_of(probs.row(i));
    }
    return h;
}

// cos(a, b) in [-1, 1]; errors on a zero vector.
inline double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) {
        throw std::invalid_argument("cosine: zero vector");
    }
    double c = dot(a, b) / (na * nb);
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    return c;
}

// Ties broken by lowest index.
inline int argmax_row(const Matrix& m, int r) noexcept {
    int best = 0;
    for (int j = 1; j < m.cols(); ++j) {
        if (m(r, j) > m(r, best)) best = j;
    }
    return best;
}

inline double accuracy(const Matrix& probs, std::span<const int> labels) {
    require(static_cast<std::size_t>(probs.rows()) == labels.size(), "accuracy: label count mismatch");
    if (labels.empty()) return 0.0;
    int hit = 0;
    for (int i = 0; i < probs.rows(); ++i) {
        if (argmax_row(probs, i) == labels[static_cast<std::size_t>(i)]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(labels.size());
}

inline Matrix one_hot(std::span<const int> labels, int classes) {
    Matrix t(static_cast<int>(labels.size()), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int c = labels[i];
        require(c >= 0 && c < classes, "one_hot: label out of range");
        t(static_cast<int>(i), c) = 1.0;
    }
    return t;
}

}  // namespace ttalab
