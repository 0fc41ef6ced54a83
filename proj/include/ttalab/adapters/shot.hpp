#pragma once

#include <cmath>
#include <vector>

#include "ttalab/adapters/base.hpp"
#include "ttalab/adapters/entropy.hpp"
#include "ttalab/tape.hpp"

namespace ttalab {

namespace detail {

inline double cosine_or_zero(std::span<const double> a, std::span<const double> b) {
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

}  // namespace detail

// Two-round centroid pseudo-labels: centroids from probability-weighted
// feature means, labels by nearest centroid in cosine distance, centroids
// recomputed from the hard assignment, labels reassigned. A class left empty
// in the hard round keeps its weighted-round centroid.
inline std::vector<int> shot_pseudo_labels(const Matrix& features, const Matrix& probs) {
    const int n = features.rows();
    const int d = features.cols();
    const int c = probs.cols();
    require(probs.rows() == n, "shot_pseudo_labels: row count mismatch");

    Matrix centroids(c, d);
    for (int k = 0; k < c; ++k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            const double w = probs(i, k);
            total += w;
            for (int j = 0; j < d; ++j) centroids(k, j) += w * features(i, j);
        }
        if (total > 0.0) {
            for (int j = 0; j < d; ++j) centroids(k, j) /= total;
        }
    }

    auto assign = [&](const Matrix& cents) {
        std::vector<int> labels(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_dist = 1.0 - detail::cosine_or_zero(features.row(i), cents.row(0));
            for (int k = 1; k < c; ++k) {
                const double dist = 1.0 - detail::cosine_or_zero(features.row(i), cents.row(k));
                if (dist < best_dist) {
                    best_dist = dist;
                    best = k;
                }
            }
            labels[static_cast<std::size_t>(i)] = best;
        }
        return labels;
    };

    const std::vector<int> round1 = assign(centroids);

    Matrix hard(c, d);
    std::vector<int> counts(static_cast<std::size_t>(c), 0);
    for (int i = 0; i < n; ++i) {
        const int k = round1[static_cast<std::size_t>(i)];
        counts[static_cast<std::size_t>(k)] += 1;
        for (int j = 0; j < d; ++j) hard(k, j) += features(i, j);
    }
    for (int k = 0; k < c; ++k) {
        if (counts[static_cast<std::size_t>(k)] > 0) {
            for (int j = 0; j < d; ++j) hard(k, j) /= counts[static_cast<std::size_t>(k)];
        } else {
            for (int j = 0; j < d; ++j) hard(k, j) = centroids(k, j);
        }
    }
    return assign(hard);
}

// SHOT: the classifier head stays frozen; the encoder takes one step per
// batch on information maximization plus beta-weighted cross entropy against
// centroid pseudo-labels.
class ShotAdapter final : public Adapter {
public:
    ShotAdapter(Model model, const AdaptConfig& cfg, Rng rng)
        : Adapter(std::move(model), cfg, rng) {}
    std::string_view name() const override { return "shot"; }

protected:
    Matrix step(const Matrix& x) override {
        const int b = x.rows();
        const std::vector<char> mask = model_.group_mask(ParamSelect::EncoderOnly);
        const StatsMode mode = grad_stats_mode();

        Tape tape;
        Forward f = model_.forward(x, mode, &tape, &mask);
        const Matrix probs = softmax(f.logits);
        const std::vector<int> pseudo = shot_pseudo_labels(f.features, probs);

        const std::vector<double> uniform(static_cast<std::size_t>(b), 1.0 / b);
        const ValueId mean_h = tape.weighted_entropy(f.logits_id, uniform);
        const ValueId div_h = tape.entropy_of_mean(f.logits_id);
        const ValueId im = tape.add_scaled(mean_h, div_h, 1.0, -1.0);
        const ValueId ce = tape.soft_cross_entropy(f.logits_id, one_hot(pseudo, model_.classes()),
                                                   uniform);
        const ValueId loss = tape.add_scaled(im, ce, 1.0, cfg_.shot_beta);
        if (!std::isfinite(tape.value(loss)(0, 0))) throw std::runtime_error("non-finite loss");
        tape.backward(loss);
        optimizer_step(model_, tape, f, mask, opt_);

        if (cfg_.predict_after_update) {
            return softmax(model_.forward(x, mode).logits);
        }
        return probs;
    }
};

// SHOT's objective at the current parameters with frozen pseudo-labels, for
// finite-difference verification.
inline double shot_loss_value(Model& m, const Matrix& x, const std::vector<int>& pseudo,
                              double beta, StatsMode mode) {
    Forward f = m.forward(x, mode);
    const Matrix p = softmax(f.logits);
    const int b = x.rows();
    double mean_h = 0.0;
    for (int i = 0; i < b; ++i) mean_h += entropy_of(p.row(i)) / b;
    const Matrix pbar = col_means(p);
    double ce = 0.0;
    for (int i = 0; i < b; ++i) {
        ce -= std::log(std::max(p(i, pseudo[static_cast<std::size_t>(i)]), 1e-300)) / b;
    }
    return mean_h - entropy_of(pbar.row(0)) + beta * ce;
}

}  // namespace ttalab
