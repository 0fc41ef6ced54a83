#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "ttalab/adapters/base.hpp"

namespace ttalab {

// Per-class support sets of (unit-norm feature, prediction entropy) capped at
// a fixed size; prototypes are the mean of the initialization vector and the
// stored supports.
struct T3aState {
    std::vector<std::vector<std::pair<std::vector<double>, double>>> supports;
    std::vector<std::vector<double>> init;   // normalized source head columns
    std::vector<std::vector<double>> proto;  // current prototypes

    void recompute(int cls) {
        std::vector<double>& p = proto[static_cast<std::size_t>(cls)];
        const std::vector<double>& base = init[static_cast<std::size_t>(cls)];
        const auto& sup = supports[static_cast<std::size_t>(cls)];
        for (std::size_t j = 0; j < p.size(); ++j) {
            double s = base[j];
            for (const auto& [z, h] : sup) s += z[j];
            p[j] = s / (1.0 + static_cast<double>(sup.size()));
        }
    }
};

// T3A: parameter-free prototype classifier. Each sample is matched to the
// dynamic class prototypes by dot product; the prototype is the mean of the
// initialization vector and the stored supports, so a class whose support set
// grows incoherent loses score mass on its own. The sample's normalized
// feature joins its provisional class's support set, the highest-entropy
// supports are evicted beyond the cap, and the prediction uses the refreshed
// prototypes. Model parameters are never touched.
//
// Scores live in [-1, 1]; the probability/entropy view divides them by the
// configured temperature so support eviction can separate confident matches
// from ambiguous ones. argmax is unaffected.
class T3aAdapter final : public Adapter {
public:
    T3aAdapter(Model model, const AdaptConfig& cfg, Rng rng)
        : Adapter(std::move(model), cfg, rng) {
        const Matrix& w = model_.head_weights();  // feature_dim x classes
        const int d = w.rows();
        const int c = w.cols();
        state_.supports.resize(static_cast<std::size_t>(c));
        state_.init.resize(static_cast<std::size_t>(c));
        state_.proto.resize(static_cast<std::size_t>(c));
        for (int k = 0; k < c; ++k) {
            std::vector<double> col(static_cast<std::size_t>(d));
            for (int j = 0; j < d; ++j) col[static_cast<std::size_t>(j)] = w(j, k);
            normalize(col);
            state_.init[static_cast<std::size_t>(k)] = col;
            state_.proto[static_cast<std::size_t>(k)] = col;
        }
    }

    std::string_view name() const override { return "t3a"; }

    T3aState& state() noexcept { return state_; }

protected:
    Matrix step(const Matrix& x) override {
        Forward f = model_.forward(x, StatsMode::Eval);
        const int b = x.rows();
        const int c = model_.classes();
        Matrix out(b, c);
        std::vector<double> z(static_cast<std::size_t>(f.features.cols()));
        std::vector<double> scores(static_cast<std::size_t>(c));
        std::vector<double> probs(static_cast<std::size_t>(c));
        for (int i = 0; i < b; ++i) {
            const auto row = f.features.row(i);
            z.assign(row.begin(), row.end());
            normalize(z);

            for (int k = 0; k < c; ++k) scores[static_cast<std::size_t>(k)] = proto_score(z, k);
            int provisional = 0;
            for (int k = 1; k < c; ++k) {
                if (scores[static_cast<std::size_t>(k)] > scores[static_cast<std::size_t>(provisional)]) provisional = k;
            }
            const double h = softmax_entropy(scores, probs);

            // insert-then-evict folded in place: the incoming support either
            // replaces the stored worst or, if it is itself the worst, is
            // dropped (ties evict the stored entry)
            auto& sup = state_.supports[static_cast<std::size_t>(provisional)];
            bool inserted = false;
            if (cfg_.t3a_cap > 0) {
                if (static_cast<int>(sup.size()) < cfg_.t3a_cap) {
                    sup.emplace_back(z, h);
                    inserted = true;
                } else {
                    std::size_t worst = 0;
                    for (std::size_t k = 1; k < sup.size(); ++k) {
                        if (sup[k].second > sup[worst].second) worst = k;
                    }
                    if (!(h > sup[worst].second)) {
                        sup[worst].first.assign(z.begin(), z.end());
                        sup[worst].second = h;
                        inserted = true;
                    }
                }
            }

            if (inserted) {
                // only the provisional class's prototype moved
                state_.recompute(provisional);
                scores[static_cast<std::size_t>(provisional)] = proto_score(z, provisional);
                softmax_into(scores, probs);
            }
            for (int k = 0; k < c; ++k) out(i, k) = probs[static_cast<std::size_t>(k)];
        }
        return out;
    }

private:
    double proto_score(const std::vector<double>& z, int cls) const {
        return dot(z, state_.proto[static_cast<std::size_t>(cls)]) / cfg_.t3a_temperature;
    }

    // max-shifted softmax into `probs`
    static void softmax_into(const std::vector<double>& scores, std::vector<double>& probs) {
        double mx = scores[0];
        for (double s : scores) mx = std::max(mx, s);
        double sum = 0.0;
        for (std::size_t k = 0; k < scores.size(); ++k) {
            probs[k] = std::exp(scores[k] - mx);
            sum += probs[k];
        }
        for (double& p : probs) p /= sum;
    }

    // softmax plus its entropy via H = logsumexp(s) - E_p[s]: one log total
    static double softmax_entropy(const std::vector<double>& scores, std::vector<double>& probs) {
        double mx = scores[0];
        for (double s : scores) mx = std::max(mx, s);
        double sum = 0.0;
        for (std::size_t k = 0; k < scores.size(); ++k) {
            probs[k] = std::exp(scores[k] - mx);
            sum += probs[k];
        }
        double expectation = 0.0;
        for (std::size_t k = 0; k < scores.size(); ++k) {
            probs[k] /= sum;
            expectation += probs[k] * (scores[k] - mx);
        }
        return std::log(sum) - expectation;
    }

    static void normalize(std::vector<double>& v) {
        const double n = l2_norm(v);
        if (n > 0.0) {
            for (double& x : v) x /= n;
        }
    }

    T3aState state_;
};

}  // namespace ttalab
