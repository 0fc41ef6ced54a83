#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "ttalab/adapters/base.hpp"
#include "ttalab/data.hpp"
#include "ttalab/tape.hpp"

namespace ttalab {

// Diagonal empirical Fisher weights per parameter slot (zeros outside the
// selected group), estimated from per-sample cross-entropy gradients on
// source-validation data.
struct FisherInfo {
    std::vector<Matrix> omega;
};

inline FisherInfo compute_fisher(Model& m, const LabeledSet& val, ParamSelect group) {
    require(val.size() >= 1, "compute_fisher: empty validation set");
    const std::vector<char> mask = m.group_mask(group);
    FisherInfo info;
    info.omega.reserve(static_cast<std::size_t>(m.slot_count()));
    for (int s = 0; s < m.slot_count(); ++s) {
        info.omega.emplace_back(m.slot(s).rows(), m.slot(s).cols());
    }
    for (int i = 0; i < val.size(); ++i) {
        Tape tape;
        const Batch row = val.slice(i, i + 1);
        Forward f = m.forward(row.x, StatsMode::Eval, &tape, &mask);
        const ValueId loss = tape.soft_cross_entropy(
            f.logits_id, one_hot(row.observed, m.classes()), {1.0});
        tape.backward(loss);
        for (int s = 0; s < m.slot_count(); ++s) {
            if (!mask[static_cast<std::size_t>(s)]) continue;
            const ValueId id = f.slots[static_cast<std::size_t>(s)];
            if (!tape.has_grad(id)) continue;
            const Matrix& g = tape.grad(id);
            Matrix& o = info.omega[static_cast<std::size_t>(s)];
            for (std::size_t k = 0; k < o.size(); ++k) o.data()[k] += g.data()[k] * g.data()[k];
        }
    }
    for (Matrix& o : info.omega) {
        for (std::size_t k = 0; k < o.size(); ++k) o.data()[k] /= val.size();
    }
    return info;
}

using WeighFn = std::function<std::vector<double>(const Matrix& probs, const std::vector<double>& entropies)>;

struct EntropyStepResult {
    Matrix probs;                  // pre-update predictions
    std::vector<double> entropies; // per-sample H of those predictions
    std::vector<double> weights;   // per-sample loss weights actually used
    bool updated = false;
};

// One optimizer step over every masked slot the backward pass reached.
inline void optimizer_step(Model& m, const Tape& tape, const Forward& f,
                           const std::vector<char>& mask, GradOptimizer& opt) {
    for (int s = 0; s < m.slot_count(); ++s) {
        if (!mask[static_cast<std::size_t>(s)]) continue;
        const ValueId id = f.slots[static_cast<std::size_t>(s)];
        if (!tape.has_grad(id)) continue;
        const Matrix& g = tape.grad(id);
        if (!g.all_finite()) throw std::runtime_error("non-finite gradient");
        opt.apply(m.slot(s), s, g);
    }
}

// Shared gradient kernel of the entropy-minimization family: one update on
// sum_i w_i * H(p_i), optionally plus lambda * sum omega * (theta - anchor)^2.
// TENT passes uniform weights, EATA its admission mask over the batch size,
// SAR the entropy filter; identical weights give bit-identical updates. No
// update (and no optimizer-state advance) happens when every weight is zero.
inline EntropyStepResult weighted_entropy_step(Model& m, const Matrix& x, const WeighFn& weigh,
                                               GradOptimizer& opt, ParamSelect group,
                                               StatsMode mode, const FisherInfo* fisher = nullptr,
                                               double lambda = 0.0,
                                               const std::vector<Matrix>* anchor = nullptr) {
    const std::vector<char> mask = m.group_mask(group);
    Tape tape;
    Forward f = m.forward(x, mode, &tape, &mask);
    EntropyStepResult r;
    r.probs = softmax(f.logits);
    r.entropies = entropy_rows(r.probs);
    r.weights = weigh(r.probs, r.entropies);
    require(r.weights.size() == static_cast<std::size_t>(x.rows()),
            "weighted_entropy_step: weight count mismatch");

    bool any = false;
    for (double w : r.weights) any = any || w != 0.0;
    if (!any) return r;

    const ValueId loss = tape.weighted_entropy(f.logits_id, r.weights);
    if (!std::isfinite(tape.value(loss)(0, 0))) {
        throw std::runtime_error("non-finite entropy loss");
    }
    tape.backward(loss);

    const bool penalize = fisher != nullptr && lambda > 0.0 && anchor != nullptr;
    for (int s = 0; s < m.slot_count(); ++s) {
        if (!mask[static_cast<std::size_t>(s)]) continue;
        const ValueId id = f.slots[static_cast<std::size_t>(s)];
        if (!tape.has_grad(id)) continue;
        Matrix g = tape.grad(id);
        if (penalize) {
            const Matrix& o = fisher->omega[static_cast<std::size_t>(s)];
            const Matrix& a = (*anchor)[static_cast<std::size_t>(s)];
            Matrix& p = m.slot(s);
            for (std::size_t k = 0; k < g.size(); ++k) {
                g.data()[k] += 2.0 * lambda * o.data()[k] * (p.data()[k] - a.data()[k]);
            }
        }
        if (!g.all_finite()) throw std::runtime_error("non-finite gradient");
        opt.apply(m.slot(s), s, g);
    }
    r.updated = true;
    return r;
}

// Loss value of the same objective at the current parameters, for external
// gradient verification against finite differences.
inline double weighted_entropy_loss_value(Model& m, const Matrix& x,
                                          const std::vector<double>& weights, StatsMode mode,
                                          const FisherInfo* fisher = nullptr, double lambda = 0.0,
                                          const std::vector<Matrix>* anchor = nullptr) {
    Forward f = m.forward(x, mode);
    const Matrix p = softmax(f.logits);
    double loss = 0.0;
    for (int i = 0; i < p.rows(); ++i) {
        loss += weights[static_cast<std::size_t>(i)] * entropy_of(p.row(i));
    }
    if (fisher != nullptr && lambda > 0.0 && anchor != nullptr) {
        for (int s = 0; s < m.slot_count(); ++s) {
            const Matrix& o = fisher->omega[static_cast<std::size_t>(s)];
            const Matrix& a = (*anchor)[static_cast<std::size_t>(s)];
            const Matrix& q = m.slot(s);
            for (std::size_t k = 0; k < o.size(); ++k) {
                const double d = q.data()[k] - a.data()[k];
                loss += lambda * o.data()[k] * d * d;
            }
        }
    }
    return loss;
}

// TENT: one entropy-minimization step on the normalization affines per batch,
// predictions from the pre-update forward.
class TentAdapter final : public Adapter {
public:
    TentAdapter(Model model, const AdaptConfig& cfg, Rng rng)
        : Adapter(std::move(model), cfg, rng) {}
    std::string_view name() const override { return "tent"; }

protected:
    Matrix step(const Matrix& x) override {
        const int b = x.rows();
        auto weigh = [b](const Matrix&, const std::vector<double>&) {
            return std::vector<double>(static_cast<std::size_t>(b), 1.0 / b);
        };
        auto r = weighted_entropy_step(model_, x, weigh, opt_, ParamSelect::NormAffineOnly,
                                       grad_stats_mode());
        if (cfg_.predict_after_update && r.updated) {
            return softmax(model_.forward(x, grad_stats_mode()).logits);
        }
        return r.probs;
    }
};

// EATA: entropy filter plus redundancy filter against a moving average
// prediction, with a Fisher-anchored penalty toward the source weights.
class EataAdapter final : public Adapter {
public:
    EataAdapter(Model model, const AdaptConfig& cfg, Rng rng, const FisherInfo* fisher)
        : Adapter(std::move(model), cfg, rng),
          e0_(cfg.e0_factor * std::log(static_cast<double>(model_.classes()))),
          anchor_(model_.snapshot_params()) {
        if (fisher != nullptr) {
            fisher_ = *fisher;
            has_fisher_ = true;
        }
    }
    std::string_view name() const override { return "eata"; }

    const std::vector<double>& moving_average() const noexcept { return pbar_; }

protected:
    Matrix step(const Matrix& x) override {
        const int b = x.rows();
        const double cos_threshold = cfg_.eata_complement ? 1.0 - cfg_.eata_eps : cfg_.eata_eps;
        std::vector<double> weights;
        auto weigh = [&](const Matrix& probs, const std::vector<double>& h) {
            std::vector<double> w(static_cast<std::size_t>(b), 0.0);
            for (int i = 0; i < b; ++i) {
                bool admit = h[static_cast<std::size_t>(i)] < e0_;
                if (admit && pbar_set_) {
                    admit = cosine(probs.row(i), pbar_) < cos_threshold;
                }
                if (admit) w[static_cast<std::size_t>(i)] = 1.0 / b;
            }
            return w;
        };
        auto r = weighted_entropy_step(model_, x, weigh, opt_, ParamSelect::NormAffineOnly,
                                       grad_stats_mode(),
                                       has_fisher_ ? &fisher_ : nullptr, cfg_.eata_lambda,
                                       has_fisher_ ? &anchor_ : nullptr);
        update_moving_average(r);
        if (cfg_.predict_after_update && r.updated) {
            return softmax(model_.forward(x, grad_stats_mode()).logits);
        }
        return r.probs;
    }

private:
    void update_moving_average(const EntropyStepResult& r) {
        std::vector<double> mean(static_cast<std::size_t>(r.probs.cols()), 0.0);
        int admitted = 0;
        for (int i = 0; i < r.probs.rows(); ++i) {
            if (r.weights[static_cast<std::size_t>(i)] == 0.0) continue;
            ++admitted;
            for (int j = 0; j < r.probs.cols(); ++j) mean[static_cast<std::size_t>(j)] += r.probs(i, j);
        }
        if (admitted == 0) return;
        for (double& v : mean) v /= admitted;
        if (!pbar_set_) {
            pbar_ = mean;
            pbar_set_ = true;
        } else {
            const double mom = cfg_.eata_pbar_momentum;
            for (std::size_t j = 0; j < mean.size(); ++j) {
                pbar_[j] = mom * pbar_[j] + (1.0 - mom) * mean[j];
            }
        }
    }

    double e0_;
    std::vector<Matrix> anchor_;
    FisherInfo fisher_;
    bool has_fisher_ = false;
    std::vector<double> pbar_;
    bool pbar_set_ = false;
};

// SAR: sharpness-aware entropy minimization on low-entropy samples. The first
// backward gives the ascent direction; the descent step uses the gradient at
// the perturbed parameters. rho = 0 degenerates to the shared kernel and is
// bit-identical to an entropy-filtered TENT step.
class SarAdapter final : public Adapter {
public:
    SarAdapter(Model model, const AdaptConfig& cfg, Rng rng)
        : Adapter(std::move(model), cfg, rng),
          e0_(cfg.e0_factor * std::log(static_cast<double>(model_.classes()))) {}
    std::string_view name() const override { return "sar"; }

protected:
    Matrix step(const Matrix& x) override {
        const int b = x.rows();
        auto weigh = [&](const Matrix&, const std::vector<double>& h) {
            std::vector<double> w(static_cast<std::size_t>(b), 0.0);
            for (int i = 0; i < b; ++i) {
                if (h[static_cast<std::size_t>(i)] < e0_) w[static_cast<std::size_t>(i)] = 1.0 / b;
            }
            return w;
        };
        if (cfg_.sar_rho == 0.0) {
            auto r = weighted_entropy_step(model_, x, weigh, opt_, ParamSelect::NormAffineOnly,
                                           grad_stats_mode());
            return finish(x, r);
        }

        const std::vector<char> mask = model_.group_mask(ParamSelect::NormAffineOnly);
        const StatsMode mode = grad_stats_mode();

        Tape t1;
        Forward f1 = model_.forward(x, mode, &t1, &mask);
        EntropyStepResult r;
        r.probs = softmax(f1.logits);
        r.entropies = entropy_rows(r.probs);
        r.weights = weigh(r.probs, r.entropies);
        bool any = false;
        for (double w : r.weights) any = any || w != 0.0;
        if (!any) return finish(x, r);

        const ValueId loss1 = t1.weighted_entropy(f1.logits_id, r.weights);
        if (!std::isfinite(t1.value(loss1)(0, 0))) throw std::runtime_error("non-finite entropy loss");
        t1.backward(loss1);

        double norm_sq = 0.0;
        for (int s = 0; s < model_.slot_count(); ++s) {
            if (!mask[static_cast<std::size_t>(s)]) continue;
            const ValueId id = f1.slots[static_cast<std::size_t>(s)];
            if (!t1.has_grad(id)) continue;
            const Matrix& g = t1.grad(id);
            for (std::size_t k = 0; k < g.size(); ++k) norm_sq += g.data()[k] * g.data()[k];
        }
        if (norm_sq == 0.0) {
            // zero-gradient batch: skip the perturbation, take the plain step
            optimizer_step(model_, t1, f1, mask, opt_);
            r.updated = true;
            return finish(x, r);
        }

        // ascend to the entropy-maximizing neighborhood point
        const double scale = cfg_.sar_rho / std::sqrt(norm_sq);
        std::vector<Matrix> saved;
        saved.reserve(static_cast<std::size_t>(model_.slot_count()));
        for (int s = 0; s < model_.slot_count(); ++s) saved.push_back(model_.slot(s));
        for (int s = 0; s < model_.slot_count(); ++s) {
            if (!mask[static_cast<std::size_t>(s)]) continue;
            const ValueId id = f1.slots[static_cast<std::size_t>(s)];
            if (!t1.has_grad(id)) continue;
            axpy_inplace(model_.slot(s), scale, t1.grad(id));
        }

        Tape t2;
        Forward f2 = model_.forward(x, mode, &t2, &mask);
        const ValueId loss2 = t2.weighted_entropy(f2.logits_id, r.weights);
        if (!std::isfinite(t2.value(loss2)(0, 0))) {
            model_.restore_params(saved);
            throw std::runtime_error("non-finite entropy loss at perturbed parameters");
        }
        t2.backward(loss2);

        // bit-exact restore, then descend with the perturbed-point gradient
        model_.restore_params(saved);
        optimizer_step(model_, t2, f2, mask, opt_);
        r.updated = true;
        return finish(x, r);
    }

private:
    Matrix finish(const Matrix& x, const EntropyStepResult& r) {
        if (cfg_.predict_after_update && r.updated) {
            return softmax(model_.forward(x, grad_stats_mode()).logits);
        }
        return r.probs;
    }

    double e0_;
};

}  // namespace ttalab
