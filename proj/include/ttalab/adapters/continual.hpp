#pragma once

#include <cmath>
#include <vector>

#include "ttalab/adapters/base.hpp"
#include "ttalab/adapters/entropy.hpp"
#include "ttalab/adapters/memory.hpp"
#include "ttalab/tape.hpp"

namespace ttalab {

// NOTE: instance-aware batch normalization at inference plus a
// prediction-balanced reservoir; every update interval the normalization
// affines take one entropy-minimization step on the balanced memory batch.
class NoteAdapter final : public Adapter {
public:
    NoteAdapter(Model model, const AdaptConfig& cfg, Rng rng)
        : Adapter(std::move(model), cfg, rng),
          bank_(cfg.memory_capacity, model_.classes()) {}
    std::string_view name() const override { return "note"; }

    const ReservoirBank& memory() const noexcept { return bank_; }

protected:
    Matrix step(const Matrix& x) override {
        Forward f = model_.forward(x, StatsMode::Eval);
        Matrix probs = softmax(f.logits);
        for (int i = 0; i < x.rows(); ++i) {
            bank_.offer(x.row(i), argmax_row(probs, i), rng_);
        }
        ++batches_;
        if (!bank_.empty() && cfg_.note_update_interval > 0 &&
            batches_ % cfg_.note_update_interval == 0) {
            const Matrix xm = bank_.snapshot(model_.input_dim());
            const int bm = xm.rows();
            auto weigh = [bm](const Matrix&, const std::vector<double>&) {
                return std::vector<double>(static_cast<std::size_t>(bm), 1.0 / bm);
            };
            weighted_entropy_step(model_, xm, weigh, opt_, ParamSelect::NormAffineOnly,
                                  StatsMode::Eval);
        }
        if (cfg_.predict_after_update) {
            return softmax(model_.forward(x, StatsMode::Eval).logits);
        }
        return probs;
    }

private:
    ReservoirBank bank_;
    long batches_ = 0;
};

// Teacher-student pair: the student adapts, the teacher follows by EMA and
// supplies the predictions.
class TeacherStudentAdapter : public Adapter {
protected:
    TeacherStudentAdapter(Model model, const AdaptConfig& cfg, Rng rng)
        : Adapter(std::move(model), cfg, rng), teacher_(model_) {
        require(cfg.ema_momentum > 0.0 && cfg.ema_momentum <= 1.0,
                "teacher-student: ema momentum outside (0,1]");
        require(cfg.restore_prob >= 0.0 && cfg.restore_prob <= 1.0,
                "teacher-student: restore probability outside [0,1]");
    }

    void teacher_ema_update() {
        const double m = cfg_.ema_momentum;
        for (int s = 0; s < model_.slot_count(); ++s) {
            Matrix& t = teacher_.slot(s);
            const Matrix& st = model_.slot(s);
            for (std::size_t k = 0; k < t.size(); ++k) {
                t.data()[k] = m * t.data()[k] + (1.0 - m) * st.data()[k];
            }
        }
    }

    void stochastic_restore() {
        if (cfg_.restore_prob <= 0.0) return;
        const std::vector<Matrix>& origin = model_.theta0();
        for (int s = 0; s < model_.slot_count(); ++s) {
            Matrix& p = model_.slot(s);
            const Matrix& o = origin[static_cast<std::size_t>(s)];
            for (std::size_t k = 0; k < p.size(); ++k) {
                if (rng_.uniform() < cfg_.restore_prob) p.data()[k] = o.data()[k];
            }
        }
    }

public:
    Model& teacher() noexcept { return teacher_; }
    const Model& teacher() const noexcept { return teacher_; }

protected:
    Model teacher_;
};

// CoTTA: the teacher's augmentation-averaged distribution is both prediction
// and pseudo-target; the student takes a cross-entropy step toward it over
// all parameters, the teacher follows by EMA, and every student scalar is
// independently reset to the source value with probability restore_prob.
class CottaAdapter final : public TeacherStudentAdapter {
public:
    CottaAdapter(Model model, const AdaptConfig& cfg, Rng rng)
        : TeacherStudentAdapter(std::move(model), cfg, rng) {
        require(model_.has_theta0(), "cotta: model needs a source snapshot");
        require(cfg_.cotta_augments >= 1, "cotta: need at least one augmentation");
    }
    std::string_view name() const override { return "cotta"; }

protected:
    Matrix step(const Matrix& x) override {
        const int b = x.rows();
        const int c = model_.classes();
        Matrix targets(b, c);
        for (int k = 0; k < cfg_.cotta_augments; ++k) {
            const Matrix xa = noise_augment(x, cfg_.aug_noise_std);
            const Matrix p = softmax(teacher_.forward(xa, StatsMode::Eval).logits);
            add_inplace(targets, p);
        }
        for (std::size_t i = 0; i < targets.size(); ++i) {
            targets.data()[i] /= cfg_.cotta_augments;
        }

        const std::vector<char> mask = model_.group_mask(ParamSelect::All);
        Tape tape;
        Forward f = model_.forward(x, StatsMode::Eval, &tape, &mask);
        const std::vector<double> w(static_cast<std::size_t>(b), 1.0 / b);
        const ValueId loss = tape.soft_cross_entropy(f.logits_id, targets, w);
        if (!std::isfinite(tape.value(loss)(0, 0))) throw std::runtime_error("non-finite loss");
        tape.backward(loss);
        optimizer_step(model_, tape, f, mask, opt_);

        teacher_ema_update();
        stochastic_restore();
        return targets;
    }
};

// RoTTA: robust batch normalization plus the category-balanced
// timeliness/uncertainty memory. Updates replay the memory with per-sample
// weights exp(-age/tau) normalized over the replay batch; the student step
// covers all parameters and the teacher follows by EMA. Predictions come from
// the teacher on the raw batch.
class RottaAdapter final : public TeacherStudentAdapter {
public:
    RottaAdapter(Model model, const AdaptConfig& cfg, Rng rng)
        : TeacherStudentAdapter(std::move(model), cfg, rng),
          bank_(cfg.memory_capacity, model_.classes()) {
        require(cfg_.rotta_tau > 0.0, "rotta: tau must be positive");
    }
    std::string_view name() const override { return "rotta"; }

    const CstuBank& memory() const noexcept { return bank_; }

protected:
    Matrix step(const Matrix& x) override {
        Forward tf = teacher_.forward(x, StatsMode::Eval);
        Matrix probs = softmax(tf.logits);
        const std::vector<double> h = entropy_rows(probs);
        for (int i = 0; i < x.rows(); ++i) {
            bank_.insert(x.row(i), argmax_row(probs, i), h[static_cast<std::size_t>(i)]);
        }

        if (!bank_.empty()) {
            const Matrix xm = bank_.snapshot(model_.input_dim());
            std::vector<double> w;
            w.reserve(bank_.entries().size());
            double total = 0.0;
            for (const auto& e : bank_.entries()) {
                const double v = std::exp(-bank_.age_of(e) / cfg_.rotta_tau);
                w.push_back(v);
                total += v;
            }
            for (double& v : w) v /= total;

            const Matrix xa = noise_augment(xm, cfg_.aug_noise_std);
            const Matrix targets = softmax(teacher_.forward(xa, StatsMode::Eval).logits);

            const std::vector<char> mask = model_.group_mask(ParamSelect::All);
            Tape tape;
            Forward f = model_.forward(xm, StatsMode::Eval, &tape, &mask);
            const ValueId loss = tape.soft_cross_entropy(f.logits_id, targets, w);
            if (!std::isfinite(tape.value(loss)(0, 0))) throw std::runtime_error("non-finite loss");
            tape.backward(loss);
            optimizer_step(model_, tape, f, mask, opt_);
            teacher_ema_update();
        }
        bank_.tick();
        return probs;
    }

private:
    CstuBank bank_;
};

}  // namespace ttalab
