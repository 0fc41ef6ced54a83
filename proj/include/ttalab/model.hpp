#pragma once

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttalab/data.hpp"
#include "ttalab/matrix.hpp"
#include "ttalab/norm.hpp"
#include "ttalab/prob.hpp"
#include "ttalab/rng.hpp"
#include "ttalab/tape.hpp"

namespace ttalab {

// Which parameter slots an adaptation step may touch.
enum class ParamSelect { NormAffineOnly, EncoderOnly, All };

struct ModelConfig {
    int input_dim = 16;
    int classes = 7;
    int blocks = 2;
    int width = 64;
    NormKind norm = NormKind::LayerNorm;
};

struct Forward {
    Matrix features;  // encoder output fed to the head
    Matrix logits;
    ValueId features_id = -1;
    ValueId logits_id = -1;
    std::vector<ValueId> slots;  // tape leaf per parameter slot; empty if untaped
};

// Encoder of affine -> normalization -> ReLU blocks plus a linear head.
// theta0 is the immutable source snapshot taken when pretraining finishes.
class Model {
public:
    Model() = default;

    static Model init(const ModelConfig& cfg, Rng rng) {
        require(cfg.input_dim >= 1 && cfg.classes >= 2 && cfg.blocks >= 0 && cfg.width >= 1,
                "Model::init: bad config");
        Model m;
        m.cfg_ = cfg;
        int in = cfg.input_dim;
        for (int b = 0; b < cfg.blocks; ++b) {
            Block blk;
            blk.w = uniform_fan_in(in, cfg.width, rng);
            blk.b = Matrix(1, cfg.width);
            blk.norm = NormLayer::make(cfg.norm, cfg.width);
            m.blocks_.push_back(std::move(blk));
            in = cfg.width;
        }
        m.head_w_ = uniform_fan_in(in, cfg.classes, rng);
        m.head_b_ = Matrix(1, cfg.classes);
        return m;
    }

    const ModelConfig& config() const noexcept { return cfg_; }
    int input_dim() const noexcept { return cfg_.input_dim; }
    int classes() const noexcept { return cfg_.classes; }
    int feature_dim() const noexcept { return blocks_.empty() ? cfg_.input_dim : cfg_.width; }
    NormKind norm_kind() const noexcept { return cfg_.norm; }
    int block_count() const noexcept { return static_cast<int>(blocks_.size()); }

    Matrix& head_weights() noexcept { return head_w_; }
    const Matrix& head_weights() const noexcept { return head_w_; }
    NormLayer& norm_layer(int block) { return blocks_.at(static_cast<std::size_t>(block)).norm; }

    struct SlotInfo {
        std::string name;
        bool norm_affine = false;
        bool head = false;
    };

    int slot_count() const noexcept { return static_cast<int>(blocks_.size()) * 4 + 2; }

    SlotInfo slot_info(int s) const {
        const int nb = static_cast<int>(blocks_.size());
        if (s < nb * 4) {
            const int b = s / 4;
            static const char* part[] = {"w", "b", "gamma", "beta"};
            const int k = s % 4;
            return {"block" + std::to_string(b) + "." + part[k], k >= 2, false};
        }
        return {s == nb * 4 ? "head.w" : "head.b", false, true};
    }

    Matrix& slot(int s) {
        const int nb = static_cast<int>(blocks_.size());
        if (s < 0 || s >= slot_count()) throw std::invalid_argument("Model::slot: out of range");
        if (s < nb * 4) {
            Block& blk = blocks_[static_cast<std::size_t>(s / 4)];
            switch (s % 4) {
                case 0: return blk.w;
                case 1: return blk.b;
                case 2: return blk.norm.gamma;
                default: return blk.norm.beta;
            }
        }
        return s == nb * 4 ? head_w_ : head_b_;
    }
    const Matrix& slot(int s) const { return const_cast<Model*>(this)->slot(s); }

    std::vector<char> group_mask(ParamSelect sel) const {
        std::vector<char> mask(static_cast<std::size_t>(slot_count()), 0);
        for (int s = 0; s < slot_count(); ++s) {
            const SlotInfo info = slot_info(s);
            switch (sel) {
                case ParamSelect::NormAffineOnly: mask[static_cast<std::size_t>(s)] = info.norm_affine; break;
                case ParamSelect::EncoderOnly: mask[static_cast<std::size_t>(s)] = !info.head; break;
                case ParamSelect::All: mask[static_cast<std::size_t>(s)] = 1; break;
            }
        }
        return mask;
    }

    // Single forward path for both inference and taped adaptation. When tape
    // is null only the values are produced.
    Forward forward(const Matrix& x, StatsMode mode, Tape* tape = nullptr,
                    const std::vector<char>* grad_mask = nullptr) {
        require(x.cols() == cfg_.input_dim, "Model::forward: input width mismatch");
        require(x.rows() >= 1, "Model::forward: empty batch");
        if (!x.all_finite()) throw std::invalid_argument("Model::forward: non-finite input");

        Forward f;
        if (!tape) {
            Matrix h = x;
            for (Block& blk : blocks_) {
                h = ttalab::matmul(h, blk.w);
                add_row_inplace(h, blk.b);
                h = norm_forward(blk.norm, h, mode, nullptr);
                for (std::size_t i = 0; i < h.size(); ++i) {
                    if (h.data()[i] < 0.0) h.data()[i] = 0.0;
                }
            }
            f.logits = ttalab::matmul(h, head_w_);
            add_row_inplace(f.logits, head_b_);
            f.features = std::move(h);
            return f;
        }

        f.slots.resize(static_cast<std::size_t>(slot_count()));
        for (int s = 0; s < slot_count(); ++s) {
            const bool needs = grad_mask ? (*grad_mask)[static_cast<std::size_t>(s)] != 0 : false;
            f.slots[static_cast<std::size_t>(s)] = tape->leaf(slot(s), needs);
        }
        ValueId h = tape->leaf(x, false);
        for (int b = 0; b < static_cast<int>(blocks_.size()); ++b) {
            const int base = b * 4;
            h = tape->matmul(h, f.slots[static_cast<std::size_t>(base)]);
            h = tape->add_row(h, f.slots[static_cast<std::size_t>(base) + 1]);
            h = norm_op(*tape, blocks_[static_cast<std::size_t>(b)].norm, h,
                        f.slots[static_cast<std::size_t>(base) + 2],
                        f.slots[static_cast<std::size_t>(base) + 3], mode);
            h = tape->relu(h);
        }
        f.features_id = h;
        ValueId logits = tape->matmul(h, f.slots[static_cast<std::size_t>(slot_count()) - 2]);
        logits = tape->add_row(logits, f.slots[static_cast<std::size_t>(slot_count()) - 1]);
        f.logits_id = logits;
        f.features = tape->value(h);
        f.logits = tape->value(logits);
        return f;
    }

    // theta -= lr * grad for every masked slot the backward pass reached.
    void apply_step(const Tape& tape, const Forward& f, double lr, const std::vector<char>& mask) {
        require(f.slots.size() == static_cast<std::size_t>(slot_count()), "apply_step: foreign forward");
        for (int s = 0; s < slot_count(); ++s) {
            if (!mask[static_cast<std::size_t>(s)]) continue;
            const ValueId id = f.slots[static_cast<std::size_t>(s)];
            if (!tape.has_grad(id)) continue;
            axpy_inplace(slot(s), -lr, tape.grad(id));
        }
    }

    // Parameter image in slot order (affine weights and norm affines; running
    // statistics are not parameters).
    std::vector<Matrix> snapshot_params() const {
        std::vector<Matrix> img;
        img.reserve(static_cast<std::size_t>(slot_count()));
        for (int s = 0; s < slot_count(); ++s) img.push_back(slot(s));
        return img;
    }

    void restore_params(const std::vector<Matrix>& img) {
        require(img.size() == static_cast<std::size_t>(slot_count()), "restore_params: slot count mismatch");
        for (int s = 0; s < slot_count(); ++s) {
            require(img[static_cast<std::size_t>(s)].same_shape(slot(s)), "restore_params: shape mismatch");
        }
        for (int s = 0; s < slot_count(); ++s) slot(s) = img[static_cast<std::size_t>(s)];
    }

    void freeze_source() { theta0_ = snapshot_params(); }
    bool has_theta0() const noexcept { return !theta0_.empty(); }
    const std::vector<Matrix>& theta0() const {
        if (theta0_.empty()) throw std::logic_error("Model::theta0: source snapshot not taken");
        return theta0_;
    }

    struct Block {
        Matrix w, b;
        NormLayer norm;
    };
    std::vector<Block>& blocks() noexcept { return blocks_; }
    const std::vector<Block>& blocks() const noexcept { return blocks_; }
    const Matrix& head_bias() const noexcept { return head_b_; }
    Matrix& head_bias() noexcept { return head_b_; }

private:
    static Matrix uniform_fan_in(int in, int out, Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        Matrix w(in, out);
        for (int i = 0; i < in; ++i) {
            for (int j = 0; j < out; ++j) w(i, j) = (2.0 * rng.uniform() - 1.0) * bound;
        }
        return w;
    }

    ModelConfig cfg_;
    std::vector<Block> blocks_;
    Matrix head_w_, head_b_;
    std::vector<Matrix> theta0_;
};

struct PretrainConfig {
    int epochs = 30;
    double lr = 0.1;
    int batch_size = 32;
};

struct PretrainReport {
    double val_accuracy = 0.0;
    int steps = 0;
};

// Mini-batch SGD on cross-entropy over all parameters, then freeze theta0 and
// record validation accuracy. Zero epochs still freezes (theta0 = init).
inline PretrainReport pretrain(Model& m, const LabeledSet& train, const LabeledSet& val,
                               const PretrainConfig& cfg, Rng rng) {
    require(train.size() >= 1, "pretrain: empty training set");
    const std::vector<char> mask = m.group_mask(ParamSelect::All);
    std::vector<int> order(static_cast<std::size_t>(train.size()));
    std::iota(order.begin(), order.end(), 0);

    PretrainReport rep;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (int begin = 0; begin < train.size(); begin += cfg.batch_size) {
            const int end = std::min(begin + cfg.batch_size, train.size());
            std::vector<int> idx(order.begin() + begin, order.begin() + end);
            const LabeledSet batch = train.take(idx);
            Tape tape;
            Forward f = m.forward(batch.x, StatsMode::Train, &tape, &mask);
            std::vector<double> w(static_cast<std::size_t>(batch.size()),
                                  1.0 / static_cast<double>(batch.size()));
            const ValueId loss = tape.soft_cross_entropy(
                f.logits_id, one_hot(batch.observed, m.classes()), std::move(w));
            if (!std::isfinite(tape.value(loss)(0, 0))) {
                throw std::runtime_error("pretrain: loss diverged at step " + std::to_string(rep.steps));
            }
            tape.backward(loss);
            m.apply_step(tape, f, cfg.lr, mask);
            ++rep.steps;
        }
    }
    if (val.size() > 0) {
        Forward f = m.forward(val.x, StatsMode::Eval);
        rep.val_accuracy = accuracy(softmax(f.logits), val.observed);
    }
    m.freeze_source();
    return rep;
}

}  // namespace ttalab
