#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include "ttalab/matrix.hpp"
#include "ttalab/model.hpp"
#include "ttalab/optimizer.hpp"
#include "ttalab/prob.hpp"
#include "ttalab/rng.hpp"

namespace ttalab {

struct AdaptConfig {
    double lr = 1e-3;  // single update per batch at this rate
    OptimizerKind optimizer = OptimizerKind::Adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    // entropy family
    double e0_factor = 0.4;       // admission threshold E0 = e0_factor * ln C
    double eata_eps = 0.05;       // redundancy threshold on cos(p, pbar)
    bool eata_complement = false; // admit when cos < 1 - eps instead of cos < eps
    double eata_lambda = 1.0;     // Fisher anchor strength
    double eata_pbar_momentum = 0.9;
    double sar_rho = 0.05;        // sharpness perturbation radius

    // feature alignment / prototypes
    double shot_beta = 0.3;     // weight of the pseudo-label CE term
    int t3a_cap = 20;           // support set size per class
    double t3a_temperature = 0.3;  // prototype-score softmax temperature

    // continual methods
    int cotta_augments = 4;
    double aug_noise_std = 0.1;
    double restore_prob = 0.01;  // CoTTA stochastic restore
    double ema_momentum = 0.999; // teacher EMA
    double rotta_tau = 64.0;     // timeliness decay of memory weights
    int memory_capacity = 64;
    int note_update_interval = 1;  // batches between memory updates

    // ablation: predict from the post-update forward instead of pre-update
    bool predict_after_update = false;
};

struct AdapterFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A streaming test-time adaptation policy: observe an unlabeled batch,
// optionally update internal state or designated parameters, and return
// row-stochastic class probabilities for the batch. Once a step fails
// (non-finite loss or predictions) the adapter stays failed.
class Adapter {
public:
    virtual ~Adapter() = default;

    virtual std::string_view name() const = 0;

    Matrix observe(const Matrix& x) {
        if (failed_) throw AdapterFailure(std::string(name()) + ": adapter already failed");
        try {
            Matrix p = step(x);
            if (!p.all_finite()) throw std::runtime_error("non-finite predictions");
            return p;
        } catch (const std::exception& e) {
            failed_ = true;
            throw AdapterFailure(std::string(name()) + ": " + e.what());
        }
    }

    Model& model() noexcept { return model_; }
    const Model& model() const noexcept { return model_; }
    bool failed() const noexcept { return failed_; }

protected:
    Adapter(Model model, const AdaptConfig& cfg, Rng rng)
        : model_(std::move(model)),
          cfg_(cfg),
          rng_(rng),
          opt_(cfg.optimizer, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps) {}

    virtual Matrix step(const Matrix& x) = 0;

    // entropy-family forwards use batch statistics on BatchNorm encoders
    StatsMode grad_stats_mode() const noexcept {
        return model_.norm_kind() == NormKind::BatchNorm ? StatsMode::Train : StatsMode::Eval;
    }

    Matrix noise_augment(const Matrix& x, double std) {
        Matrix out = x;
        if (std > 0.0) {
            for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += std * rng_.normal();
        }
        return out;
    }

    Model model_;
    AdaptConfig cfg_;
    Rng rng_;
    GradOptimizer opt_;
    bool failed_ = false;
};

class BaselineAdapter final : public Adapter {
public:
    BaselineAdapter(Model model, const AdaptConfig& cfg, Rng rng)
        : Adapter(std::move(model), cfg, rng) {}
    std::string_view name() const override { return "baseline"; }

protected:
    Matrix step(const Matrix& x) override {
        return softmax(model_.forward(x, StatsMode::Eval).logits);
    }
};

}  // namespace ttalab
