#pragma once

// Test-only oracles and fixtures. These stay independent of the library's
// backward/estimator code paths they are used to check.

#include <cmath>
#include <functional>
#include <vector>

#include "ttalab/matrix.hpp"
#include "ttalab/model.hpp"
#include "ttalab/rng.hpp"

namespace testutil {

// Central finite difference of a scalar loss w.r.t. every entry of the given
// parameter matrix. The loss callback re-evaluates the full forward pass.
inline ttalab::Matrix fd_gradient(std::function<double()> loss, ttalab::Matrix& param,
                                  double h = 1e-4) {
    ttalab::Matrix g(param.rows(), param.cols());
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double orig = param.data()[i];
        param.data()[i] = orig + h;
        const double up = loss();
        param.data()[i] = orig - h;
        const double down = loss();
        param.data()[i] = orig;
        g.data()[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// max |a-b| / max(1, ||b||_inf): standard gradcheck metric.
inline double rel_gradient_error(const ttalab::Matrix& analytic, const ttalab::Matrix& fd) {
    double scale = 1.0;
    for (std::size_t i = 0; i < fd.size(); ++i) scale = std::max(scale, std::abs(fd.data()[i]));
    double worst = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
        worst = std::max(worst, std::abs(analytic.data()[i] - fd.data()[i]));
    }
    return worst / scale;
}

// Naive triple-loop MMD^2 oracle.
inline double brute_force_mmd2(const ttalab::Matrix& x, const ttalab::Matrix& y,
                               double sigma_sq, bool biased) {
    const auto k = [sigma_sq](std::span<const double> a, std::span<const double> b) {
        return std::exp(-ttalab::sq_distance(a, b) / (2.0 * sigma_sq));
    };
    const int m = x.rows();
    const int n = y.rows();
    double kxx = 0.0, kyy = 0.0, kxy = 0.0;
    if (biased) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) kxx += k(x.row(i), x.row(j));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) kyy += k(y.row(i), y.row(j));
        kxx /= static_cast<double>(m) * m;
        kyy /= static_cast<double>(n) * n;
    } else {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                if (i != j) kxx += k(x.row(i), x.row(j));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j) kyy += k(y.row(i), y.row(j));
        kxx /= static_cast<double>(m) * (m - 1);
        kyy /= static_cast<double>(n) * (n - 1);
    }
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) kxy += k(x.row(i), y.row(j));
    kxy /= static_cast<double>(m) * n;
    return kxx + kyy - 2.0 * kxy;
}

inline double chi_square_vs_uniform(const std::vector<int>& counts) {
    double total = 0.0;
    for (int c : counts) total += c;
    if (total == 0.0) return 0.0;
    const double expected = total / static_cast<double>(counts.size());
    double chi = 0.0;
    for (int c : counts) {
        const double d = c - expected;
        chi += d * d / expected;
    }
    return chi;
}

inline ttalab::Matrix random_matrix(int rows, int cols, ttalab::Rng& rng, double scale = 1.0) {
    ttalab::Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

// RAII save/restore of all running statistics, so repeated loss evaluations
// (finite differencing) see the same normalization state the analytic
// backward pass saw.
class StatsGuard {
public:
    explicit StatsGuard(ttalab::Model& m) : model_(m) {
        for (auto& blk : m.blocks()) {
            mu_.push_back(blk.norm.mu_run);
            var_.push_back(blk.norm.var_run);
        }
    }
    ~StatsGuard() { restore(); }
    void restore() {
        for (std::size_t b = 0; b < mu_.size(); ++b) {
            model_.blocks()[b].norm.mu_run = mu_[b];
            model_.blocks()[b].norm.var_run = var_[b];
        }
    }

private:
    ttalab::Model& model_;
    std::vector<ttalab::Matrix> mu_, var_;
};

struct FdInstance {
    ttalab::Model model;
    ttalab::Matrix x;
};

// Random small model + batch for gradient checking. Instances are resampled
// until every ReLU preactivation sits away from its kink, so central
// differences stay on one side of the nonlinearity.
inline FdInstance make_fd_instance(ttalab::NormKind kind, double kappa, ttalab::Rng& rng,
                                   ttalab::StatsMode mode = ttalab::StatsMode::Eval,
                                   double margin = 5e-3) {
    using namespace ttalab;
    for (int attempt = 0; attempt < 200; ++attempt) {
        ModelConfig cfg;
        cfg.input_dim = 6;
        cfg.classes = 4;
        cfg.blocks = 2;
        cfg.width = 8;
        cfg.norm = kind;
        Model m = Model::init(cfg, rng.split(1000 + static_cast<std::uint64_t>(attempt)));
        Rng r = rng.split(2000 + static_cast<std::uint64_t>(attempt));
        for (auto& blk : m.blocks()) {
            for (std::size_t i = 0; i < blk.w.size(); ++i) blk.w.data()[i] += 0.3 * r.normal();
            for (std::size_t i = 0; i < blk.norm.gamma.size(); ++i) {
                blk.norm.gamma.data()[i] = 1.0 + 0.3 * r.normal();
                blk.norm.beta.data()[i] = 0.3 * r.normal();
            }
            blk.norm.kappa = kappa;
            if (kind != NormKind::LayerNorm) {
                for (std::size_t i = 0; i < blk.norm.mu_run.size(); ++i) {
                    blk.norm.mu_run.data()[i] = 0.3 * r.normal();
                    blk.norm.var_run.data()[i] = 0.6 + std::abs(r.normal());
                }
            }
        }
        Matrix x = random_matrix(5, 6, r, 1.0);

        // probe activations without disturbing stats
        bool ok = true;
        {
            StatsGuard guard(m);
            Matrix h = x;
            for (auto& blk : m.blocks()) {
                h = matmul(h, blk.w);
                add_row_inplace(h, blk.b);
                h = norm_forward(blk.norm, h, mode, nullptr);
                for (std::size_t i = 0; i < h.size() && ok; ++i) {
                    if (std::abs(h.data()[i]) < margin) ok = false;
                }
                if (!ok) break;
                for (std::size_t i = 0; i < h.size(); ++i) {
                    if (h.data()[i] < 0.0) h.data()[i] = 0.0;
                }
            }
        }
        if (ok) return {std::move(m), std::move(x)};
    }
    throw std::runtime_error("make_fd_instance: no clean instance found");
}

}  // namespace testutil
