#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <utility>

#include "ttalab/matrix.hpp"
#include "ttalab/tape.hpp"

namespace ttalab {

enum class NormKind { BatchNorm, LayerNorm, IABN, RBN };

// Train: batch statistics for the BatchNorm family, with a running-stat EMA
// update (pretraining behavior; IABN/RBN pretrain as plain BatchNorm).
// Eval: BatchNorm reads running stats; IABN applies soft-shrinkage fusion of
// batch vs running stats; RBN blends batch and global stats and then moves
// the globals by EMA. LayerNorm is identical in both modes.
enum class StatsMode { Train, Eval };

inline double soft_shrink(double d, double threshold) noexcept {
    const double mag = std::abs(d) - threshold;
    if (mag <= 0.0) return 0.0;
    return d > 0.0 ? mag : -mag;
}

struct IabnFusion {
    double mu = 0.0, var = 0.0;
    double slope_mu = 0.0, slope_var = 0.0;  // d(used)/d(instance), 0 inside the dead zone
};

// IABN statistic fusion for one feature. The running value moves toward the
// instance value only by the part of the deviation that exceeds kappa times
// the sampling-noise scale: sqrt(var_run/n) for the mean, var_run*sqrt(2/(n-1))
// for the variance. n is the number of samples behind the instance estimate.
inline IabnFusion iabn_fuse(double mu_ins, double var_ins, double mu_run, double var_run,
                            double kappa, int n) {
    if (var_ins < 0.0 || var_run <= 0.0) {
        throw std::invalid_argument("iabn_statistics: nonpositive variance");
    }
    const double s_mu = n > 0 ? std::sqrt(var_run / n) : std::numeric_limits<double>::infinity();
    const double s_var = n > 1 ? var_run * std::sqrt(2.0 / (n - 1))
                               : std::numeric_limits<double>::infinity();
    IabnFusion f;
    f.slope_mu = std::abs(mu_ins - mu_run) > kappa * s_mu ? 1.0 : 0.0;
    f.slope_var = std::abs(var_ins - var_run) > kappa * s_var ? 1.0 : 0.0;
    f.mu = mu_run + soft_shrink(mu_ins - mu_run, kappa * s_mu);
    f.var = var_run + soft_shrink(var_ins - var_run, kappa * s_var);
    return f;
}

inline std::pair<double, double> iabn_statistics(double mu_ins, double var_ins,
                                                 double mu_run, double var_run,
                                                 double kappa, int n) {
    const IabnFusion f = iabn_fuse(mu_ins, var_ins, mu_run, var_run, kappa, n);
    return {f.mu, f.var};
}

// RBN fusion for one feature: convex blend of instance and global statistics.
inline std::pair<double, double> rbn_statistics(double mu_ins, double var_ins,
                                                double mu_glob, double var_glob,
                                                double alpha_fuse) {
    if (var_ins < 0.0 || var_glob <= 0.0) {
        throw std::invalid_argument("rbn_statistics: nonpositive variance");
    }
    require(alpha_fuse >= 0.0 && alpha_fuse <= 1.0, "rbn_statistics: alpha_fuse outside [0,1]");
    const double mu = alpha_fuse * mu_ins + (1.0 - alpha_fuse) * mu_glob;
    const double var = alpha_fuse * var_ins + (1.0 - alpha_fuse) * var_glob;
    return {mu, var};
}

struct NormLayer {
    NormKind kind = NormKind::LayerNorm;
    Matrix gamma;    // 1 x width
    Matrix beta;     // 1 x width
    Matrix mu_run;   // 1 x width; empty for LayerNorm
    Matrix var_run;  // 1 x width; empty for LayerNorm
    double momentum = 0.1;      // running-stat EMA in Train mode
    double kappa = 4.0;         // IABN shrinkage multiplier
    double alpha_fuse = 0.05;   // RBN instance weight
    double rbn_momentum = 0.05; // RBN global-stat EMA in Eval mode
    double eps = 1e-5;

    static NormLayer make(NormKind kind, int width) {
        NormLayer n;
        n.kind = kind;
        n.gamma = Matrix(1, width, 1.0);
        n.beta = Matrix(1, width, 0.0);
        if (kind != NormKind::LayerNorm) {
            n.mu_run = Matrix(1, width, 0.0);
            n.var_run = Matrix(1, width, 1.0);
        }
        return n;
    }
};

// Cached intermediates for the backward pass.
struct NormCache {
    bool per_row = false;  // LayerNorm: statistics per sample row
    Matrix xhat;           // normalized pre-affine values
    Matrix inv;            // 1/sqrt(var_used+eps); 1 x width, or rows x 1 for LayerNorm
    Matrix mu_ins;         // batch means (column family only)
    Matrix stat_w_mu;      // d(mu_used)/d(mu_ins) per feature, in [0,1]
    Matrix stat_w_var;     // d(var_used)/d(var_ins) per feature, in [0,1]
};

namespace detail {

inline void column_stats(const Matrix& x, Matrix& mu, Matrix& var) {
    const int n = x.rows();
    mu = col_means(x);
    var = Matrix(1, x.cols());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < x.cols(); ++j) {
            const double d = x(i, j) - mu(0, j);
            var(0, j) += d * d;
        }
    }
    for (int j = 0; j < x.cols(); ++j) var(0, j) /= n;
}

}  // namespace detail

// Value-level forward shared by the taped and untaped paths. Mutates running
// or global statistics according to (kind, mode).
inline Matrix norm_forward(NormLayer& layer, const Matrix& x, StatsMode mode,
                           NormCache* cache) {
    const int n = x.rows();
    const int w = x.cols();
    require(layer.gamma.cols() == w, "norm_forward: width mismatch");
    require(n >= 1, "norm_forward: empty batch");

    if (layer.kind == NormKind::LayerNorm) {
        Matrix y(n, w);
        Matrix xhat(n, w);
        Matrix inv(n, 1);
        for (int i = 0; i < n; ++i) {
            double mu = 0.0;
            for (int j = 0; j < w; ++j) mu += x(i, j);
            mu /= w;
            double var = 0.0;
            for (int j = 0; j < w; ++j) {
                const double d = x(i, j) - mu;
                var += d * d;
            }
            var /= w;
            const double iv = 1.0 / std::sqrt(var + layer.eps);
            inv(i, 0) = iv;
            for (int j = 0; j < w; ++j) {
                const double xh = (x(i, j) - mu) * iv;
                xhat(i, j) = xh;
                y(i, j) = layer.gamma(0, j) * xh + layer.beta(0, j);
            }
        }
        if (cache) {
            cache->per_row = true;
            cache->xhat = std::move(xhat);
            cache->inv = std::move(inv);
        }
        return y;
    }

    // Column-statistics family: BatchNorm / IABN / RBN.
    Matrix mu_ins, var_ins;
    Matrix mu_use(1, w), var_use(1, w);
    Matrix w_mu(1, w), w_var(1, w);
    const bool train = mode == StatsMode::Train;

    if (train || layer.kind != NormKind::BatchNorm) {
        detail::column_stats(x, mu_ins, var_ins);
    }

    if (train) {
        // Pretraining path for the whole family: batch statistics plus a
        // running-stat EMA.
        mu_use = mu_ins;
        var_use = var_ins;
        w_mu.fill(1.0);
        w_var.fill(1.0);
        for (int j = 0; j < w; ++j) {
            layer.mu_run(0, j) = (1.0 - layer.momentum) * layer.mu_run(0, j) + layer.momentum * mu_ins(0, j);
            layer.var_run(0, j) = (1.0 - layer.momentum) * layer.var_run(0, j) + layer.momentum * var_ins(0, j);
        }
    } else if (layer.kind == NormKind::BatchNorm) {
        mu_use = layer.mu_run;
        var_use = layer.var_run;
        w_mu.fill(0.0);
        w_var.fill(0.0);
    } else if (layer.kind == NormKind::IABN) {
        for (int j = 0; j < w; ++j) {
            const IabnFusion f = iabn_fuse(mu_ins(0, j), var_ins(0, j),
                                           layer.mu_run(0, j), layer.var_run(0, j),
                                           layer.kappa, n);
            mu_use(0, j) = f.mu;
            var_use(0, j) = f.var;
            w_mu(0, j) = f.slope_mu;
            w_var(0, j) = f.slope_var;
        }
    } else {  // RBN
        for (int j = 0; j < w; ++j) {
            const auto [mu, var] = rbn_statistics(mu_ins(0, j), var_ins(0, j),
                                                  layer.mu_run(0, j), layer.var_run(0, j),
                                                  layer.alpha_fuse);
            mu_use(0, j) = mu;
            var_use(0, j) = var;
            w_mu(0, j) = layer.alpha_fuse;
            w_var(0, j) = layer.alpha_fuse;
        }
        for (int j = 0; j < w; ++j) {
            layer.mu_run(0, j) = (1.0 - layer.rbn_momentum) * layer.mu_run(0, j) + layer.rbn_momentum * mu_use(0, j);
            layer.var_run(0, j) = (1.0 - layer.rbn_momentum) * layer.var_run(0, j) + layer.rbn_momentum * var_use(0, j);
        }
    }

    Matrix y(n, w);
    Matrix xhat(n, w);
    Matrix inv(1, w);
    for (int j = 0; j < w; ++j) inv(0, j) = 1.0 / std::sqrt(var_use(0, j) + layer.eps);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < w; ++j) {
            const double xh = (x(i, j) - mu_use(0, j)) * inv(0, j);
            xhat(i, j) = xh;
            y(i, j) = layer.gamma(0, j) * xh + layer.beta(0, j);
        }
    }
    if (cache) {
        cache->per_row = false;
        cache->xhat = std::move(xhat);
        cache->inv = std::move(inv);
        cache->mu_ins = train || layer.kind != NormKind::BatchNorm ? mu_ins : Matrix(1, w);
        cache->stat_w_mu = std::move(w_mu);
        cache->stat_w_var = std::move(w_var);
    }
    return y;
}

// Taped normalization. gamma/beta are tape leaves; the statistics paths are
// differentiated exactly as the forward computes them (fully for batch stats
// and LayerNorm, masked by the shrinkage dead zone for IABN, weighted by
// alpha_fuse for RBN, constant for running stats).
inline ValueId norm_op(Tape& t, NormLayer& layer, ValueId x, ValueId gamma, ValueId beta,
                       StatsMode mode) {
    auto cache = std::make_shared<NormCache>();
    Matrix gamma_now = layer.gamma;  // backward closes over the values used
    Matrix y = norm_forward(layer, t.value(x), mode, cache.get());
    return t.custom(std::move(y), {x, gamma, beta},
                    [x, gamma, beta, cache, gamma_now = std::move(gamma_now)](Tape& t, ValueId self) {
                        const Matrix& dy = t.grad(self);
                        const Matrix& xh = cache->xhat;
                        const int n = xh.rows();
                        const int w = xh.cols();

                        if (t.tracked(beta)) t.add_grad(beta, col_sums(dy));
                        if (t.tracked(gamma)) {
                            Matrix dg(1, w);
                            for (int i = 0; i < n; ++i) {
                                for (int j = 0; j < w; ++j) dg(0, j) += dy(i, j) * xh(i, j);
                            }
                            t.add_grad(gamma, dg);
                        }
                        if (!t.tracked(x)) return;

                        const Matrix& xv = t.value(x);
                        Matrix dx(n, w);
                        if (cache->per_row) {
                            for (int i = 0; i < n; ++i) {
                                const double iv = cache->inv(i, 0);
                                double m1 = 0.0, m2 = 0.0;
                                for (int j = 0; j < w; ++j) {
                                    const double dxh = dy(i, j) * gamma_now(0, j);
                                    m1 += dxh;
                                    m2 += dxh * xh(i, j);
                                }
                                m1 /= w;
                                m2 /= w;
                                for (int j = 0; j < w; ++j) {
                                    const double dxh = dy(i, j) * gamma_now(0, j);
                                    dx(i, j) = iv * (dxh - m1 - xh(i, j) * m2);
                                }
                            }
                        } else {
                            for (int j = 0; j < w; ++j) {
                                const double iv = cache->inv(0, j);
                                const double wmu = cache->stat_w_mu(0, j);
                                const double wvar = cache->stat_w_var(0, j);
                                double s1 = 0.0, s2 = 0.0;
                                for (int i = 0; i < n; ++i) {
                                    const double dxh = dy(i, j) * gamma_now(0, j);
                                    s1 += dxh;
                                    s2 += dxh * xh(i, j);
                                }
                                // dL/d(mu_used) and dL/d(var_used)
                                const double dmu = -iv * s1;
                                const double dvar = -0.5 * iv * iv * s2;
                                const double mu_ins = cache->mu_ins(0, j);
                                for (int i = 0; i < n; ++i) {
                                    const double dxh = dy(i, j) * gamma_now(0, j);
                                    double g = dxh * iv;
                                    g += wmu * dmu / n;
                                    g += wvar * dvar * 2.0 * (xv(i, j) - mu_ins) / n;
                                    dx(i, j) = g;
                                }
                            }
                        }
                        t.add_grad(x, dx);
                    });
}

}  // namespace ttalab
