#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttalab/data.hpp"
#include "ttalab/matrix.hpp"
#include "ttalab/rng.hpp"

namespace ttalab {

// Generative description of a synthetic domain: per-class Gaussian features
// with isotropic covariance cov_scale * I and a label-noise rate eta applied
// to the observed labels.
struct DomainSpec {
    std::string name;
    int classes = 7;
    int dim = 16;
    Matrix means;  // classes x dim
    double cov_scale = 1.0;
    double label_noise = 0.0;

    void validate() const {
        require(classes >= 2, "DomainSpec: need at least two classes");
        require(dim >= 1, "DomainSpec: need at least one dimension");
        require(means.rows() == classes && means.cols() == dim, "DomainSpec: means shape mismatch");
        require(cov_scale > 0.0, "DomainSpec: covariance scale must be positive");
        require(label_noise >= 0.0 && label_noise < 1.0, "DomainSpec: label noise outside [0,1)");
        for (int a = 0; a < classes; ++a) {
            for (int b = a + 1; b < classes; ++b) {
                if (sq_distance(means.row(a), means.row(b)) == 0.0) {
                    throw std::invalid_argument("DomainSpec: class means must be pairwise distinct");
                }
            }
        }
    }
};

// Deterministic class-mean layout: class c lives in the coordinate plane
// (2c, 2c+1) mod dim at the given radius, rotated within its plane so means
// stay pairwise distinct even when planes wrap.
inline Matrix plane_means(int classes, int dim, double radius) {
    require(dim >= 2, "plane_means: dim must be >= 2");
    Matrix m(classes, dim);
    for (int c = 0; c < classes; ++c) {
        const int p = (2 * c) % (dim - 1);
        const double phase = 0.39 * c;
        m(c, p) = radius * std::cos(phase);
        m(c, p + 1) = radius * std::sin(phase);
    }
    return m;
}

// Affine map applied to a source domain's class means to manufacture a target
// domain: rotate (Givens rotations in consecutive coordinate planes), scale,
// then translate by offset.
struct ShiftTransform {
    Matrix offset;  // 1 x dim
    double angle = 0.0;
    double scale = 1.0;

    void validate(int dim) const {
        require(offset.rows() == 1 && offset.cols() == dim, "ShiftTransform: offset width mismatch");
        require(scale > 0.0, "ShiftTransform: scale must be positive");
    }

    // offset of the given magnitude spread evenly over all coordinates
    static ShiftTransform uniform_offset(double magnitude, int dim, double angle = 0.0,
                                         double scale = 1.0) {
        ShiftTransform t;
        t.offset = Matrix(1, dim, magnitude / std::sqrt(static_cast<double>(dim)));
        t.angle = angle;
        t.scale = scale;
        return t;
    }

    Matrix apply(const Matrix& points) const {
        Matrix out = points;
        const int d = points.cols();
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        for (int i = 0; i < out.rows(); ++i) {
            for (int p = 0; p + 1 < d; p += 2) {
                const double a = out(i, p);
                const double b = out(i, p + 1);
                out(i, p) = a * c - b * s;
                out(i, p + 1) = a * s + b * c;
            }
            for (int j = 0; j < d; ++j) out(i, j) = out(i, j) * scale + offset(0, j);
        }
        return out;
    }
};

inline DomainSpec derive_target(const DomainSpec& source, const ShiftTransform& t,
                                double target_label_noise, const std::string& name = "") {
    source.validate();
    t.validate(source.dim);
    DomainSpec out = source;
    out.means = t.apply(source.means);
    out.label_noise = target_label_noise;
    out.name = name.empty() ? source.name + "-shifted" : name;
    out.validate();
    return out;
}

// Draw n samples: class uniform, features mean_c + sqrt(cov_scale) * N(0, I).
// With probability eta the observed label is replaced by a uniformly random
// *different* label; the true label is kept alongside.
inline LabeledSet sample_domain(const DomainSpec& spec, int n, Rng rng) {
    spec.validate();
    require(n >= 1, "sample_domain: need n >= 1");
    LabeledSet s;
    s.x = Matrix(n, spec.dim);
    s.observed.resize(static_cast<std::size_t>(n));
    s.truth.resize(static_cast<std::size_t>(n));
    s.domain = spec.name;
    s.classes = spec.classes;
    const double sd = std::sqrt(spec.cov_scale);
    for (int i = 0; i < n; ++i) {
        const int c = rng.below(spec.classes);
        s.truth[static_cast<std::size_t>(i)] = c;
        for (int j = 0; j < spec.dim; ++j) {
            s.x(i, j) = spec.means(c, j) + sd * rng.normal();
        }
        int obs = c;
        if (spec.label_noise > 0.0 && rng.uniform() < spec.label_noise) {
            const int k = rng.below(spec.classes - 1);
            obs = k >= c ? k + 1 : k;
        }
        s.observed[static_cast<std::size_t>(i)] = obs;
    }
    return s;
}

// Bayes-optimal prediction under the generative model (equal priors, shared
// isotropic covariance): nearest class mean.
inline int bayes_predict(const DomainSpec& spec, std::span<const double> x) {
    int best = 0;
    double bestd = sq_distance(x, spec.means.row(0));
    for (int c = 1; c < spec.classes; ++c) {
        const double d = sq_distance(x, spec.means.row(c));
        if (d < bestd) {
            bestd = d;
            best = c;
        }
    }
    return best;
}

inline double bayes_accuracy(const DomainSpec& spec, const LabeledSet& data) {
    int hit = 0;
    for (int i = 0; i < data.size(); ++i) {
        if (bayes_predict(spec, data.x.row(i)) == data.truth[static_cast<std::size_t>(i)]) ++hit;
    }
    return data.size() ? static_cast<double>(hit) / data.size() : 0.0;
}

enum class StreamOrder { Iid, ClassCorrelated };

struct StreamSpec {
    StreamOrder order = StreamOrder::Iid;
    int run_length = 1;
    int length = 2000;
    int batch_size = 16;
    std::vector<double> class_weights;  // empty: follow the data's composition

    void validate() const {
        require(run_length >= 1, "StreamSpec: run length must be >= 1");
        require(length >= 1, "StreamSpec: length must be >= 1");
        require(batch_size >= 1, "StreamSpec: batch size must be >= 1");
        if (!class_weights.empty()) {
            double sum = 0.0;
            for (double w : class_weights) {
                require(w >= 0.0, "StreamSpec: negative class weight");
                sum += w;
            }
            require(std::abs(sum - 1.0) <= 1e-9, "StreamSpec: class weights must sum to 1");
        }
    }
};

namespace detail {

// Largest-remainder apportionment of `total` into weighted integer counts.
inline std::vector<int> apportion(const std::vector<double>& weights, int total) {
    const int k = static_cast<int>(weights.size());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    std::vector<std::pair<double, int>> rema;
    int assigned = 0;
    for (int i = 0; i < k; ++i) {
        const double exact = weights[static_cast<std::size_t>(i)] * total;
        counts[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(exact));
        assigned += counts[static_cast<std::size_t>(i)];
        rema.emplace_back(exact - std::floor(exact), i);
    }
    std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int i = 0; assigned < total; ++i, ++assigned) {
        counts[static_cast<std::size_t>(rema[static_cast<std::size_t>(i % k)].second)] += 1;
    }
    return counts;
}

}  // namespace detail

// Order a sampled domain batch into a test stream. Iid order is a random
// permutation (exact when the stream consumes each sample once);
// class-correlated order emits runs of same-true-class samples of the given
// run length, with run order shuffled. The final ragged batch is kept.
inline std::vector<Batch> make_stream(const LabeledSet& data, const StreamSpec& spec, Rng rng) {
    spec.validate();
    require(data.size() >= 1, "make_stream: empty domain batch");
    const int classes = data.classes;

    std::vector<std::vector<int>> pools(static_cast<std::size_t>(classes));
    for (int i = 0; i < data.size(); ++i) {
        pools[static_cast<std::size_t>(data.truth[static_cast<std::size_t>(i)])].push_back(i);
    }
    for (auto& p : pools) rng.shuffle(p);

    std::vector<double> weights = spec.class_weights;
    if (weights.empty()) {
        weights.resize(static_cast<std::size_t>(classes));
        for (int c = 0; c < classes; ++c) {
            weights[static_cast<std::size_t>(c)] =
                static_cast<double>(pools[static_cast<std::size_t>(c)].size()) / data.size();
        }
    }
    require(static_cast<int>(weights.size()) == classes, "make_stream: weight count mismatch");
    const std::vector<int> counts = detail::apportion(weights, spec.length);

    // per-class index queues, recycling the pool when oversampled
    std::vector<std::vector<int>> queues(static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c) {
        const auto& pool = pools[static_cast<std::size_t>(c)];
        const int want = counts[static_cast<std::size_t>(c)];
        require(want == 0 || !pool.empty(), "make_stream: weighted class has no samples");
        for (int k = 0; k < want; ++k) {
            queues[static_cast<std::size_t>(c)].push_back(pool[static_cast<std::size_t>(k) % pool.size()]);
        }
    }

    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(spec.length));
    if (spec.order == StreamOrder::Iid) {
        for (const auto& q : queues) order.insert(order.end(), q.begin(), q.end());
        rng.shuffle(order);
    } else {
        struct Run {
            int cls;
            int begin, end;
        };
        std::vector<Run> runs;
        for (int c = 0; c < classes; ++c) {
            const int total = static_cast<int>(queues[static_cast<std::size_t>(c)].size());
            for (int b = 0; b < total; b += spec.run_length) {
                runs.push_back({c, b, std::min(b + spec.run_length, total)});
            }
        }
        rng.shuffle(runs);
        for (const Run& r : runs) {
            for (int k = r.begin; k < r.end; ++k) {
                order.push_back(queues[static_cast<std::size_t>(r.cls)][static_cast<std::size_t>(k)]);
            }
        }
    }

    std::vector<Batch> batches;
    for (int begin = 0; begin < static_cast<int>(order.size()); begin += spec.batch_size) {
        const int end = std::min<int>(begin + spec.batch_size, static_cast<int>(order.size()));
        std::vector<int> idx(order.begin() + begin, order.begin() + end);
        const LabeledSet sl = data.take(idx);
        batches.push_back(Batch{sl.x, sl.observed, sl.truth});
    }
    return batches;
}

}  // namespace ttalab
