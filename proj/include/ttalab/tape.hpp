#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ttalab/matrix.hpp"
#include "ttalab/prob.hpp"

namespace ttalab {

using ValueId = int;

// Reverse-mode tape over a fixed op vocabulary: the affine / normalization /
// nonlinearity layers of the models plus the scalar losses the adapters
// minimize. Not a general autodiff graph; every op is recorded by value and
// backward closures replay in reverse recording order.
class Tape {
public:
    ValueId leaf(Matrix value, bool needs_grad = false) {
        return add_node(std::move(value), needs_grad, {}, nullptr);
    }

    const Matrix& value(ValueId id) const { return node(id).value; }

    bool tracked(ValueId id) const { return node(id).needs; }

    // Gradient of the last backward()'s loss w.r.t. this node.
    const Matrix& grad(ValueId id) const {
        const Node& n = node(id);
        if (!n.needs) throw std::invalid_argument("Tape::grad: slot does not require gradients");
        if (!n.grad_init) throw std::invalid_argument("Tape::grad: no backward pass reached this slot");
        return n.grad;
    }

    bool has_grad(ValueId id) const { return node(id).grad_init; }

    void add_grad(ValueId id, const Matrix& g) {
        Node& n = node_mut(id);
        if (!n.needs) return;
        if (!n.grad_init) {
            n.grad = Matrix(n.value.rows(), n.value.cols());
            n.grad_init = true;
        }
        add_inplace(n.grad, g);
    }

    // C = A * B
    ValueId matmul(ValueId a, ValueId b) {
        Matrix c = ttalab::matmul(value(a), value(b));
        return add_node(std::move(c), node(a).needs || node(b).needs, {a, b},
                        [a, b](Tape& t, ValueId self) {
                            const Matrix& dc = t.grad(self);
                            if (t.tracked(a)) t.add_grad(a, ttalab::matmul(dc, transpose(t.value(b))));
                            if (t.tracked(b)) t.add_grad(b, ttalab::matmul(transpose(t.value(a)), dc));
                        });
    }

    // Y = X + broadcast row bias
    ValueId add_row(ValueId x, ValueId bias) {
        Matrix y = value(x);
        add_row_inplace(y, value(bias));
        return add_node(std::move(y), node(x).needs || node(bias).needs, {x, bias},
                        [x, bias](Tape& t, ValueId self) {
                            const Matrix& dy = t.grad(self);
                            if (t.tracked(x)) t.add_grad(x, dy);
                            if (t.tracked(bias)) t.add_grad(bias, col_sums(dy));
                        });
    }

    ValueId relu(ValueId x) {
        Matrix y = value(x);
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y.data()[i] < 0.0) y.data()[i] = 0.0;
        }
        return add_node(std::move(y), node(x).needs, {x},
                        [x](Tape& t, ValueId self) {
                            if (!t.tracked(x)) return;
                            const Matrix& dy = t.grad(self);
                            const Matrix& xv = t.value(x);
                            Matrix dx(xv.rows(), xv.cols());
                            for (std::size_t i = 0; i < dx.size(); ++i) {
                                dx.data()[i] = xv.data()[i] > 0.0 ? dy.data()[i] : 0.0;
                            }
                            t.add_grad(x, dx);
                        });
    }

    ValueId sum_all(ValueId x) {
        double s = 0.0;
        const Matrix& xv = value(x);
        for (std::size_t i = 0; i < xv.size(); ++i) s += xv.data()[i];
        Matrix y(1, 1, s);
        return add_node(std::move(y), node(x).needs, {x},
                        [x](Tape& t, ValueId self) {
                            if (!t.tracked(x)) return;
                            const double d = t.grad(self)(0, 0);
                            const Matrix& xv = t.value(x);
                            Matrix dx(xv.rows(), xv.cols(), d);
                            t.add_grad(x, dx);
                        });
    }

    // scalar combine: ca*a + cb*b
    ValueId add_scaled(ValueId a, ValueId b, double ca, double cb) {
        require(value(a).size() == 1 && value(b).size() == 1, "add_scaled: scalar nodes expected");
        Matrix y(1, 1, ca * value(a)(0, 0) + cb * value(b)(0, 0));
        return add_node(std::move(y), node(a).needs || node(b).needs, {a, b},
                        [a, b, ca, cb](Tape& t, ValueId self) {
                            const double d = t.grad(self)(0, 0);
                            if (t.tracked(a)) t.add_grad(a, Matrix(1, 1, ca * d));
                            if (t.tracked(b)) t.add_grad(b, Matrix(1, 1, cb * d));
                        });
    }

    // sum_i w_i * H(softmax(logits_i)); the weights are data, not tape nodes.
    ValueId weighted_entropy(ValueId logits, std::vector<double> weights) {
        const Matrix& lv = value(logits);
        require(static_cast<int>(weights.size()) == lv.rows(), "weighted_entropy: weight count mismatch");
        Matrix p = softmax(lv);
        double loss = 0.0;
        std::vector<double> h(static_cast<std::size_t>(p.rows()));
        for (int i = 0; i < p.rows(); ++i) {
            h[static_cast<std::size_t>(i)] = entropy_of(p.row(i));
            loss += weights[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(i)];
        }
        return add_node(Matrix(1, 1, loss), node(logits).needs, {logits},
                        [logits, p = std::move(p), h = std::move(h), w = std::move(weights)](
                            Tape& t, ValueId self) {
                            if (!t.tracked(logits)) return;
                            const double d = t.grad(self)(0, 0);
                            Matrix dl(p.rows(), p.cols());
                            for (int i = 0; i < p.rows(); ++i) {
                                const double wi = w[static_cast<std::size_t>(i)];
                                if (wi == 0.0) continue;
                                const double hi = h[static_cast<std::size_t>(i)];
                                for (int j = 0; j < p.cols(); ++j) {
                                    const double pij = p(i, j);
                                    if (pij <= 0.0) continue;
                                    dl(i, j) = -d * wi * pij * (std::log(pij) + hi);
                                }
                            }
                            t.add_grad(logits, dl);
                        });
    }

    // sum_i w_i * CE(targets_i, softmax(logits_i)) with soft targets rows
    // summing to 1. Targets and weights are data.
    ValueId soft_cross_entropy(ValueId logits, Matrix targets, std::vector<double> weights) {
        const Matrix& lv = value(logits);
        require(targets.same_shape(lv), "soft_cross_entropy: target shape mismatch");
        require(static_cast<int>(weights.size()) == lv.rows(), "soft_cross_entropy: weight count mismatch");
        Matrix p = softmax(lv);
        double loss = 0.0;
        for (int i = 0; i < p.rows(); ++i) {
            const double wi = weights[static_cast<std::size_t>(i)];
            if (wi == 0.0) continue;
            double ce = 0.0;
            for (int j = 0; j < p.cols(); ++j) {
                const double tij = targets(i, j);
                if (tij == 0.0) continue;
                ce -= tij * std::log(std::max(p(i, j), 1e-300));
            }
            loss += wi * ce;
        }
        return add_node(Matrix(1, 1, loss), node(logits).needs, {logits},
                        [logits, p = std::move(p), tg = std::move(targets), w = std::move(weights)](
                            Tape& t, ValueId self) {
                            if (!t.tracked(logits)) return;
                            const double d = t.grad(self)(0, 0);
                            Matrix dl(p.rows(), p.cols());
                            for (int i = 0; i < p.rows(); ++i) {
                                const double wi = w[static_cast<std::size_t>(i)];
                                if (wi == 0.0) continue;
                                double tsum = 0.0;
                                for (int j = 0; j < p.cols(); ++j) tsum += tg(i, j);
                                for (int j = 0; j < p.cols(); ++j) {
                                    dl(i, j) = d * wi * (tsum * p(i, j) - tg(i, j));
                                }
                            }
                            t.add_grad(logits, dl);
                        });
    }

    // H(mean_i softmax(logits_i)) — the diversity term of information
    // maximization.
    ValueId entropy_of_mean(ValueId logits) {
        Matrix p = softmax(value(logits));
        Matrix pbar = col_means(p);
        const double loss = entropy_of(pbar.row(0));
        return add_node(Matrix(1, 1, loss), node(logits).needs, {logits},
                        [logits, p = std::move(p), pbar = std::move(pbar)](Tape& t, ValueId self) {
                            if (!t.tracked(logits)) return;
                            const double d = t.grad(self)(0, 0);
                            const int rows = p.rows();
                            const int cols = p.cols();
                            std::vector<double> logpbar(static_cast<std::size_t>(cols));
                            for (int j = 0; j < cols; ++j) {
                                logpbar[static_cast<std::size_t>(j)] = std::log(std::max(pbar(0, j), 1e-300));
                            }
                            Matrix dl(rows, cols);
                            for (int i = 0; i < rows; ++i) {
                                double inner = 0.0;
                                for (int c = 0; c < cols; ++c) {
                                    inner += p(i, c) * logpbar[static_cast<std::size_t>(c)];
                                }
                                for (int j = 0; j < cols; ++j) {
                                    dl(i, j) = d * (p(i, j) / rows) * (inner - logpbar[static_cast<std::size_t>(j)]);
                                }
                            }
                            t.add_grad(logits, dl);
                        });
    }

    // Escape hatch for composite layers (normalization variants) defined
    // outside this header.
    ValueId custom(Matrix value, const std::vector<ValueId>& parents,
                   std::function<void(Tape&, ValueId)> backward) {
        return add_node(std::move(value), false, parents, std::move(backward));
    }

    // Reverse sweep from a scalar loss node. Gradients accumulate; slots not
    // reachable from the loss keep no gradient.
    void backward(ValueId loss) {
        Node& ln = node_mut(loss);
        require(ln.value.size() == 1, "Tape::backward: loss must be scalar");
        if (!ln.needs) return;
        ln.grad = Matrix(1, 1, 1.0);
        ln.grad_init = true;
        for (int id = loss; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.needs && n.grad_init && n.back) n.back(*this, id);
        }
    }

    std::size_t node_count() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool needs = false;
        bool grad_init = false;
        std::function<void(Tape&, ValueId)> back;
    };

    ValueId add_node(Matrix value, bool needs, const std::vector<ValueId>& parents,
                     std::function<void(Tape&, ValueId)> back) {
        for (ValueId p : parents) needs = needs || node(p).needs;
        nodes_.push_back(Node{std::move(value), Matrix(), needs, false, std::move(back)});
        return static_cast<ValueId>(nodes_.size()) - 1;
    }

    const Node& node(ValueId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
            throw std::invalid_argument("Tape: slot not on tape");
        }
        return nodes_[static_cast<std::size_t>(id)];
    }
    Node& node_mut(ValueId id) {
        if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
            throw std::invalid_argument("Tape: slot not on tape");
        }
        return nodes_[static_cast<std::size_t>(id)];
    }

    std::vector<Node> nodes_;
};

}  // namespace ttalab
