#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

#include "ttalab/matrix.hpp"

namespace ttalab {

enum class OptimizerKind { Sgd, Adam };

inline OptimizerKind optimizer_from_name(const std::string& s) {
    if (s == "sgd") return OptimizerKind::Sgd;
    if (s == "adam") return OptimizerKind::Adam;
    throw std::invalid_argument("unknown optimizer: " + s);
}

// Per-parameter-slot first-order optimizer used by the adaptation steps.
// State is keyed by slot index, so two adapters fed identical gradient
// sequences update parameters bit-identically.
class GradOptimizer {
public:
    GradOptimizer(OptimizerKind kind, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : kind_(kind), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void apply(Matrix& param, int slot, const Matrix& grad) {
        require(param.same_shape(grad), "GradOptimizer: gradient shape mismatch");
        if (kind_ == OptimizerKind::Sgd) {
            axpy_inplace(param, -lr_, grad);
            return;
        }
        State& st = state_[slot];
        if (st.m.empty()) {
            st.m = Matrix(param.rows(), param.cols());
            st.v = Matrix(param.rows(), param.cols());
        }
        st.t += 1;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(st.t));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(st.t));
        for (std::size_t k = 0; k < param.size(); ++k) {
            const double g = grad.data()[k];
            double& m = st.m.data()[k];
            double& v = st.v.data()[k];
            m = beta1_ * m + (1.0 - beta1_) * g;
            v = beta2_ * v + (1.0 - beta2_) * g * g;
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            param.data()[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }

    double lr() const noexcept { return lr_; }
    OptimizerKind kind() const noexcept { return kind_; }

private:
    struct State {
        Matrix m, v;
        long t = 0;
    };
    OptimizerKind kind_;
    double lr_, beta1_, beta2_, eps_;
    std::map<int, State> state_;
};

}  // namespace ttalab
