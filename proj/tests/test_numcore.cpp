#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "ttalab/matrix.hpp"
#include "ttalab/model.hpp"
#include "ttalab/prob.hpp"
#include "ttalab/rng.hpp"
#include "ttalab/tape.hpp"

using namespace ttalab;

TEST_CASE("matrix basics") {
    Matrix m = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
    CHECK(m.rows() == 3);
    CHECK(m.cols() == 2);
    CHECK(m(2, 1) == 6);

    Matrix t = transpose(m);
    CHECK(t(1, 2) == 6);

    Matrix p = matmul(m, t);
    CHECK(p(0, 0) == doctest::Approx(5));
    CHECK(p(0, 2) == doctest::Approx(17));

    CHECK_THROWS(matmul(m, m));
    CHECK(m.all_finite());
    m(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(m.all_finite());
}

TEST_CASE("rng reproducibility and splitting") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    Rng c(42), d(43);
    int same = 0;
    for (int i = 0; i < 64; ++i) {
        if (c.next_u64() == d.next_u64()) ++same;
    }
    CHECK(same == 0);

    // split streams are decoupled from the parent's draw position
    Rng parent(7);
    Rng s1 = parent.split(1);
    parent.uniform();
    parent.uniform();
    Rng s2 = parent.split(1);
    CHECK(s1.next_u64() == s2.next_u64());
    CHECK(parent.split(1).next_u64() != parent.split(2).next_u64());

    Rng e(9);
    for (int i = 0; i < 10000; ++i) {
        const double u = e.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("rng normal moments") {
    Rng rng(5);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        sum += v;
        sq += v * v;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("softmax examples") {
    Matrix l = Matrix::from_rows({{0, 0, 0}});
    Matrix p = softmax(l);
    for (int j = 0; j < 3; ++j) CHECK(p(0, j) == doctest::Approx(1.0 / 3));

    Matrix big = Matrix::from_rows({{1000, 0}});
    Matrix pb = softmax(big);
    CHECK(pb(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pb(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(pb.all_finite());

    Matrix ln2 = Matrix::from_rows({{std::log(2.0), 0.0}});
    Matrix p2 = softmax(ln2);
    CHECK(p2(0, 0) == doctest::Approx(2.0 / 3).epsilon(1e-12));
    CHECK(p2(0, 1) == doctest::Approx(1.0 / 3).epsilon(1e-12));

    Matrix bad = Matrix::from_rows({{1.0, std::numeric_limits<double>::infinity()}});
    CHECK_THROWS(softmax(bad));
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix l = testutil::random_matrix(4, 6, rng, 3.0);
        Matrix p = softmax(l);
        Matrix shifted = l;
        for (int i = 0; i < l.rows(); ++i) {
            const double c = rng.normal() * 10.0;
            for (int j = 0; j < l.cols(); ++j) shifted(i, j) += c;
        }
        Matrix ps = softmax(shifted);
        for (int i = 0; i < p.rows(); ++i) {
            double s = 0.0;
            for (int j = 0; j < p.cols(); ++j) {
                s += p(i, j);
                CHECK(p(i, j) >= 0.0);
                CHECK(std::abs(p(i, j) - ps(i, j)) < 1e-9);
            }
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("entropy examples") {
    Matrix onehot = Matrix::from_rows({{0, 1, 0, 0}});
    CHECK(entropy_rows(onehot)[0] == doctest::Approx(0.0));

    Matrix uni7(1, 7, 1.0 / 7);
    CHECK(entropy_rows(uni7)[0] == doctest::Approx(std::log(7.0)).epsilon(1e-12));
    CHECK(entropy_rows(uni7)[0] == doctest::Approx(1.94591).epsilon(1e-5));

    Matrix half = Matrix::from_rows({{0.5, 0.5, 0, 0}});
    CHECK(entropy_rows(half)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Matrix bad = Matrix::from_rows({{0.5, 0.6}});
    CHECK_THROWS(entropy_rows(bad));
    Matrix neg = Matrix::from_rows({{1.2, -0.2}});
    CHECK_THROWS(entropy_rows(neg));
}

TEST_CASE("entropy of softmax peaks exactly at equal logits") {
    const int c = 5;
    Matrix equal(1, c, 0.37);
    CHECK(entropy_rows(softmax(equal))[0] == doctest::Approx(std::log(5.0)).epsilon(1e-12));

    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix l = testutil::random_matrix(1, c, rng, 0.5);
        // skip the measure-zero case of perfectly equal logits
        double spread = 0.0;
        for (int j = 0; j < c; ++j) spread = std::max(spread, std::abs(l(0, j) - l(0, 0)));
        if (spread < 1e-12) continue;
        CHECK(entropy_rows(softmax(l))[0] < std::log(5.0));
    }
}

TEST_CASE("cosine examples") {
    std::vector<double> a = {1, 2, 3};
    std::vector<double> b = {-1, -2, -3};
    std::vector<double> e1 = {1, 0, 0};
    std::vector<double> e2 = {0, 1, 0};
    std::vector<double> zero = {0, 0, 0};
    CHECK(cosine(a, a) == doctest::Approx(1.0));
    CHECK(cosine(e1, e2) == doctest::Approx(0.0));
    CHECK(cosine(a, b) == doctest::Approx(-1.0));
    CHECK_THROWS(cosine(a, zero));
}

TEST_CASE("tape: linear loss gradient has outer-product structure") {
    // loss = sum(X*W); dL/dW = X^T * ones
    Rng rng(21);
    Matrix xv = testutil::random_matrix(3, 4, rng);
    Matrix wv = testutil::random_matrix(4, 2, rng);

    Tape tape;
    ValueId x = tape.leaf(xv, false);
    ValueId w = tape.leaf(wv, true);
    ValueId y = tape.matmul(x, w);
    ValueId loss = tape.sum_all(y);
    tape.backward(loss);

    const Matrix& g = tape.grad(w);
    for (int k = 0; k < 4; ++k) {
        double colsum = 0.0;
        for (int i = 0; i < 3; ++i) colsum += xv(i, k);
        for (int j = 0; j < 2; ++j) CHECK(g(k, j) == doctest::Approx(colsum).epsilon(1e-12));
    }

    CHECK_THROWS(tape.grad(x));       // not requested
    CHECK_THROWS(tape.grad(9999));    // not on tape
}

TEST_CASE("tape: entropy of softmax is stationary at uniform logits") {
    Tape tape;
    ValueId logits = tape.leaf(Matrix(2, 5, 0.0), true);
    ValueId loss = tape.weighted_entropy(logits, {0.5, 0.5});
    CHECK(tape.value(loss)(0, 0) == doctest::Approx(std::log(5.0)));
    tape.backward(loss);
    const Matrix& g = tape.grad(logits);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(g.data()[i]) < 1e-12);
}

TEST_CASE("tape ops match finite differences directly") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix lv = testutil::random_matrix(4, 5, rng, 2.0);
        Matrix targets = softmax(testutil::random_matrix(4, 5, rng, 1.0));
        std::vector<double> w = {0.3, 0.0, 0.45, 0.25};

        SUBCASE("") {}
        // weighted entropy
        {
            auto loss = [&] {
                Matrix p = softmax(lv);
                double s = 0.0;
                for (int i = 0; i < 4; ++i) s += w[static_cast<std::size_t>(i)] * entropy_of(p.row(i));
                return s;
            };
            Matrix fd = testutil::fd_gradient(loss, lv);
            Tape t;
            ValueId l = t.leaf(lv, true);
            t.backward(t.weighted_entropy(l, w));
            CHECK(testutil::rel_gradient_error(t.grad(l), fd) < 1e-6);
        }
        // soft cross entropy
        {
            auto loss = [&] {
                Matrix p = softmax(lv);
                double s = 0.0;
                for (int i = 0; i < 4; ++i) {
                    double ce = 0.0;
                    for (int j = 0; j < 5; ++j) ce -= targets(i, j) * std::log(p(i, j));
                    s += w[static_cast<std::size_t>(i)] * ce;
                }
                return s;
            };
            Matrix fd = testutil::fd_gradient(loss, lv);
            Tape t;
            ValueId l = t.leaf(lv, true);
            t.backward(t.soft_cross_entropy(l, targets, w));
            CHECK(testutil::rel_gradient_error(t.grad(l), fd) < 1e-6);
        }
        // entropy of the mean prediction
        {
            auto loss = [&] {
                Matrix p = softmax(lv);
                Matrix pbar = col_means(p);
                return entropy_of(pbar.row(0));
            };
            Matrix fd = testutil::fd_gradient(loss, lv);
            Tape t;
            ValueId l = t.leaf(lv, true);
            t.backward(t.entropy_of_mean(l));
            CHECK(testutil::rel_gradient_error(t.grad(l), fd) < 1e-6);
        }
    }
}

TEST_CASE("model gradients match finite differences for every layer type") {
    // 100 random instances spread over the norm variants; checks every slot
    // the adapters ever update.
    const struct {
        NormKind kind;
        StatsMode mode;
        double kappa;
    } cases[] = {
        {NormKind::LayerNorm, StatsMode::Eval, 4.0},
        {NormKind::BatchNorm, StatsMode::Train, 4.0},
        {NormKind::BatchNorm, StatsMode::Eval, 4.0},
        {NormKind::IABN, StatsMode::Eval, 0.0},
        {NormKind::IABN, StatsMode::Eval, 100.0},
        {NormKind::RBN, StatsMode::Eval, 4.0},
    };
    Rng rng(101);
    int instances = 0;
    for (const auto& c : cases) {
        for (int trial = 0; trial < 17 && instances < 100; ++trial, ++instances) {
            auto inst = testutil::make_fd_instance(c.kind, c.kappa, rng, c.mode);
            Model& m = inst.model;
            const Matrix x = inst.x;
            const std::vector<char> mask = m.group_mask(ParamSelect::All);

            Tape tape;
            testutil::StatsGuard guard(m);
            Forward f = m.forward(x, c.mode, &tape, &mask);
            std::vector<double> w(static_cast<std::size_t>(x.rows()), 1.0 / x.rows());
            ValueId loss = tape.weighted_entropy(f.logits_id, w);
            tape.backward(loss);
            // finite differences must see the same normalization state the
            // analytic pass consumed
            guard.restore();

            for (int s = 0; s < m.slot_count(); ++s) {
                Matrix analytic = tape.has_grad(f.slots[static_cast<std::size_t>(s)])
                                      ? tape.grad(f.slots[static_cast<std::size_t>(s)])
                                      : Matrix(m.slot(s).rows(), m.slot(s).cols());
                auto eval = [&] {
                    testutil::StatsGuard g2(m);
                    Forward ff = m.forward(x, c.mode);
                    Matrix p = softmax(ff.logits);
                    double sum = 0.0;
                    for (int i = 0; i < p.rows(); ++i) sum += entropy_of(p.row(i)) / p.rows();
                    return sum;
                };
                Matrix fd = testutil::fd_gradient(eval, m.slot(s));
                CHECK(testutil::rel_gradient_error(analytic, fd) < 1e-4);
            }
        }
    }
    CHECK(instances >= 100);
}

TEST_CASE("two-layer net: entropy gradient w.r.t. norm affine matches finite differences") {
    Rng rng(77);
    auto inst = testutil::make_fd_instance(NormKind::LayerNorm, 4.0, rng);
    Model& m = inst.model;
    const std::vector<char> mask = m.group_mask(ParamSelect::NormAffineOnly);

    Tape tape;
    Forward f = m.forward(inst.x, StatsMode::Eval, &tape, &mask);
    std::vector<double> w(static_cast<std::size_t>(inst.x.rows()), 1.0 / inst.x.rows());
    tape.backward(tape.weighted_entropy(f.logits_id, w));

    for (int s = 0; s < m.slot_count(); ++s) {
        if (!mask[static_cast<std::size_t>(s)]) continue;
        auto eval = [&] {
            Forward ff = m.forward(inst.x, StatsMode::Eval);
            Matrix p = softmax(ff.logits);
            double sum = 0.0;
            for (int i = 0; i < p.rows(); ++i) sum += entropy_of(p.row(i)) / p.rows();
            return sum;
        };
        Matrix fd = testutil::fd_gradient(eval, m.slot(s));
        CHECK(testutil::rel_gradient_error(tape.grad(f.slots[static_cast<std::size_t>(s)]), fd) < 1e-4);
    }
}
