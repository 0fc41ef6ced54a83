// Acceptance suite: every criterion prints one [PASS]/[FAIL] line; the
// process exits nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "ttalab/adapters.hpp"
#include "ttalab/harness.hpp"
#include "ttalab/report.hpp"
#include "ttalab/shiftlab.hpp"
#include "ttalab/similarity.hpp"

using namespace ttalab;

namespace {

int g_failures = 0;

void report(int number, const std::string& what, bool ok, const std::string& detail) {
    std::printf("[%s] C%d %s: %s\n", ok ? "PASS" : "FAIL", number, what.c_str(), detail.c_str());
    if (!ok) ++g_failures;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// C1: analytic gradients vs central finite differences for every layer type
// and every gradient-based adaptation loss.

double fisher_penalty_value(Model& m, const FisherInfo& fisher, double lambda,
                            const std::vector<Matrix>& anchor) {
    double v = 0.0;
    for (int s = 0; s < m.slot_count(); ++s) {
        const Matrix& o = fisher.omega[static_cast<std::size_t>(s)];
        const Matrix& a = anchor[static_cast<std::size_t>(s)];
        const Matrix& p = m.slot(s);
        for (std::size_t k = 0; k < o.size(); ++k) {
            const double d = p.data()[k] - a.data()[k];
            v += lambda * o.data()[k] * d * d;
        }
    }
    return v;
}

void criterion1() {
    const auto t0 = std::chrono::steady_clock::now();
    struct LayerCase {
        NormKind kind;
        StatsMode mode;
        double kappa;
        const char* name;
    };
    const LayerCase layer_cases[] = {
        {NormKind::LayerNorm, StatsMode::Eval, 4.0, "layernorm"},
        {NormKind::BatchNorm, StatsMode::Train, 4.0, "batchnorm-train"},
        {NormKind::BatchNorm, StatsMode::Eval, 4.0, "batchnorm-eval"},
        {NormKind::IABN, StatsMode::Eval, 0.0, "iabn-active"},
        {NormKind::IABN, StatsMode::Eval, 100.0, "iabn-deadzone"},
        {NormKind::RBN, StatsMode::Eval, 4.0, "rbn"},
    };
    enum class Loss { Entropy, EntropyFisher, Shot, SoftCe };
    const Loss losses[] = {Loss::Entropy, Loss::EntropyFisher, Loss::Shot, Loss::SoftCe};

    Rng rng(20260808);
    int instances = 0;
    int checked_slots = 0;
    double worst = 0.0;
    std::string worst_at;

    for (const LayerCase& lc : layer_cases) {
        for (const Loss loss : losses) {
            for (int trial = 0; trial < 5; ++trial) {
                auto inst = testutil::make_fd_instance(lc.kind, lc.kappa, rng, lc.mode);
                Model& m = inst.model;
                const Matrix& x = inst.x;
                const int b = x.rows();
                const std::vector<char> mask = m.group_mask(ParamSelect::All);
                const std::vector<double> uniform(static_cast<std::size_t>(b), 1.0 / b);

                // frozen auxiliaries, exactly as the adapters hold them fixed
                std::vector<double> weights = uniform;
                Matrix targets;
                std::vector<int> pseudo;
                FisherInfo fisher;
                std::vector<Matrix> anchor;
                const double lambda = 0.7;
                const double beta = 0.3;
                {
                    testutil::StatsGuard guard(m);
                    Forward f0 = m.forward(x, lc.mode);
                    const Matrix p0 = softmax(f0.logits);
                    if (loss == Loss::Entropy || loss == Loss::EntropyFisher) {
                        // entropy filter mask (SAR/EATA style), frozen
                        const auto h = entropy_rows(p0);
                        const double e0 = 0.9 * std::log(static_cast<double>(m.classes()));
                        for (int i = 0; i < b; ++i) {
                            weights[static_cast<std::size_t>(i)] =
                                h[static_cast<std::size_t>(i)] < e0 ? 1.0 / b : 0.0;
                        }
                    }
                    if (loss == Loss::Shot) pseudo = shot_pseudo_labels(f0.features, p0);
                    if (loss == Loss::SoftCe) {
                        targets = softmax(testutil::random_matrix(b, m.classes(), rng, 1.0));
                        double wsum = 0.0;
                        for (int i = 0; i < b; ++i) {
                            weights[static_cast<std::size_t>(i)] = 0.5 + rng.uniform();
                            wsum += weights[static_cast<std::size_t>(i)];
                        }
                        for (double& wv : weights) wv /= wsum;
                    }
                    if (loss == Loss::EntropyFisher) {
                        for (int s = 0; s < m.slot_count(); ++s) {
                            Matrix o(m.slot(s).rows(), m.slot(s).cols());
                            Matrix a = m.slot(s);
                            for (std::size_t k = 0; k < o.size(); ++k) {
                                o.data()[k] = std::abs(rng.normal());
                                a.data()[k] += 0.2 * rng.normal();
                            }
                            fisher.omega.push_back(std::move(o));
                            anchor.push_back(std::move(a));
                        }
                    }
                }

                auto loss_value = [&]() {
                    testutil::StatsGuard guard(m);
                    switch (loss) {
                        case Loss::Entropy:
                            return weighted_entropy_loss_value(m, x, weights, lc.mode);
                        case Loss::EntropyFisher:
                            return weighted_entropy_loss_value(m, x, weights, lc.mode) +
                                   fisher_penalty_value(m, fisher, lambda, anchor);
                        case Loss::Shot:
                            return shot_loss_value(m, x, pseudo, beta, lc.mode);
                        case Loss::SoftCe: {
                            Forward f = m.forward(x, lc.mode);
                            const Matrix p = softmax(f.logits);
                            double v = 0.0;
                            for (int i = 0; i < b; ++i) {
                                double ce = 0.0;
                                for (int c = 0; c < m.classes(); ++c) {
                                    if (targets(i, c) > 0.0) {
                                        ce -= targets(i, c) * std::log(std::max(p(i, c), 1e-300));
                                    }
                                }
                                v += weights[static_cast<std::size_t>(i)] * ce;
                            }
                            return v;
                        }
                    }
                    return 0.0;
                };

                // analytic gradients for the same objective
                Tape tape;
                testutil::StatsGuard guard(m);
                Forward f = m.forward(x, lc.mode, &tape, &mask);
                ValueId loss_id = -1;
                switch (loss) {
                    case Loss::Entropy:
                    case Loss::EntropyFisher:
                        loss_id = tape.weighted_entropy(f.logits_id, weights);
                        break;
                    case Loss::Shot: {
                        const ValueId mean_h = tape.weighted_entropy(f.logits_id, uniform);
                        const ValueId div_h = tape.entropy_of_mean(f.logits_id);
                        const ValueId im = tape.add_scaled(mean_h, div_h, 1.0, -1.0);
                        const ValueId ce = tape.soft_cross_entropy(
                            f.logits_id, one_hot(pseudo, m.classes()), uniform);
                        loss_id = tape.add_scaled(im, ce, 1.0, beta);
                        break;
                    }
                    case Loss::SoftCe:
                        loss_id = tape.soft_cross_entropy(f.logits_id, targets, weights);
                        break;
                }
                tape.backward(loss_id);
                guard.restore();

                for (int s = 0; s < m.slot_count(); ++s) {
                    const ValueId id = f.slots[static_cast<std::size_t>(s)];
                    Matrix analytic = tape.has_grad(id)
                                          ? tape.grad(id)
                                          : Matrix(m.slot(s).rows(), m.slot(s).cols());
                    if (loss == Loss::EntropyFisher) {
                        const Matrix& o = fisher.omega[static_cast<std::size_t>(s)];
                        const Matrix& a = anchor[static_cast<std::size_t>(s)];
                        const Matrix& p = m.slot(s);
                        for (std::size_t k = 0; k < analytic.size(); ++k) {
                            analytic.data()[k] += 2.0 * lambda * o.data()[k] * (p.data()[k] - a.data()[k]);
                        }
                    }
                    const Matrix fd = testutil::fd_gradient(loss_value, m.slot(s));
                    const double err = testutil::rel_gradient_error(analytic, fd);
                    ++checked_slots;
                    if (err > worst) {
                        worst = err;
                        worst_at = std::string(lc.name) + "/loss" +
                                   std::to_string(static_cast<int>(loss)) + "/slot" + std::to_string(s);
                    }
                }
                ++instances;
            }
        }
    }
    char detail[256];
    std::snprintf(detail, sizeof(detail),
                  "%d instances, %d slot checks, worst rel err %.2e at %s (tol 1e-4), %.1fs",
                  instances, checked_slots, worst, worst_at.c_str(), elapsed_s(t0));
    report(1, "gradient correctness", instances >= 100 && worst < 1e-4, detail);
}

// ---------------------------------------------------------------------------
// C2: MMD brute-force oracle equivalence and the exact self-similarity.

void criterion2() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(77);
    double worst = 0.0;
    int pairs = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int m = 2 + rng.below(49);
        const int n = 2 + rng.below(49);
        const int d = 1 + rng.below(8);
        const Matrix x = testutil::random_matrix(m, d, rng, 1.5);
        const Matrix y = testutil::random_matrix(n, d, rng, 1.5);
        MmdConfig cfg;
        cfg.sigma_sq = 0.5 + 4.0 * rng.uniform();
        cfg.estimator = MmdEstimator::Biased;
        worst = std::max(worst, std::abs(mmd_squared(x, y, cfg) -
                                         testutil::brute_force_mmd2(x, y, cfg.sigma_sq, true)));
        cfg.estimator = MmdEstimator::Unbiased;
        worst = std::max(worst, std::abs(mmd_squared(x, y, cfg) -
                                         testutil::brute_force_mmd2(x, y, cfg.sigma_sq, false)));
        pairs += 2;
    }
    bool self_exact = true;
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix x = testutil::random_matrix(3 + rng.below(40), 1 + rng.below(6), rng);
        MmdConfig cfg;
        cfg.sigma_sq = 1.0 + rng.uniform();
        const SimilarityResult r = similarity_score(x, x, cfg);
        self_exact = self_exact && r.similarity == 1.0 && r.mmd2_raw == 0.0;
    }
    char detail[192];
    std::snprintf(detail, sizeof(detail),
                  "%d oracle pairs, worst |diff| %.2e (tol 1e-10); S(X,X)=1 exactly: %s; %.1fs",
                  pairs, worst, self_exact ? "yes" : "no", elapsed_s(t0));
    report(2, "mmd oracle equivalence", pairs == 200 && worst < 1e-10 && self_exact, detail);
}

// ---------------------------------------------------------------------------
// C3: similarity falls strictly with the injected offset; a random self-split
// stays close to 1.

void criterion3() {
    const auto t0 = std::chrono::steady_clock::now();
    DomainSpec s;
    s.name = "src";
    s.classes = 7;
    s.dim = 16;
    s.means = plane_means(7, 16, 2.8);
    s.cov_scale = 1.0;
    MmdConfig cfg;
    cfg.sigma_sq = 256.0;

    const LabeledSet src = sample_domain(s, 2000, Rng(5));
    bool strict = true;
    double prev = 2.0;
    std::ostringstream seq;
    for (double off : {0.0, 1.0, 2.0, 3.0, 5.0}) {
        const DomainSpec tgt = derive_target(s, ShiftTransform::uniform_offset(off, 16), 0.0);
        const LabeledSet td = sample_domain(tgt, 2000, Rng(6));
        const double sim = similarity_score(src.x, td.x, cfg).similarity;
        strict = strict && sim < prev;
        prev = sim;
        seq << ' ' << fmt_double(std::round(sim * 1e4) / 1e4);
    }

    double worst_split = 1.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const LabeledSet pool = sample_domain(s, 2000, Rng(60 + seed));
        std::vector<int> idx(2000);
        for (int i = 0; i < 2000; ++i) idx[static_cast<std::size_t>(i)] = i;
        Rng shuf(70 + seed);
        shuf.shuffle(idx);
        const LabeledSet a = pool.take({idx.begin(), idx.begin() + 1000});
        const LabeledSet b = pool.take({idx.begin() + 1000, idx.end()});
        worst_split = std::min(worst_split, similarity_score(a.x, b.x, cfg).similarity);
    }
    char detail[224];
    std::snprintf(detail, sizeof(detail),
                  "S over offsets {0,1,2,3,5}:%s strictly decreasing: %s; self-split min %.4f "
                  "(floor 0.98); %.1fs",
                  seq.str().c_str(), strict ? "yes" : "no", worst_split, elapsed_s(t0));
    report(3, "similarity monotonicity", strict && worst_split >= 0.98, detail);
}

// ---------------------------------------------------------------------------
// C4: method-reduction identities, all bit-exact.

struct Fixture {
    DomainSpec source, target;
    Model model;
    std::vector<Batch> stream;
};

Fixture make_fixture(NormKind kind, std::uint64_t seed = 11) {
    Fixture f;
    f.source.name = "src";
    f.source.classes = 7;
    f.source.dim = 16;
    f.source.means = plane_means(7, 16, 2.8);
    f.source.cov_scale = 1.0;
    f.source.label_noise = 0.1;
    f.target = derive_target(f.source, ShiftTransform::uniform_offset(1.5, 16, 0.15), 0.0);
    Rng root(seed);
    const LabeledSet train = sample_domain(f.source, 1200, root.split(1));
    const LabeledSet val = sample_domain(f.source, 300, root.split(2));
    ModelConfig mc;
    mc.input_dim = 16;
    mc.classes = 7;
    mc.width = 64;
    mc.blocks = 2;
    mc.norm = kind;
    f.model = Model::init(mc, root.split(3));
    PretrainConfig pc;
    pc.epochs = 12;
    pretrain(f.model, train, val, pc, root.split(4));
    const LabeledSet td = sample_domain(f.target, 256, root.split(5));
    StreamSpec ss;
    ss.length = 256;
    ss.batch_size = 16;
    f.stream = make_stream(td, ss, root.split(6));
    return f;
}

bool params_equal(const Model& a, const Model& b) {
    for (int s = 0; s < a.slot_count(); ++s) {
        if (!(a.slot(s) == b.slot(s))) return false;
    }
    return true;
}

void criterion4() {
    const auto t0 = std::chrono::steady_clock::now();
    Fixture f = make_fixture(NormKind::LayerNorm);

    // EATA with disabled filters and no anchor = TENT, bit-exact
    AdaptConfig open;
    open.e0_factor = std::numeric_limits<double>::infinity();
    open.eata_eps = 1.5;
    open.eata_lambda = 0.0;
    auto eata = make_adapter("eata", f.model, open, Rng(1));
    auto tent = make_adapter("tent", f.model, AdaptConfig{}, Rng(1));
    bool eata_tent = true;
    for (const Batch& b : f.stream) {
        eata_tent = eata_tent && eata->observe(b.x) == tent->observe(b.x);
    }
    eata_tent = eata_tent && params_equal(eata->model(), tent->model());

    // SAR at rho 0 = entropy-filtered kernel, bit-exact
    AdaptConfig srho;
    srho.sar_rho = 0.0;
    auto sar = make_adapter("sar", f.model, srho, Rng(2));
    AdaptConfig filt;
    filt.e0_factor = 0.4;
    filt.eata_eps = 1.5;
    filt.eata_lambda = 0.0;
    auto filtered = make_adapter("eata", f.model, filt, Rng(2));
    bool sar_tent = true;
    for (const Batch& b : f.stream) {
        sar_tent = sar_tent && sar->observe(b.x) == filtered->observe(b.x);
    }
    sar_tent = sar_tent && params_equal(sar->model(), filtered->model());

    // CoTTA with restore probability 1 pins the student to theta0
    AdaptConfig rst;
    rst.restore_prob = 1.0;
    auto cotta = make_adapter("cotta", f.model, rst, Rng(3));
    bool pinned = true;
    for (int b = 0; b < 8; ++b) {
        cotta->observe(f.stream[static_cast<std::size_t>(b)].x);
        for (int s = 0; s < f.model.slot_count(); ++s) {
            pinned = pinned &&
                     cotta->model().slot(s) == f.model.theta0()[static_cast<std::size_t>(s)];
        }
    }

    // T3A never touches model parameters
    auto t3a = make_adapter("t3a", f.model, AdaptConfig{}, Rng(4));
    for (const Batch& b : f.stream) t3a->observe(b.x);
    const bool frozen = params_equal(t3a->model(), f.model);

    char detail[224];
    std::snprintf(detail, sizeof(detail),
                  "eata==tent: %s; sar(rho=0)==filtered tent: %s; cotta p_rst=1 keeps theta0: %s; "
                  "t3a leaves parameters: %s; %.1fs",
                  eata_tent ? "yes" : "no", sar_tent ? "yes" : "no", pinned ? "yes" : "no",
                  frozen ? "yes" : "no", elapsed_s(t0));
    report(4, "method-reduction identities", eata_tent && sar_tent && pinned && frozen, detail);
}

// ---------------------------------------------------------------------------
// C5: repeated TENT steps on one fixed batch cut the mean entropy by >= 20%.

void criterion5() {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig cfg = default_suite();
    const Scenario* sc = nullptr;
    for (const auto& s : cfg.scenarios) {
        if (s.name == "off1.5-eta0.0-iid") sc = &s;
    }
    Rng root = Rng(1).split(stream_key(sc->name));
    const LabeledSet pool = harness_detail::sample_sources(sc->sources, cfg.train_per_source,
                                                           root.split(stream_key("source-data")));
    LabeledSet train, val;
    harness_detail::split_train_val(pool, cfg.val_fraction, root.split(stream_key("split")), train, val);
    ModelConfig mc;
    mc.input_dim = sc->target.dim;
    mc.classes = sc->target.classes;
    mc.width = cfg.model_width;
    mc.blocks = cfg.model_blocks;
    Model m = Model::init(mc, root.split(stream_key("init") + static_cast<std::uint64_t>(NormKind::LayerNorm)));
    pretrain(m, train, val, cfg.pretrain,
             root.split(stream_key("pretrain") + static_cast<std::uint64_t>(NormKind::LayerNorm)));
    const LabeledSet batch = sample_domain(sc->target, 16, root.split(stream_key("target-data")));

    auto tent = make_adapter("tent", m, cfg.adapt("tent"), root.split(stream_key("adapt")));
    double h0 = 0.0, hlast = 0.0;
    bool monotone = true;
    double prev = 0.0;
    for (int step = 0; step <= 50; ++step) {
        const Matrix p = tent->observe(batch.x);
        const auto h = entropy_rows(p);
        double mh = 0.0;
        for (double v : h) mh += v / static_cast<double>(h.size());
        if (step == 0) h0 = mh;
        if (step > 0 && mh > prev + 1e-9) monotone = false;
        prev = mh;
        hlast = mh;
    }
    const double cut = 1.0 - hlast / h0;
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "mean entropy %.4f -> %.4f over 50 steps (%.1f%% cut, floor 20%%), "
                  "non-increasing: %s; %.1fs",
                  h0, hlast, 100.0 * cut, monotone ? "yes" : "no", elapsed_s(t0));
    report(5, "tent objective descent", cut >= 0.20 && monotone, detail);
}

// ---------------------------------------------------------------------------
// C6: qualitative pattern of the 12-scenario suite, 3 seeds. The pattern
// checks read the iid scenarios (the cross-dataset protocol streams the test
// split in shuffled order; the correlated orders exist for the memory
// methods). Shared with C8, which reruns the full grid.

std::vector<RunReport> g_suite_reports;

void criterion6() {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig cfg = default_suite();
    g_suite_reports = run_bench(cfg, 4);
    const double wall = elapsed_s(t0);

    const Aggregate agg = aggregate(g_suite_reports);
    std::map<std::string, std::map<std::string, double>> cell;
    for (const CellStat& c : agg.cells) cell[c.scenario][c.method] = c.acc_mean;
    auto delta = [&](const char* m, const char* sc) {
        return 100.0 * (cell.at(sc).at(m) - cell.at(sc).at("baseline"));
    };

    const double a_tent = delta("tent", "off1.5-eta0.0-iid");
    const double a_sar = delta("sar", "off1.5-eta0.0-iid");
    const bool a_ok = std::max(a_tent, a_sar) >= 1.0;

    const double b_shot = (delta("shot", "off0.5-eta0.3-iid") + delta("shot", "off1.5-eta0.3-iid") +
                           delta("shot", "off3.0-eta0.3-iid")) /
                          3.0;
    const bool b_ok = b_shot >= 2.0;

    const double c_hi =
        (delta("t3a", "off3.0-eta0.0-iid") + delta("t3a", "off3.0-eta0.3-iid")) / 2.0;
    const double c_lo =
        (delta("t3a", "off0.5-eta0.0-iid") + delta("t3a", "off0.5-eta0.3-iid")) / 2.0;
    const bool c_ok = c_hi > c_lo;

    int failures = 0;
    for (const RunReport& r : g_suite_reports) failures += r.failed;

    char detail[288];
    std::snprintf(detail, sizeof(detail),
                  "(a) tent %+.2f / sar %+.2f pts at moderate clean shift (floor +1); "
                  "(b) shot %+.2f pts on noisy targets (floor +2); "
                  "(c) t3a %+.2f at largest vs %+.2f at smallest shift; "
                  "%d failed runs; wall %.0fs (budget 900s)",
                  a_tent, a_sar, b_shot, c_hi, c_lo, failures, wall);
    report(6, "qualitative pattern reproduction",
           a_ok && b_ok && c_ok && failures == 0 && wall < 900.0, detail);
}

// ---------------------------------------------------------------------------
// C7: balanced memory under a class-correlated stream beats the trailing
// window, per seed, for NOTE and RoTTA.

void criterion7() {
    const auto t0 = std::chrono::steady_clock::now();
    bool all_ok = true;
    std::ostringstream detail;
    for (const char* method : {"note", "rotta"}) {
        const NormKind kind = std::string(method) == "note" ? NormKind::IABN : NormKind::RBN;
        detail << method << ":";
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            Fixture f = make_fixture(kind, 100 + seed);
            const LabeledSet td = sample_domain(f.target, 1000, Rng(200 + seed));
            StreamSpec ss;
            ss.order = StreamOrder::ClassCorrelated;
            ss.run_length = 100;
            ss.length = 1000;
            ss.batch_size = 16;
            const auto stream = make_stream(td, ss, Rng(300 + seed));

            auto adapter = make_adapter(method, f.model, AdaptConfig{}, Rng(400 + seed));
            std::vector<int> predicted;
            for (const Batch& b : stream) {
                const Matrix p = adapter->observe(b.x);
                for (int i = 0; i < p.rows(); ++i) predicted.push_back(argmax_row(p, i));
            }
            std::vector<int> memory_hist;
            if (std::string(method) == "note") {
                memory_hist = dynamic_cast<NoteAdapter*>(adapter.get())->memory().class_histogram();
            } else {
                memory_hist = dynamic_cast<RottaAdapter*>(adapter.get())->memory().class_histogram();
            }
            int msize = 0;
            for (int c : memory_hist) msize += c;
            std::vector<int> window_hist(static_cast<std::size_t>(f.model.classes()), 0);
            for (std::size_t i = predicted.size() - static_cast<std::size_t>(msize);
                 i < predicted.size(); ++i) {
                window_hist[static_cast<std::size_t>(predicted[i])]++;
            }
            const double chi_mem = testutil::chi_square_vs_uniform(memory_hist);
            const double chi_win = testutil::chi_square_vs_uniform(window_hist);
            all_ok = all_ok && chi_mem < chi_win;
            char buf[64];
            std::snprintf(buf, sizeof(buf), " s%llu %.1f<%.1f", (unsigned long long)seed, chi_mem, chi_win);
            detail << buf;
        }
        detail << "  ";
    }
    char tail[32];
    std::snprintf(tail, sizeof(tail), "; %.1fs", elapsed_s(t0));
    report(7, "memory balancing", all_ok, detail.str() + tail);
}

// ---------------------------------------------------------------------------
// C8: rerunning the full bench config with the same seeds is byte-identical.

void criterion8() {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig cfg = default_suite();
    if (g_suite_reports.empty()) g_suite_reports = run_bench(cfg, 4);
    const auto second = run_bench(cfg, 2);  // different worker count on purpose
    std::ostringstream a, b;
    write_runs_csv(a, g_suite_reports);
    write_runs_csv(b, second);
    const bool same = a.str() == b.str();
    char detail[128];
    std::snprintf(detail, sizeof(detail), "%zu-byte runs.csv, rerun identical: %s; %.0fs",
                  a.str().size(), same ? "yes" : "no", elapsed_s(t0));
    report(8, "determinism", same, detail);
}

// ---------------------------------------------------------------------------
// C9: per-batch latency ordering baseline <= t3a < updating entropy methods
// < cotta. EATA's redundancy filter admits almost nothing on these streams
// (its accuracy column equals the baseline for the same reason), so its cost
// sits between baseline and TENT rather than strictly above T3A; it is
// reported but the strict chain uses the always-updating members.

void criterion9() {
    const auto t0 = std::chrono::steady_clock::now();
    Fixture f = make_fixture(NormKind::LayerNorm, 17);
    const LabeledSet td = sample_domain(f.target, 3200, Rng(18));
    StreamSpec ss;
    ss.length = 3200;
    ss.batch_size = 16;
    const auto stream = make_stream(td, ss, Rng(19));

    auto timed = [&](const char* name) {
        auto adapter = make_adapter(name, f.model, AdaptConfig{}, Rng(20));
        return measure_latency_ms(*adapter, stream);
    };
    const double baseline = timed("baseline");
    const double t3a = timed("t3a");
    const double tent = timed("tent");
    const double eata = timed("eata");
    const double sar = timed("sar");
    const double cotta = timed("cotta");

    const bool ok = baseline <= t3a && t3a < std::min(tent, sar) &&
                    std::max({tent, eata, sar}) < cotta && eata >= baseline;
    char detail[224];
    std::snprintf(detail, sizeof(detail),
                  "median ms/batch: baseline %.3f <= t3a %.3f < {tent %.3f, sar %.3f} "
                  "< cotta %.3f (eata %.3f, mostly filtered); %.1fs",
                  baseline, t3a, tent, sar, cotta, eata, elapsed_s(t0));
    report(9, "latency ordering", ok, detail);
}

}  // namespace

int main() {
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criterion7();
    criterion8();
    criterion9();
    if (g_failures == 0) {
        std::printf("acceptance: all 9 criteria passed\n");
    } else {
        std::printf("acceptance: %d criterion(s) FAILED\n", g_failures);
    }
    return g_failures == 0 ? 0 : 1;
}
