#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "ttalab/adapters.hpp"
#include "ttalab/config.hpp"
#include "ttalab/data.hpp"
#include "ttalab/shiftlab.hpp"
#include "ttalab/similarity.hpp"

namespace ttalab {

// One (scenario, method, seed) outcome. Latency is measured wall-clock and is
// therefore kept out of the deterministic CSV; it travels in the JSON summary.
struct RunReport {
    std::string scenario;
    std::string method;
    std::uint64_t seed = 0;
    int samples = 0;
    int batches = 0;
    double similarity = std::numeric_limits<double>::quiet_NaN();
    double acc_observed = std::numeric_limits<double>::quiet_NaN();
    double acc_true = std::numeric_limits<double>::quiet_NaN();
    double mean_entropy = std::numeric_limits<double>::quiet_NaN();
    double latency_ms = std::numeric_limits<double>::quiet_NaN();
    bool failed = false;
    std::string error;
};

namespace harness_detail {

inline LabeledSet sample_sources(const std::vector<DomainSpec>& sources, int per_source, Rng rng) {
    std::vector<LabeledSet> parts;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        parts.push_back(sample_domain(sources[i], per_source, rng.split(i)));
    }
    return concat(parts);
}

inline void split_train_val(const LabeledSet& all, double val_fraction, Rng rng,
                            LabeledSet& train, LabeledSet& val) {
    std::vector<int> idx(static_cast<std::size_t>(all.size()));
    for (int i = 0; i < all.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
    rng.shuffle(idx);
    const int val_n = std::max(1, static_cast<int>(std::lround(val_fraction * all.size())));
    std::vector<int> vi(idx.begin(), idx.begin() + val_n);
    std::vector<int> ti(idx.begin() + val_n, idx.end());
    val = all.take(vi);
    train = all.take(ti);
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
    if (v.size() % 2 == 1) return v[mid];
    const double hi = v[mid];
    std::nth_element(v.begin(), v.begin() + static_cast<long>(mid) - 1, v.end());
    return 0.5 * (v[mid - 1] + hi);
}

}  // namespace harness_detail

// Median wall-clock per batch, first `warmup` batches excluded.
inline double measure_latency_ms(Adapter& adapter, const std::vector<Batch>& stream,
                                 int warmup = 3) {
    using Clock = std::chrono::steady_clock;
    std::vector<double> ms;
    for (std::size_t b = 0; b < stream.size(); ++b) {
        const auto t0 = Clock::now();
        adapter.observe(stream[b].x);
        const auto t1 = Clock::now();
        if (static_cast<int>(b) >= warmup) {
            ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
    }
    return harness_detail::median(std::move(ms));
}

// All reports for one (scenario, seed): pretrain one model per normalization
// kind the methods need, score source/target similarity on the layer-norm
// encoder's features, then stream the target once per method from a clone of
// the matching source snapshot.
inline std::vector<RunReport> run_scenario_seed(const RunConfig& cfg, const Scenario& sc,
                                                std::uint64_t seed) {
    Rng root = Rng(seed).split(stream_key(sc.name));

    const LabeledSet pool =
        harness_detail::sample_sources(sc.sources, cfg.train_per_source, root.split(stream_key("source-data")));
    LabeledSet train, val;
    harness_detail::split_train_val(pool, cfg.val_fraction, root.split(stream_key("split")), train, val);

    const int dim = sc.target.dim;
    const int classes = sc.target.classes;

    // normalization kinds needed by this run (layer norm always, for the
    // similarity features)
    std::vector<NormKind> kinds = {NormKind::LayerNorm};
    for (const std::string& m : cfg.methods) {
        const NormKind k = cfg.norm(m);
        if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
    }

    std::map<NormKind, Model> pretrained;
    std::map<NormKind, double> val_acc;
    for (const NormKind kind : kinds) {
        ModelConfig mc;
        mc.input_dim = dim;
        mc.classes = classes;
        mc.blocks = cfg.model_blocks;
        mc.width = cfg.model_width;
        mc.norm = kind;
        Model m = Model::init(mc, root.split(stream_key("init") + static_cast<std::uint64_t>(kind)));
        const PretrainReport rep =
            pretrain(m, train, val, cfg.pretrain,
                     root.split(stream_key("pretrain") + static_cast<std::uint64_t>(kind)));
        val_acc[kind] = rep.val_accuracy;
        pretrained.emplace(kind, std::move(m));
    }

    // similarity between source and target feature clouds
    double similarity = std::numeric_limits<double>::quiet_NaN();
    {
        Model& ln = pretrained.at(NormKind::LayerNorm);
        const LabeledSet src_sample = harness_detail::sample_sources(
            sc.sources,
            std::max(2, cfg.sim.samples_per_side / static_cast<int>(sc.sources.size())),
            root.split(stream_key("sim-src")));
        const LabeledSet tgt_sample =
            sample_domain(sc.target, cfg.sim.samples_per_side, root.split(stream_key("sim-tgt")));
        const Matrix fs = ln.forward(src_sample.x, StatsMode::Eval).features;
        const Matrix ft = ln.forward(tgt_sample.x, StatsMode::Eval).features;
        similarity = similarity_score(fs, ft, cfg.sim.mmd, root.split(stream_key("sim-sub"))).similarity;
    }

    const LabeledSet target_data =
        sample_domain(sc.target, sc.stream.length, root.split(stream_key("target-data")));
    const std::vector<Batch> stream =
        make_stream(target_data, sc.stream, root.split(stream_key("stream")));

    // Fisher weights once per run (source-validation data, pre-streaming)
    std::map<NormKind, FisherInfo> fisher;
    for (const std::string& m : cfg.methods) {
        const MethodInfo* info = find_method(m);
        if (info != nullptr && info->needs_fisher) {
            const NormKind k = cfg.norm(m);
            if (!fisher.contains(k)) {
                fisher.emplace(k, compute_fisher(pretrained.at(k), val, ParamSelect::NormAffineOnly));
            }
        }
    }

    using Clock = std::chrono::steady_clock;
    std::vector<RunReport> reports;
    for (const std::string& method : cfg.methods) {
        RunReport rep;
        rep.scenario = sc.name;
        rep.method = method;
        rep.seed = seed;
        rep.similarity = similarity;

        const NormKind kind = cfg.norm(method);
        const MethodInfo* info = find_method(method);
        const FisherInfo* fi = info != nullptr && info->needs_fisher ? &fisher.at(kind) : nullptr;
        auto adapter = make_adapter(method, pretrained.at(kind), cfg.adapt(method),
                                    root.split(stream_key("adapt") + stream_key(method)), fi);

        long correct_obs = 0;
        long correct_true = 0;
        double entropy_sum = 0.0;
        std::vector<double> batch_ms;
        try {
            for (std::size_t b = 0; b < stream.size(); ++b) {
                const Batch& batch = stream[b];
                const auto t0 = Clock::now();
                const Matrix probs = adapter->observe(batch.x);
                const auto t1 = Clock::now();
                if (static_cast<int>(b) >= 3) {
                    batch_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
                }
                for (int i = 0; i < batch.size(); ++i) {
                    const int pred = argmax_row(probs, i);
                    if (pred == batch.observed[static_cast<std::size_t>(i)]) ++correct_obs;
                    if (pred == batch.truth[static_cast<std::size_t>(i)]) ++correct_true;
                    entropy_sum += entropy_of(probs.row(i));
                }
                rep.samples += batch.size();
                rep.batches += 1;
            }
            rep.acc_observed = static_cast<double>(correct_obs) / rep.samples;
            rep.acc_true = static_cast<double>(correct_true) / rep.samples;
            rep.mean_entropy = entropy_sum / rep.samples;
            rep.latency_ms = harness_detail::median(std::move(batch_ms));
        } catch (const AdapterFailure& e) {
            rep.failed = true;
            rep.error = e.what();
            rep.acc_observed = std::numeric_limits<double>::quiet_NaN();
            rep.acc_true = std::numeric_limits<double>::quiet_NaN();
            rep.mean_entropy = std::numeric_limits<double>::quiet_NaN();
        }
        reports.push_back(std::move(rep));
    }
    return reports;
}

// Full grid. Parallel over (scenario, seed) units; the output order is fixed
// by the config regardless of scheduling.
inline std::vector<RunReport> run_bench(const RunConfig& cfg, int workers = 0) {
    struct Unit {
        const Scenario* scenario;
        std::uint64_t seed;
    };
    std::vector<Unit> units;
    for (const Scenario& sc : cfg.scenarios) {
        for (const std::uint64_t seed : cfg.seeds) units.push_back({&sc, seed});
    }
    std::vector<std::vector<RunReport>> results(units.size());

    if (workers <= 0) {
        workers = static_cast<int>(std::thread::hardware_concurrency());
        if (workers <= 0) workers = 1;
    }
    workers = std::min<int>(workers, static_cast<int>(units.size()));

    std::atomic<std::size_t> next{0};
    std::vector<std::string> errors(units.size());
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= units.size()) return;
            try {
                results[i] = run_scenario_seed(cfg, *units[i].scenario, units[i].seed);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (!errors[i].empty()) {
            throw std::runtime_error("bench unit '" + units[i].scenario->name + "' seed " +
                                     std::to_string(units[i].seed) + " failed: " + errors[i]);
        }
    }

    std::vector<RunReport> flat;
    flat.reserve(units.size() * cfg.methods.size());
    for (const auto& chunk : results) {
        for (const RunReport& r : chunk) flat.push_back(r);
    }
    return flat;
}

struct CellStat {
    std::string scenario;
    std::string method;
    int runs = 0;
    int failures = 0;
    double acc_mean = std::numeric_limits<double>::quiet_NaN();
    double acc_sd = std::numeric_limits<double>::quiet_NaN();
    double acc_true_mean = std::numeric_limits<double>::quiet_NaN();
    double entropy_mean = std::numeric_limits<double>::quiet_NaN();
    double similarity_mean = std::numeric_limits<double>::quiet_NaN();
    double latency_ms_mean = std::numeric_limits<double>::quiet_NaN();
    double delta_vs_baseline = std::numeric_limits<double>::quiet_NaN();
};

struct Aggregate {
    std::vector<CellStat> cells;  // sorted by scenario name, then method registry order
    std::map<std::string, std::string> best_method;  // per scenario
};

inline int method_order(const std::string& name) {
    const auto& reg = method_registry();
    for (std::size_t i = 0; i < reg.size(); ++i) {
        if (reg[i].name == name) return static_cast<int>(i);
    }
    return static_cast<int>(reg.size());
}

// Per-(scenario, method) means and seed deviations, deltas against the
// baseline column, and the best method per scenario. Permutation-invariant
// over the input order.
inline Aggregate aggregate(const std::vector<RunReport>& reports) {
    require(!reports.empty(), "aggregate: no reports");
    std::map<std::pair<std::string, std::string>, std::vector<const RunReport*>> groups;
    std::set<std::tuple<std::string, std::string, std::uint64_t>> keys;
    for (const RunReport& r : reports) {
        if (r.scenario.empty() || r.method.empty()) {
            throw std::invalid_argument("aggregate: report missing grouping keys");
        }
        if (!keys.insert({r.scenario, r.method, r.seed}).second) {
            throw std::invalid_argument("aggregate: duplicate (scenario, method, seed)");
        }
        groups[{r.scenario, r.method}].push_back(&r);
    }

    Aggregate agg;
    for (auto& [key, runs] : groups) {
        std::sort(runs.begin(), runs.end(),
                  [](const RunReport* a, const RunReport* b) { return a->seed < b->seed; });
        CellStat c;
        c.scenario = key.first;
        c.method = key.second;
        c.runs = static_cast<int>(runs.size());
        double acc = 0.0, acc_true = 0.0, ent = 0.0, sim = 0.0, lat = 0.0;
        int ok = 0, lat_n = 0;
        for (const RunReport* r : runs) {
            if (r->failed) {
                ++c.failures;
                continue;
            }
            ++ok;
            acc += r->acc_observed;
            acc_true += r->acc_true;
            ent += r->mean_entropy;
            sim += r->similarity;
            if (std::isfinite(r->latency_ms)) {
                lat += r->latency_ms;
                ++lat_n;
            }
        }
        if (ok > 0) {
            c.acc_mean = acc / ok;
            c.acc_true_mean = acc_true / ok;
            c.entropy_mean = ent / ok;
            c.similarity_mean = sim / ok;
            if (lat_n > 0) c.latency_ms_mean = lat / lat_n;
            double ss = 0.0;
            for (const RunReport* r : runs) {
                if (r->failed) continue;
                const double d = r->acc_observed - c.acc_mean;
                ss += d * d;
            }
            c.acc_sd = ok >= 2 ? std::sqrt(ss / (ok - 1)) : 0.0;
        }
        agg.cells.push_back(std::move(c));
    }

    std::sort(agg.cells.begin(), agg.cells.end(), [](const CellStat& a, const CellStat& b) {
        if (a.scenario != b.scenario) return a.scenario < b.scenario;
        return method_order(a.method) < method_order(b.method);
    });

    std::map<std::string, double> baseline_acc;
    for (const CellStat& c : agg.cells) {
        if (c.method == "baseline" && std::isfinite(c.acc_mean)) baseline_acc[c.scenario] = c.acc_mean;
    }
    std::map<std::string, double> best_acc;
    for (CellStat& c : agg.cells) {
        if (!std::isfinite(c.acc_mean)) continue;
        const auto it = baseline_acc.find(c.scenario);
        if (it != baseline_acc.end()) c.delta_vs_baseline = c.acc_mean - it->second;
        const auto b = best_acc.find(c.scenario);
        if (b == best_acc.end() || c.acc_mean > b->second) {
            best_acc[c.scenario] = c.acc_mean;
            agg.best_method[c.scenario] = c.method;
        }
    }
    return agg;
}

// --- persistence -----------------------------------------------------------

inline const char* runs_csv_header() {
    return "scenario,method,seed,samples,batches,similarity,acc_observed,acc_true,mean_entropy,failed";
}

inline void write_runs_csv(std::ostream& os, const std::vector<RunReport>& reports) {
    os << runs_csv_header() << '\n';
    auto cell = [](double v) { return std::isfinite(v) ? fmt_double(v) : std::string(); };
    for (const RunReport& r : reports) {
        os << r.scenario << ',' << r.method << ',' << r.seed << ',' << r.samples << ','
           << r.batches << ',' << cell(r.similarity) << ',' << cell(r.acc_observed) << ','
           << cell(r.acc_true) << ',' << cell(r.mean_entropy) << ',' << (r.failed ? 1 : 0) << '\n';
    }
}

inline void write_runs_csv(const std::string& path, const std::vector<RunReport>& reports) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    write_runs_csv(f, reports);
}

inline std::vector<RunReport> read_runs_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("empty runs file: " + path);
    if (line != runs_csv_header()) throw std::runtime_error("bad runs header in: " + path);
    std::vector<RunReport> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 10) throw std::runtime_error("ragged runs row in: " + path);
        RunReport r;
        r.scenario = cells[0];
        r.method = cells[1];
        r.seed = std::stoull(cells[2]);
        r.samples = std::stoi(cells[3]);
        r.batches = std::stoi(cells[4]);
        auto num = [](const std::string& s) {
            return s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
        };
        r.similarity = num(cells[5]);
        r.acc_observed = num(cells[6]);
        r.acc_true = num(cells[7]);
        r.mean_entropy = num(cells[8]);
        r.failed = cells[9] == "1";
        out.push_back(std::move(r));
    }
    return out;
}

inline json summary_json(const Aggregate& agg, const std::vector<std::uint64_t>& seeds) {
    json j;
    j["version"] = 1;
    j["seeds"] = seeds;
    json scenarios = json::array();
    std::string current;
    json entry;
    auto flush = [&] {
        if (!current.empty()) scenarios.push_back(entry);
    };
    for (const CellStat& c : agg.cells) {
        if (c.scenario != current) {
            flush();
            current = c.scenario;
            entry = json{{"name", c.scenario},
                         {"similarity", c.similarity_mean},
                         {"best_method", agg.best_method.contains(c.scenario)
                                             ? json(agg.best_method.at(c.scenario))
                                             : json()},
                         {"methods", json::array()}};
        }
        const MethodInfo* info = find_method(c.method);
        json cell{{"name", c.method},
                  {"family", info != nullptr ? std::string(info->family) : std::string()},
                  {"runs", c.runs},
                  {"failures", c.failures}};
        auto put = [&cell](const char* key, double v) {
            if (std::isfinite(v)) cell[key] = v;
        };
        put("acc_mean", c.acc_mean);
        put("acc_sd", c.acc_sd);
        put("acc_true_mean", c.acc_true_mean);
        put("mean_entropy", c.entropy_mean);
        put("delta_vs_baseline", c.delta_vs_baseline);
        put("latency_ms_mean", c.latency_ms_mean);
        entry["methods"].push_back(std::move(cell));
    }
    flush();
    j["scenarios"] = std::move(scenarios);
    return j;
}

}  // namespace ttalab
