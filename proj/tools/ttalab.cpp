// ttalab: synthetic test-time-adaptation lab.
//
// Subcommands: gen-data, pretrain, similarity, bench, report. All randomness
// flows from config seeds; reruns with equal seeds produce identical data
// files and runs CSVs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "ttalab/checkpoint.hpp"
#include "ttalab/config.hpp"
#include "ttalab/harness.hpp"
#include "ttalab/report.hpp"

namespace fs = std::filesystem;
using ttalab::json;

namespace {

json load_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    json j;
    f >> j;
    return j;
}

int g_verbosity = 1;

void log_line(const std::string& msg) {
    if (g_verbosity > 0) std::cerr << "[ttalab] " << msg << '\n';
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 std::int64_t seed_override) {
    const json j = load_json(config_path);
    ttalab::cfgdetail::expect_keys(j, {"version", "n", "seed", "domains"}, "gen-data config");
    if (j.value("version", 0) != 1) throw ttalab::ConfigError("gen-data config: version must be 1");
    const int n = j.value("n", 1000);
    if (n < 1) throw ttalab::ConfigError("gen-data config: n must be >= 1");
    std::uint64_t seed = j.value("seed", 0ULL);
    if (seed_override >= 0) seed = static_cast<std::uint64_t>(seed_override);
    if (!j.contains("domains") || j["domains"].empty()) {
        throw ttalab::ConfigError("gen-data config: domains required");
    }
    std::vector<ttalab::DomainSpec> specs;
    for (const auto& [name, dj] : j["domains"].items()) {
        specs.push_back(ttalab::domain_from_json(name, dj));
    }

    fs::create_directories(out_dir);
    ttalab::Rng root(seed);
    for (const ttalab::DomainSpec& spec : specs) {
        const ttalab::LabeledSet data =
            ttalab::sample_domain(spec, n, root.split(ttalab::stream_key(spec.name)));
        const fs::path path = fs::path(out_dir) / (spec.name + ".csv");
        ttalab::write_dataset_csv(path.string(), data);
        log_line("wrote " + path.string() + " (" + std::to_string(n) + " samples)");
    }
    return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& out_path,
                 std::int64_t seed_override) {
    const json j = load_json(config_path);
    ttalab::cfgdetail::expect_keys(
        j, {"version", "seed", "samples", "val_fraction", "domain", "model", "pretrain"},
        "pretrain config");
    if (j.value("version", 0) != 1) throw ttalab::ConfigError("pretrain config: version must be 1");
    if (!j.contains("domain")) throw ttalab::ConfigError("pretrain config: domain required");
    const ttalab::DomainSpec domain = ttalab::domain_from_json("source", j["domain"]);
    const int samples = j.value("samples", 2000);
    const double val_fraction = j.value("val_fraction", 0.2);
    std::uint64_t seed = j.value("seed", 1ULL);
    if (seed_override >= 0) seed = static_cast<std::uint64_t>(seed_override);

    ttalab::ModelConfig mc;
    mc.input_dim = domain.dim;
    mc.classes = domain.classes;
    if (j.contains("model")) {
        const json& mj = j["model"];
        ttalab::cfgdetail::expect_keys(mj, {"blocks", "width", "norm"}, "pretrain.model");
        mc.blocks = mj.value("blocks", mc.blocks);
        mc.width = mj.value("width", mc.width);
        if (mj.contains("norm")) mc.norm = ttalab::norm_kind_from_name(mj["norm"].get<std::string>());
    }
    ttalab::PretrainConfig pc;
    if (j.contains("pretrain")) {
        const json& pj = j["pretrain"];
        ttalab::cfgdetail::expect_keys(pj, {"epochs", "lr", "batch_size"}, "pretrain.pretrain");
        pc.epochs = pj.value("epochs", pc.epochs);
        pc.lr = pj.value("lr", pc.lr);
        pc.batch_size = pj.value("batch_size", pc.batch_size);
    }

    ttalab::Rng root(seed);
    const ttalab::LabeledSet pool =
        ttalab::sample_domain(domain, samples, root.split(ttalab::stream_key("source-data")));
    ttalab::LabeledSet train, val;
    ttalab::harness_detail::split_train_val(pool, val_fraction,
                                            root.split(ttalab::stream_key("split")), train, val);
    ttalab::Model model = ttalab::Model::init(mc, root.split(ttalab::stream_key("init")));
    const ttalab::PretrainReport rep =
        ttalab::pretrain(model, train, val, pc, root.split(ttalab::stream_key("pretrain")));
    ttalab::save_checkpoint(out_path, model, rep.val_accuracy);
    log_line("wrote " + out_path);

    json out{{"val_accuracy", rep.val_accuracy}, {"steps", rep.steps}, {"checkpoint", out_path}};
    std::cout << out.dump(1) << '\n';
    return 0;
}

int cmd_similarity(const std::string& file_a, const std::string& file_b,
                   const std::string& bandwidth, const std::string& estimator, int max_samples,
                   const std::string& checkpoint_path) {
    ttalab::MmdConfig cfg;
    cfg.max_samples = max_samples;
    if (bandwidth != "median") cfg.sigma_sq = std::stod(bandwidth);
    if (estimator == "biased") {
        cfg.estimator = ttalab::MmdEstimator::Biased;
    } else if (estimator == "unbiased") {
        cfg.estimator = ttalab::MmdEstimator::Unbiased;
    } else {
        throw ttalab::ConfigError("similarity: estimator must be biased or unbiased");
    }

    const ttalab::LabeledSet a = ttalab::read_dataset_csv(file_a);
    const ttalab::LabeledSet b = ttalab::read_dataset_csv(file_b);
    ttalab::Matrix fa = a.x;
    ttalab::Matrix fb = b.x;
    if (!checkpoint_path.empty()) {
        ttalab::Model model = ttalab::load_checkpoint(checkpoint_path);
        fa = model.forward(a.x, ttalab::StatsMode::Eval).features;
        fb = model.forward(b.x, ttalab::StatsMode::Eval).features;
    }
    const ttalab::SimilarityResult r = ttalab::similarity_score(fa, fb, cfg);

    json out{{"S", r.similarity},
             {"mmd", r.mmd},
             {"mmd2_raw", r.mmd2_raw},
             {"bandwidth_sq", r.sigma_sq},
             {"estimator", estimator},
             {"m", r.m},
             {"n", r.n},
             {"features", checkpoint_path.empty() ? "raw" : "encoder"}};
    std::cout << out.dump(1) << '\n';
    return 0;
}

int cmd_bench(const std::string& config_path, bool use_default, const std::string& out_dir,
              int workers, const std::vector<std::uint64_t>& seed_override) {
    json cfg_json = use_default ? ttalab::default_suite_json() : load_json(config_path);
    if (!seed_override.empty()) cfg_json["seeds"] = seed_override;
    const ttalab::RunConfig cfg = ttalab::parse_run_config(cfg_json);

    fs::create_directories(out_dir);
    log_line("running " + std::to_string(cfg.scenarios.size()) + " scenarios x " +
             std::to_string(cfg.methods.size()) + " methods x " +
             std::to_string(cfg.seeds.size()) + " seeds");
    const auto reports = ttalab::run_bench(cfg, workers);

    const fs::path runs_path = fs::path(out_dir) / "runs.csv";
    ttalab::write_runs_csv(runs_path.string(), reports);
    const ttalab::Aggregate agg = ttalab::aggregate(reports);
    const fs::path summary_path = fs::path(out_dir) / "summary.json";
    {
        std::ofstream f(summary_path);
        if (!f) throw std::runtime_error("cannot open for writing: " + summary_path.string());
        f << ttalab::summary_json(agg, cfg.seeds).dump(1) << '\n';
    }
    log_line("wrote " + runs_path.string());
    log_line("wrote " + summary_path.string());

    int failures = 0;
    for (const auto& r : reports) {
        if (r.failed) ++failures;
    }
    for (const auto& [scenario, best] : agg.best_method) {
        std::cout << scenario << ": best " << best << '\n';
    }
    if (failures > 0) {
        std::cerr << "[ttalab] " << failures << " run(s) failed\n";
        return 2;
    }
    return 0;
}

int cmd_report(const std::string& runs_path, const std::string& format,
               const std::string& out_path) {
    const auto reports = ttalab::read_runs_csv(runs_path);
    std::string text;
    if (reports.empty()) {
        text = "no runs\n";
    } else {
        std::vector<std::uint64_t> seeds;
        for (const auto& r : reports) {
            if (std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end()) seeds.push_back(r.seed);
        }
        text = ttalab::render_report(ttalab::aggregate(reports), format, seeds);
    }
    if (out_path.empty()) {
        std::cout << text;
    } else {
        std::ofstream f(out_path);
        if (!f) throw std::runtime_error("cannot open for writing: " + out_path);
        f << text;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ttalab: streaming test-time-adaptation benchmark on synthetic domain shifts"};
    app.require_subcommand(1);

    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "silence progress logging");

    std::string config_path, out_path;
    std::int64_t seed_override = -1;

    auto* gen = app.add_subcommand("gen-data", "sample synthetic domains to CSV dataset files");
    gen->add_option("--config", config_path, "gen-data config (json)")->required();
    gen->add_option("--out", out_path, "output directory")->required();
    gen->add_option("--seed", seed_override, "override the config seed");

    auto* pre = app.add_subcommand("pretrain", "train a source model and write a checkpoint");
    pre->add_option("--config", config_path, "pretrain config (json)")->required();
    pre->add_option("--out", out_path, "checkpoint path (json)")->required();
    pre->add_option("--seed", seed_override, "override the config seed");

    std::string sim_a, sim_b, bandwidth = "median", estimator = "biased", checkpoint;
    int max_samples = 2000;
    auto* sim = app.add_subcommand("similarity", "MMD similarity between two dataset files");
    sim->add_option("fileA", sim_a, "first dataset csv")->required();
    sim->add_option("fileB", sim_b, "second dataset csv")->required();
    sim->add_option("--bandwidth", bandwidth, "'median' or a fixed sigma^2")
        ->capture_default_str();
    sim->add_option("--estimator", estimator, "biased|unbiased")->capture_default_str();
    sim->add_option("--max-samples", max_samples, "cap per side")->capture_default_str();
    sim->add_option("--checkpoint", checkpoint, "embed features with this model first");

    bool default_suite_flag = false;
    int workers = 0;
    std::vector<std::uint64_t> bench_seeds;
    auto* bench = app.add_subcommand("bench", "run the scenario x method x seed grid");
    bench->add_option("--config", config_path, "bench config (json)");
    bench->add_flag("--default-suite", default_suite_flag, "use the built-in 12-scenario suite");
    bench->add_option("--out", out_path, "output directory")->required();
    bench->add_option("--workers", workers, "worker threads (default: hardware)");
    bench->add_option("--seed", bench_seeds, "override the config seed list");

    std::string runs_path, format = "md", report_out;
    auto* rep = app.add_subcommand("report", "render a runs.csv as a summary table");
    rep->add_option("runs", runs_path, "runs.csv produced by bench")->required();
    rep->add_option("--format", format, "md|csv|json")->capture_default_str();
    rep->add_option("--out", report_out, "write here instead of stdout");

    CLI11_PARSE(app, argc, argv);
    g_verbosity = quiet ? 0 : 1;

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_path, seed_override);
        if (pre->parsed()) return cmd_pretrain(config_path, out_path, seed_override);
        if (sim->parsed()) {
            return cmd_similarity(sim_a, sim_b, bandwidth, estimator, max_samples, checkpoint);
        }
        if (bench->parsed()) {
            if (default_suite_flag == !config_path.empty()) {
                std::cerr << "[ttalab] bench: pass exactly one of --config or --default-suite\n";
                return 1;
            }
            return cmd_bench(config_path, default_suite_flag, out_path, workers, bench_seeds);
        }
        if (rep->parsed()) return cmd_report(runs_path, format, report_out);
    } catch (const std::exception& e) {
        std::cerr << "[ttalab] error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
