#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "ttalab/model.hpp"

namespace ttalab {

using json = nlohmann::json;

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const json& j, int rows, int cols, const char* what) {
    if (!j.is_array() || static_cast<int>(j.size()) != rows) {
        throw std::runtime_error(std::string("checkpoint: bad shape for ") + what);
    }
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        const json& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<int>(row.size()) != cols) {
            throw std::runtime_error(std::string("checkpoint: bad shape for ") + what);
        }
        for (int jj = 0; jj < cols; ++jj) m(i, jj) = row[static_cast<std::size_t>(jj)].get<double>();
    }
    if (!m.all_finite()) {
        throw std::runtime_error(std::string("checkpoint: non-finite values in ") + what);
    }
    return m;
}

inline std::string norm_kind_name(NormKind k) {
    switch (k) {
        case NormKind::BatchNorm: return "batchnorm";
        case NormKind::LayerNorm: return "layernorm";
        case NormKind::IABN: return "iabn";
        case NormKind::RBN: return "rbn";
    }
    throw std::logic_error("norm_kind_name: unknown kind");
}

inline NormKind norm_kind_from_name(const std::string& s) {
    if (s == "batchnorm") return NormKind::BatchNorm;
    if (s == "layernorm") return NormKind::LayerNorm;
    if (s == "iabn") return NormKind::IABN;
    if (s == "rbn") return NormKind::RBN;
    throw std::runtime_error("unknown normalization kind: " + s);
}

// Versioned parameter image with a shape manifest. Doubles survive the round
// trip bit-exactly (shortest round-trip decimal representation).
inline json checkpoint_to_json(const Model& m, double val_accuracy = -1.0) {
    json j;
    j["format"] = "ttalab-checkpoint";
    j["version"] = 1;
    j["arch"] = {{"input_dim", m.config().input_dim},
                 {"classes", m.config().classes},
                 {"blocks", m.config().blocks},
                 {"width", m.config().width},
                 {"norm", norm_kind_name(m.config().norm)}};
    json blocks = json::array();
    for (const auto& blk : m.blocks()) {
        json b;
        b["w"] = matrix_to_json(blk.w);
        b["b"] = matrix_to_json(blk.b);
        b["gamma"] = matrix_to_json(blk.norm.gamma);
        b["beta"] = matrix_to_json(blk.norm.beta);
        if (blk.norm.kind != NormKind::LayerNorm) {
            b["mu_run"] = matrix_to_json(blk.norm.mu_run);
            b["var_run"] = matrix_to_json(blk.norm.var_run);
        }
        b["momentum"] = blk.norm.momentum;
        b["kappa"] = blk.norm.kappa;
        b["alpha_fuse"] = blk.norm.alpha_fuse;
        b["rbn_momentum"] = blk.norm.rbn_momentum;
        b["eps"] = blk.norm.eps;
        blocks.push_back(std::move(b));
    }
    j["encoder"] = std::move(blocks);
    j["head"] = {{"w", matrix_to_json(m.head_weights())},
                 {"b", matrix_to_json(m.head_bias())}};
    if (m.has_theta0()) {
        json t0 = json::array();
        for (const Matrix& p : m.theta0()) t0.push_back(matrix_to_json(p));
        j["theta0"] = std::move(t0);
    }
    if (val_accuracy >= 0.0) j["val_accuracy"] = val_accuracy;
    return j;
}

inline Model checkpoint_from_json(const json& j) {
    if (!j.contains("format") || j["format"] != "ttalab-checkpoint") {
        throw std::runtime_error("checkpoint: unrecognized format");
    }
    if (j.value("version", 0) != 1) {
        throw std::runtime_error("checkpoint: unsupported version");
    }
    const json& a = j.at("arch");
    ModelConfig cfg;
    cfg.input_dim = a.at("input_dim").get<int>();
    cfg.classes = a.at("classes").get<int>();
    cfg.blocks = a.at("blocks").get<int>();
    cfg.width = a.at("width").get<int>();
    cfg.norm = norm_kind_from_name(a.at("norm").get<std::string>());
    Model m = Model::init(cfg, Rng(0));

    const json& blocks = j.at("encoder");
    if (static_cast<int>(blocks.size()) != cfg.blocks) {
        throw std::runtime_error("checkpoint: block count mismatch");
    }
    int in = cfg.input_dim;
    for (int bi = 0; bi < cfg.blocks; ++bi) {
        const json& b = blocks[static_cast<std::size_t>(bi)];
        auto& blk = m.blocks()[static_cast<std::size_t>(bi)];
        blk.w = matrix_from_json(b.at("w"), in, cfg.width, "encoder w");
        blk.b = matrix_from_json(b.at("b"), 1, cfg.width, "encoder b");
        blk.norm.gamma = matrix_from_json(b.at("gamma"), 1, cfg.width, "gamma");
        blk.norm.beta = matrix_from_json(b.at("beta"), 1, cfg.width, "beta");
        if (cfg.norm != NormKind::LayerNorm) {
            blk.norm.mu_run = matrix_from_json(b.at("mu_run"), 1, cfg.width, "mu_run");
            blk.norm.var_run = matrix_from_json(b.at("var_run"), 1, cfg.width, "var_run");
        }
        blk.norm.momentum = b.value("momentum", 0.1);
        blk.norm.kappa = b.value("kappa", 4.0);
        blk.norm.alpha_fuse = b.value("alpha_fuse", 0.05);
        blk.norm.rbn_momentum = b.value("rbn_momentum", 0.05);
        blk.norm.eps = b.value("eps", 1e-5);
        in = cfg.width;
    }
    m.head_weights() = matrix_from_json(j.at("head").at("w"), in, cfg.classes, "head w");
    m.head_bias() = matrix_from_json(j.at("head").at("b"), 1, cfg.classes, "head b");

    if (j.contains("theta0")) {
        const json& t0 = j["theta0"];
        if (static_cast<int>(t0.size()) != m.slot_count()) {
            throw std::runtime_error("checkpoint: theta0 slot count mismatch");
        }
        std::vector<Matrix> img;
        for (int s = 0; s < m.slot_count(); ++s) {
            const Matrix& cur = m.slot(s);
            img.push_back(matrix_from_json(t0[static_cast<std::size_t>(s)], cur.rows(), cur.cols(),
                                           "theta0 slot"));
        }
        const std::vector<Matrix> params = m.snapshot_params();
        m.restore_params(img);
        m.freeze_source();
        m.restore_params(params);
    }
    return m;
}

inline void save_checkpoint(const std::string& path, const Model& m, double val_accuracy = -1.0) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << checkpoint_to_json(m, val_accuracy).dump(1) << '\n';
}

inline Model load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    json j;
    f >> j;
    return checkpoint_from_json(j);
}

}  // namespace ttalab
