#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ttalab/adapters/base.hpp"
#include "ttalab/adapters/continual.hpp"
#include "ttalab/adapters/entropy.hpp"
#include "ttalab/adapters/shot.hpp"
#include "ttalab/adapters/t3a.hpp"

namespace ttalab {

struct MethodInfo {
    std::string_view name;
    std::string_view family;  // none | entropy | feature-alignment | prototype | continual
    NormKind default_norm;
    bool needs_fisher;
};

inline const std::vector<MethodInfo>& method_registry() {
    static const std::vector<MethodInfo> methods = {
        {"baseline", "none", NormKind::LayerNorm, false},
        {"tent", "entropy", NormKind::LayerNorm, false},
        {"eata", "entropy", NormKind::LayerNorm, true},
        {"sar", "entropy", NormKind::LayerNorm, false},
        {"shot", "feature-alignment", NormKind::LayerNorm, false},
        {"t3a", "prototype", NormKind::LayerNorm, false},
        {"note", "continual", NormKind::IABN, false},
        {"cotta", "continual", NormKind::LayerNorm, false},
        {"rotta", "continual", NormKind::RBN, false},
    };
    return methods;
}

inline const MethodInfo* find_method(std::string_view name) {
    for (const MethodInfo& m : method_registry()) {
        if (m.name == name) return &m;
    }
    return nullptr;
}

inline std::unique_ptr<Adapter> make_adapter(std::string_view method, Model model,
                                             const AdaptConfig& cfg, Rng rng,
                                             const FisherInfo* fisher = nullptr) {
    if (method == "baseline") return std::make_unique<BaselineAdapter>(std::move(model), cfg, rng);
    if (method == "tent") return std::make_unique<TentAdapter>(std::move(model), cfg, rng);
    if (method == "eata") return std::make_unique<EataAdapter>(std::move(model), cfg, rng, fisher);
    if (method == "sar") return std::make_unique<SarAdapter>(std::move(model), cfg, rng);
    if (method == "shot") return std::make_unique<ShotAdapter>(std::move(model), cfg, rng);
    if (method == "t3a") return std::make_unique<T3aAdapter>(std::move(model), cfg, rng);
    if (method == "note") return std::make_unique<NoteAdapter>(std::move(model), cfg, rng);
    if (method == "cotta") return std::make_unique<CottaAdapter>(std::move(model), cfg, rng);
    if (method == "rotta") return std::make_unique<RottaAdapter>(std::move(model), cfg, rng);
    throw std::invalid_argument("unknown adaptation method: " + std::string(method));
}

}  // namespace ttalab
