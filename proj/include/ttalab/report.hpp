#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ttalab/harness.hpp"

namespace ttalab {

namespace report_detail {

inline std::string pct(double v, int decimals = 2) {
    if (!std::isfinite(v)) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, 100.0 * v);
    return buf;
}

inline std::string signed_pct(double v) {
    if (!std::isfinite(v)) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+.2f", 100.0 * v);
    return buf;
}

}  // namespace report_detail

// Scenario x method accuracy matrix plus per-scenario deltas against the
// baseline column, grouped by method family.
inline std::string render_markdown(const Aggregate& agg) {
    using report_detail::pct;
    using report_detail::signed_pct;

    std::vector<std::string> scenarios;
    std::set<std::string> methods_present;
    for (const CellStat& c : agg.cells) {
        if (scenarios.empty() || scenarios.back() != c.scenario) scenarios.push_back(c.scenario);
        methods_present.insert(c.method);
    }
    std::vector<std::string> methods;
    for (const MethodInfo& m : method_registry()) {
        if (methods_present.contains(std::string(m.name))) methods.emplace_back(m.name);
    }
    for (const std::string& m : methods_present) {
        if (find_method(m) == nullptr) methods.push_back(m);
    }

    std::map<std::pair<std::string, std::string>, const CellStat*> by_key;
    for (const CellStat& c : agg.cells) by_key[{c.scenario, c.method}] = &c;

    std::ostringstream os;
    os << "Method families: entropy = tent, eata, sar; feature-alignment = shot; "
          "prototype = t3a; continual = note, cotta, rotta.\n\n";

    os << "## Top-1 accuracy (%, mean over seeds; best per row in bold)\n\n";
    os << "| scenario | S |";
    for (const std::string& m : methods) os << ' ' << m << " |";
    os << "\n|---|---|";
    for (std::size_t i = 0; i < methods.size(); ++i) os << "---|";
    os << '\n';
    for (const std::string& sc : scenarios) {
        double sim = std::numeric_limits<double>::quiet_NaN();
        for (const std::string& m : methods) {
            const auto it = by_key.find({sc, m});
            if (it != by_key.end() && std::isfinite(it->second->similarity_mean)) {
                sim = it->second->similarity_mean;
                break;
            }
        }
        os << "| " << sc << " | " << (std::isfinite(sim) ? fmt_double(std::round(sim * 1e4) / 1e4) : "-")
           << " |";
        const std::string best =
            agg.best_method.contains(sc) ? agg.best_method.at(sc) : std::string();
        for (const std::string& m : methods) {
            const auto it = by_key.find({sc, m});
            if (it == by_key.end()) {
                os << " - |";
                continue;
            }
            const CellStat& c = *it->second;
            std::string cell;
            if (c.failures == c.runs) {
                cell = "failed";
            } else {
                cell = pct(c.acc_mean);
                if (c.runs > 1) cell += "±" + pct(c.acc_sd);
            }
            if (m == best) cell = "**" + cell + "**";
            os << ' ' << cell << " |";
        }
        os << '\n';
    }

    os << "\n## Delta vs baseline (accuracy points)\n\n";
    os << "| scenario |";
    for (const std::string& m : methods) {
        if (m != "baseline") os << ' ' << m << " |";
    }
    os << "\n|---|";
    for (const std::string& m : methods) {
        if (m != "baseline") os << "---|";
    }
    os << '\n';
    for (const std::string& sc : scenarios) {
        os << "| " << sc << " |";
        for (const std::string& m : methods) {
            if (m == "baseline") continue;
            const auto it = by_key.find({sc, m});
            os << ' ' << (it != by_key.end() ? signed_pct(it->second->delta_vs_baseline) : "-")
               << " |";
        }
        os << '\n';
    }
    return os.str();
}

inline std::string render_aggregate_csv(const Aggregate& agg) {
    std::ostringstream os;
    os << "scenario,method,family,runs,failures,acc_mean,acc_sd,acc_true_mean,"
          "similarity,delta_vs_baseline,latency_ms_mean\n";
    auto cell = [](double v) { return std::isfinite(v) ? fmt_double(v) : std::string(); };
    for (const CellStat& c : agg.cells) {
        const MethodInfo* info = find_method(c.method);
        os << c.scenario << ',' << c.method << ',' << (info ? info->family : "") << ','
           << c.runs << ',' << c.failures << ',' << cell(c.acc_mean) << ',' << cell(c.acc_sd)
           << ',' << cell(c.acc_true_mean) << ',' << cell(c.similarity_mean) << ','
           << cell(c.delta_vs_baseline) << ',' << cell(c.latency_ms_mean) << '\n';
    }
    return os.str();
}

inline std::string render_report(const Aggregate& agg, const std::string& format,
                                 const std::vector<std::uint64_t>& seeds = {}) {
    if (format == "md") return render_markdown(agg);
    if (format == "csv") return render_aggregate_csv(agg);
    if (format == "json") return summary_json(agg, seeds).dump(1) + "\n";
    throw std::invalid_argument("unknown report format: " + format);
}

}  // namespace ttalab
