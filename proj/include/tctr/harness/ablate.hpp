// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tctr/harness/evaluate.hpp"
#include "tctr/harness/train.hpp"

namespace tctr::harness {

struct AblationVariant {
    std::string name;
    RunConfig config;
};

/// Rows of one ablation axis, each a resolved copy of `base`.
///   framework: baseline, baseline+concat, baseline+TCTR, baseline+TCTR+FRM
///   encoder:   t_encoder, c_encoder, tc_encoder
///   fusion:    x_only, g_only, concat, add, gate
///   frames:    one row per window length in ablate.frames ("1T", "3T", ...)
inline std::vector<AblationVariant> ablation_variants(const RunConfig& base, const std::string& axis) {
    std::vector<AblationVariant> out;
    auto with = [&](const std::string& name, auto edit) {
        RunConfig c = base;
        edit(c);
        c.resolve();
        out.push_back({name, c});
    };
    using head::FusionMode;
    if (axis == "framework") {
        with("baseline", [](RunConfig& c) { c.temporal = Temporal::none; });
        with("baseline+concat", [](RunConfig& c) { c.temporal = Temporal::concat; });
        with("baseline+TCTR", [](RunConfig& c) {
            c.temporal = Temporal::tctr;
            c.fusion = FusionMode::g_only;
        });
        with("baseline+TCTR+FRM", [](RunConfig& c) {
            c.temporal = Temporal::tctr;
            c.fusion = FusionMode::gate;
        });
    } else if (axis == "encoder") {
        for (auto v : {transformer::EncoderVariant::t_encoder, transformer::EncoderVariant::c_encoder,
                       transformer::EncoderVariant::tc_encoder})
            with(transformer::to_string(v), [v](RunConfig& c) {
                c.temporal = Temporal::tctr;
                c.tctr.variant = v;
            });
    } else if (axis == "fusion") {
        for (auto m : {FusionMode::x_only, FusionMode::g_only, FusionMode::concat, FusionMode::add, FusionMode::gate})
            with(head::to_string(m), [m](RunConfig& c) {
                c.temporal = Temporal::tctr;
                c.fusion = m;
            });
    } else if (axis == "frames") {
        for (int n : base.ablate_frames) {
            if (n < 1 || n % 2 == 0) throw ConfigError("ablate.frames entries must be odd and >= 1");
            with(std::to_string(n) + "T", [n](RunConfig& c) {
                c.temporal = Temporal::tctr;
                c.tctr.T = (n - 1) / 2;
            });
        }
    } else {
        throw ConfigError("unknown ablation axis '" + axis + "' (expected framework, encoder, fusion or frames)");
    }
    if (!base.ablate_rows.empty()) {
        std::vector<AblationVariant> kept;
        for (const auto& want : detail::split(base.ablate_rows, ',')) {
            bool found = false;
            for (const auto& v : out)
                if (v.name == want) {
                    kept.push_back(v);
                    found = true;
                }
            if (!found) throw ConfigError("ablation axis " + axis + " has no row '" + want + "'");
        }
        out = std::move(kept);
    }
    return out;
}

struct AblationRow {
    std::string variant;
    std::vector<double> seed_map;  // one per seed
    double map = 0;                // mean over seeds
    std::vector<double> class_ap;  // mean over seeds; NaN for classes without ground truth
};

struct AblationTable {
    std::string axis;
    std::vector<AblationRow> rows;

    const AblationRow& row(const std::string& name) const {
        for (const auto& r : rows)
            if (r.variant == name) return r;
        throw ContractError("ablation table has no row " + name);
    }
};

/// Trains and evaluates every row under each seed with the same data and budget.
inline AblationTable run_ablation(const RunConfig& base, const std::string& axis,
                                  const std::vector<SequenceSample>& train_data,
                                  const std::vector<SequenceSample>& eval_data,
                                  const std::function<void(const std::string&)>& log = {}) {
    if (base.ablate_seeds.empty()) throw ConfigError("ablate.seeds must not be empty");
    AblationTable table{axis, {}};
    for (const auto& v : ablation_variants(base, axis)) {
        AblationRow row{v.name, {}, 0, std::vector<double>(base.classes(), 0.0)};
        std::vector<int> present(base.classes(), 0);
        for (std::uint64_t seed : base.ablate_seeds) {
            RunConfig c = v.config;
            c.seed = seed;
            const auto trained = train(c, train_data);
            const auto report = evaluate(trained.store, c, eval_data);
            row.seed_map.push_back(report.map);
            for (int k = 0; k < report.classes; ++k)
                if (report.has_class(k)) {
                    row.class_ap[k] += report.class_ap(k);
                    ++present[k];
                }
            if (log) {
                std::ostringstream line;
                line << std::setprecision(6) << "axis=" << axis << " variant=" << v.name << " seed=" << seed
                     << " final_loss=" << trained.final_loss() << " map=" << report.map;
                log(line.str());
            }
        }
        for (double m : row.seed_map) row.map += m;
        row.map /= static_cast<double>(row.seed_map.size());
        for (int k = 0; k < base.classes(); ++k)
            row.class_ap[k] = present[k] ? row.class_ap[k] / present[k] : std::numeric_limits<double>::quiet_NaN();
        table.rows.push_back(std::move(row));
    }
    return table;
}

/// One `variant=... map=... ap.<class>=...` line per row; the frames axis adds the
/// pairwise monotonicity of consecutive rows.
inline std::string format_table(const AblationTable& t) {
    std::ostringstream out;
    out << std::setprecision(6) << std::fixed;
    out << "axis=" << t.axis << "\n";
    for (const auto& r : t.rows) {
        out << "variant=" << r.variant << " map=" << r.map;
        for (std::size_t k = 0; k < r.class_ap.size(); ++k) {
            out << " ap." << k << "=";
            if (std::isnan(r.class_ap[k])) out << "na";
            else out << r.class_ap[k];
        }
        out << " seeds=";
        for (std::size_t i = 0; i < r.seed_map.size(); ++i) out << (i ? "," : "") << r.seed_map[i];
        out << "\n";
    }
    if (t.axis == "frames") {
        bool monotone = true;
        for (std::size_t i = 1; i < t.rows.size(); ++i) {
            const bool ok = t.rows[i].map >= t.rows[i - 1].map;
            monotone = monotone && ok;
            out << "step=" << t.rows[i - 1].variant << "->" << t.rows[i].variant
                << " delta=" << t.rows[i].map - t.rows[i - 1].map << " nondecreasing=" << (ok ? "true" : "false")
                << "\n";
        }
        out << "monotone=" << (monotone ? "true" : "false") << "\n";
    }
    return out.str();
}

}  // namespace tctr::harness
