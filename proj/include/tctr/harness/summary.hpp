// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>

#include "tctr/core/errors.hpp"
#include "tctr/harness/config.hpp"
#include "tctr/harness/metrics.hpp"

namespace tctr::harness {

/// Fields: config_hash, seed, steps, final_loss, map, per_class_ap.<class>, wall_seconds.
struct RunSummary {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    int steps = 0;
    double final_loss = 0;
    double map = 0;
    std::map<int, double> per_class_ap;  // mean over thresholds, classes with ground truth only
    double wall_seconds = 0;
};

inline RunSummary make_summary(const RunConfig& c, int steps, double final_loss, const EvalReport& r,
                               double wall_seconds) {
    RunSummary s{config_hash(c), c.seed, steps, final_loss, r.map, {}, wall_seconds};
    for (int k = 0; k < r.classes; ++k)
        if (r.has_class(k)) s.per_class_ap[k] = r.class_ap(k);
    return s;
}

inline std::string format_summary(const RunSummary& s) {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "config_hash=" << std::hex << std::setw(16) << std::setfill('0') << s.config_hash << std::dec
        << std::setfill(' ') << "\n";
    out << "seed=" << s.seed << "\n";
    out << "steps=" << s.steps << "\n";
    out << "final_loss=" << s.final_loss << "\n";
    out << "map=" << s.map << "\n";
    for (const auto& [k, v] : s.per_class_ap) out << "per_class_ap." << k << "=" << v << "\n";
    out << "wall_seconds=" << s.wall_seconds << "\n";
    return out.str();
}

/// Parses `key=value` lines into a map; blank lines are skipped.
inline std::map<std::string, std::string> parse_records(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("record line without '=': " + line);
        out[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return out;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace tctr::harness
