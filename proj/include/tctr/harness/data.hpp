// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "tctr/harness/config.hpp"
#include "tctr/synth/dataset.hpp"
#include "tctr/synth/scene.hpp"

namespace tctr::harness {

/// Reads the LSEQ file when a path is given, otherwise generates `count` sequences.
inline std::vector<SequenceSample> load_or_generate(const RunConfig& c, const std::string& path, int count,
                                                    std::uint64_t seed) {
    std::vector<SequenceSample> data = path.empty() ? synth::generate_dataset(c.scene, count, seed)
                                                    : synth::read_dataset(path);
    for (const auto& s : data) s.window(c.radius());  // throws when the window does not fit
    return data;
}

inline std::vector<SequenceSample> training_set(const RunConfig& c) {
    return load_or_generate(c, c.data.train_path, c.data.train_sequences, c.data.train_seed);
}

inline std::vector<SequenceSample> evaluation_set(const RunConfig& c) {
    return load_or_generate(c, c.data.eval_path, c.data.eval_sequences, c.data.eval_seed);
}

}  // namespace tctr::harness
