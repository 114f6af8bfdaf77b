// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "tctr/core/binary.hpp"
#include "tctr/core/errors.hpp"
#include "tctr/numerics/params.hpp"

// TCKP layout, all integers u32 little-endian:
//   "TCKP" | version | entry count | { name length | name | ndim | dims... | f32 data... }*

namespace tctr::num {

inline constexpr std::uint32_t kCheckpointVersion = 1;


struct CheckpointEntry {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    bool operator==(const CheckpointEntry&) const = default;
};

inline std::vector<unsigned char> encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
    std::vector<unsigned char> out{'T', 'C', 'K', 'P'};
    bin::put_u32(out, kCheckpointVersion);
    bin::put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        bin::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        bin::put_u32(out, static_cast<std::uint32_t>(e.dims.size()));
        for (auto d : e.dims) bin::put_u32(out, d);
        for (float v : e.data) bin::put_f32(out, v);
    }
    return out;
}

inline std::vector<CheckpointEntry> decode_checkpoint(const std::vector<unsigned char>& buf) {
    bin::Reader r(buf);
    if (r.bytes(4, "magic") != "TCKP") throw FormatError("bad checkpoint magic", 0);
    const std::size_t vpos = r.offset();
    if (r.u32("version") != kCheckpointVersion) throw FormatError("unsupported checkpoint version", vpos);
    const std::uint32_t count = r.u32("entry count");
    std::vector<CheckpointEntry> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        const std::uint32_t len = r.u32("name length");
        e.name = r.bytes(len, "name");
        const std::uint32_t nd = r.u32("ndim");
        std::size_t n = 1;
        for (std::uint32_t d = 0; d < nd; ++d) {
            e.dims.push_back(r.u32("dim"));
            n *= e.dims.back();
        }
        r.need(n * 4, "tensor data");
        e.data.resize(n);
        for (auto& v : e.data) v = r.f32("tensor data");
        out.push_back(std::move(e));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after checkpoint", r.offset());
    return out;
}

template <typename T>
std::vector<CheckpointEntry> to_entries(const ParamStore<T>& store) {
    std::vector<CheckpointEntry> out;
    for (const auto& [name, e] : store.entries()) {
        CheckpointEntry c{name, {}, {}};
        for (int d : e.value.dims()) c.dims.push_back(static_cast<std::uint32_t>(d));
        c.data.assign(e.value.data().begin(), e.value.data().end());
        out.push_back(std::move(c));
    }
    return out;
}

template <typename T>
void save_checkpoint(const std::string& path, const ParamStore<T>& store) {
    bin::write_file(path, encode_checkpoint(to_entries(store)));
}

/// Loads values into an already-declared store. Every declared entry must be present
/// with identical extents and nothing extra may appear.
template <typename T>
void load_into(ParamStore<T>& store, const std::vector<CheckpointEntry>& entries) {
    std::vector<std::string> bad;
    std::map<std::string, const CheckpointEntry*> by_name;
    for (const auto& e : entries) by_name[e.name] = &e;
    for (const auto& [name, e] : store.entries()) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            bad.push_back(name + " (missing)");
            continue;
        }
        Dims dims(it->second->dims.begin(), it->second->dims.end());
        if (dims != e.value.dims()) bad.push_back(name + " (" + dims_to_string(dims) + " vs " + dims_to_string(e.value.dims()) + ")");
    }
    for (const auto& e : entries)
        if (!store.contains(e.name)) bad.push_back(e.name + " (unexpected)");
    if (!bad.empty()) throw LoadError("checkpoint does not match configuration", bad);
    for (auto& [name, e] : store.entries()) {
        const auto* c = by_name.at(name);
        for (std::size_t i = 0; i < c->data.size(); ++i) e.value[i] = static_cast<T>(c->data[i]);
    }
}

template <typename T>
void load_checkpoint(const std::string& path, ParamStore<T>& store) {
    load_into(store, decode_checkpoint(bin::read_file(path)));
}

}  // namespace tctr::num
