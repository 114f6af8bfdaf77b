// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "tctr/core/binary.hpp"
#include "tctr/pillars/types.hpp"

// LSEQ layout, integers u32 little-endian, reals f32 little-endian:
//   "LSEQ" | version | sequence count |
//   { frame count | target | { point count | (x y z r)* | box count | (x y z l w h yaw class)* }* }*

namespace tctr::synth {

inline constexpr std::uint32_t kDatasetVersion = 1;

inline std::vector<unsigned char> encode_dataset(const std::vector<SequenceSample>& samples) {
    std::vector<unsigned char> out{'L', 'S', 'E', 'Q'};
    bin::put_u32(out, kDatasetVersion);
    bin::put_u32(out, static_cast<std::uint32_t>(samples.size()));
    for (const auto& s : samples) {
        bin::put_u32(out, static_cast<std::uint32_t>(s.frames.size()));
        bin::put_u32(out, static_cast<std::uint32_t>(s.target));
        for (const auto& f : s.frames) {
            bin::put_u32(out, static_cast<std::uint32_t>(f.points.size()));
            for (const auto& p : f.points)
                for (float v : {p.x, p.y, p.z, p.r}) bin::put_f32(out, v);
            bin::put_u32(out, static_cast<std::uint32_t>(f.gt_boxes.size()));
            for (const auto& b : f.gt_boxes) {
                for (float v : {b.x, b.y, b.z, b.l, b.w, b.h, b.yaw}) bin::put_f32(out, v);
                bin::put_u32(out, static_cast<std::uint32_t>(b.class_id));
            }
        }
    }
    return out;
}

inline std::vector<SequenceSample> decode_dataset(const std::vector<unsigned char>& bytes) {
    bin::Reader r(bytes);
    if (r.bytes(4, "magic") != "LSEQ") throw FormatError("bad dataset magic", 0);
    const std::size_t version_at = r.offset();
    if (r.u32("version") != kDatasetVersion) throw FormatError("unsupported dataset version", version_at);
    const std::uint32_t count = r.u32("sequence count");
    std::vector<SequenceSample> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        SequenceSample s;
        const std::uint32_t frames = r.u32("frame count");
        const std::size_t target_at = r.offset();
        const std::uint32_t target = r.u32("target index");
        if (frames == 0 || target >= frames) throw FormatError("target index outside the sequence", target_at);
        s.target = static_cast<int>(target);
        for (std::uint32_t f = 0; f < frames; ++f) {
            PointFrame frame;
            const std::uint32_t np = r.u32("point count");
            r.need(static_cast<std::size_t>(np) * 16, "points");
            frame.points.resize(np);
            for (auto& p : frame.points) {
                p.x = r.f32("point");
                p.y = r.f32("point");
                p.z = r.f32("point");
                p.r = r.f32("point");
            }
            const std::uint32_t nb = r.u32("box count");
            r.need(static_cast<std::size_t>(nb) * 32, "boxes");
            frame.gt_boxes.resize(nb);
            for (auto& b : frame.gt_boxes) {
                for (float* v : {&b.x, &b.y, &b.z, &b.l, &b.w, &b.h, &b.yaw}) *v = r.f32("box");
                b.class_id = static_cast<int>(r.u32("box class"));
            }
            s.frames.push_back(std::move(frame));
        }
        out.push_back(std::move(s));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after dataset", r.offset());
    return out;
}

inline void write_dataset(const std::string& path, const std::vector<SequenceSample>& samples) {
    bin::write_file(path, encode_dataset(samples));
}

inline std::vector<SequenceSample> read_dataset(const std::string& path) {
    return decode_dataset(bin::read_file(path));
}

}  // namespace tctr::synth
