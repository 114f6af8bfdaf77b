// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tctr/core/binary.hpp"
#include "tctr/head/detection.hpp"
#include "tctr/pillars/grid.hpp"
#include "tctr/pillars/types.hpp"

namespace tctr::harness {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kPointColor{200, 200, 200};
inline constexpr Rgb kGtColor{0, 255, 0};
inline constexpr Rgb kDetectionColor{255, 0, 0};

/// Row-major RGB raster; row 0 is the top (largest y).
struct Image {
    int width = 0, height = 0;
    std::vector<Rgb> pixels;

    Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h) {}

    Rgb& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
    const Rgb& at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }

    void set(int row, int col, Rgb c) {
        if (row >= 0 && row < height && col >= 0 && col < width) at(row, col) = c;
    }

    std::size_t count(Rgb c) const {
        std::size_t n = 0;
        for (const auto& p : pixels) n += p == c ? 1 : 0;
        return n;
    }
};

/// Maps BEV metres to pixels over the grid extent.
struct BevCanvas {
    const pillars::GridConfig& grid;
    Image& image;

    double col(double x) const { return (x - grid.x_min) / (grid.x_max - grid.x_min) * image.width; }
    double row(double y) const { return (grid.y_max - y) / (grid.y_max - grid.y_min) * image.height; }

    void line(double x0, double y0, double x1, double y1, Rgb c) {
        int c0 = static_cast<int>(std::floor(col(x0))), r0 = static_cast<int>(std::floor(row(y0)));
        const int c1 = static_cast<int>(std::floor(col(x1))), r1 = static_cast<int>(std::floor(row(y1)));
        const int dc = std::abs(c1 - c0), dr = -std::abs(r1 - r0);
        const int sc = c0 < c1 ? 1 : -1, sr = r0 < r1 ? 1 : -1;
        int err = dc + dr;
        for (;;) {
            image.set(r0, c0, c);
            if (c0 == c1 && r0 == r1) break;
            const int e2 = 2 * err;
            if (e2 >= dr) {
                err += dr;
                c0 += sc;
            }
            if (e2 <= dc) {
                err += dc;
                r0 += sr;
            }
        }
    }

    void box(const GtBox& b, Rgb c) {
        const double cs = std::cos(b.yaw), sn = std::sin(b.yaw);
        std::array<std::array<double, 2>, 4> p;
        const double u[4] = {0.5, 0.5, -0.5, -0.5}, v[4] = {0.5, -0.5, -0.5, 0.5};
        for (int i = 0; i < 4; ++i) {
            const double lu = u[i] * b.l, lv = v[i] * b.w;
            p[i] = {b.x + cs * lu - sn * lv, b.y + sn * lu + cs * lv};
        }
        for (int i = 0; i < 4; ++i) line(p[i][0], p[i][1], p[(i + 1) % 4][0], p[(i + 1) % 4][1], c);
        // Heading tick from the centre to the front edge.
        line(b.x, b.y, b.x + cs * b.l / 2, b.y + sn * b.l / 2, c);
    }
};

/// Target-frame points, ground truth outlines (green) and detections (red, drawn last).
inline Image render_bev(const PointFrame& frame, const std::vector<head::Detection>& dets,
                        const pillars::GridConfig& grid, int size) {
    Image img(size, size);
    BevCanvas canvas{grid, img};
    for (const auto& p : frame.points) {
        const double c = canvas.col(p.x), r = canvas.row(p.y);
        if (c >= 0 && r >= 0) img.set(static_cast<int>(r), static_cast<int>(c), kPointColor);
    }
    for (const auto& b : frame.gt_boxes) canvas.box(b, kGtColor);
    for (const auto& d : dets) canvas.box(d.box, kDetectionColor);
    return img;
}

/// Uncompressed 24-bit BMP, bottom-up rows padded to 4 bytes.
inline std::vector<unsigned char> encode_bmp(const Image& img) {
    const std::uint32_t stride = (static_cast<std::uint32_t>(img.width) * 3 + 3) & ~3u;
    const std::uint32_t data = stride * static_cast<std::uint32_t>(img.height);
    std::vector<unsigned char> out{'B', 'M'};
    auto u16 = [&](std::uint16_t v) {
        out.push_back(static_cast<unsigned char>(v & 0xff));
        out.push_back(static_cast<unsigned char>(v >> 8));
    };
    bin::put_u32(out, 54 + data);
    bin::put_u32(out, 0);
    bin::put_u32(out, 54);
    bin::put_u32(out, 40);
    bin::put_u32(out, static_cast<std::uint32_t>(img.width));
    bin::put_u32(out, static_cast<std::uint32_t>(img.height));
    u16(1);
    u16(24);
    bin::put_u32(out, 0);
    bin::put_u32(out, data);
    bin::put_u32(out, 2835);
    bin::put_u32(out, 2835);
    bin::put_u32(out, 0);
    bin::put_u32(out, 0);
    for (int r = img.height - 1; r >= 0; --r) {
        for (int c = 0; c < img.width; ++c) {
            const Rgb& p = img.at(r, c);
            out.push_back(p.b);
            out.push_back(p.g);
            out.push_back(p.r);
        }
        for (std::uint32_t k = static_cast<std::uint32_t>(img.width) * 3; k < stride; ++k) out.push_back(0);
    }
    return out;
}

inline void write_bmp(const std::string& path, const Image& img) { bin::write_file(path, encode_bmp(img)); }

}  // namespace tctr::harness
