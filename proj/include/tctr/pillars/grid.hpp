// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>

#include "tctr/core/errors.hpp"

namespace tctr::pillars {

/// Bird's-eye-view pillar grid. Rows follow y, columns follow x.
struct GridConfig {
    double x_min = -6.4, x_max = 6.4;
    double y_min = -6.4, y_max = 6.4;
    double z_min = -5.0, z_max = 3.0;
    double dx = 0.2, dy = 0.2;
    int max_points_per_pillar = 20;
    int max_pillars = 4096;

    int width() const { return static_cast<int>(std::lround((x_max - x_min) / dx)); }
    int height() const { return static_cast<int>(std::lround((y_max - y_min) / dy)); }

    void validate() const {
        auto exact = [](double extent, double step, const char* axis) {
            const double cells = extent / step;
            if (!(step > 0) || !(extent > 0) || std::abs(cells - std::round(cells)) > 1e-6)
                throw ConfigError(std::string("grid ") + axis + " extent is not a whole number of pillars");
            const long n = std::lround(cells);
            if ((n & (n - 1)) != 0) throw ConfigError(std::string("grid ") + axis + " cell count is not a power of two");
        };
        exact(x_max - x_min, dx, "x");
        exact(y_max - y_min, dy, "y");
        if (!(z_max > z_min)) throw ConfigError("grid z range is empty");
        if (max_points_per_pillar < 1) throw ConfigError("max_points_per_pillar must be >= 1");
        if (max_pillars < 1) throw ConfigError("max_pillars must be >= 1");
    }
};

}  // namespace tctr::pillars
