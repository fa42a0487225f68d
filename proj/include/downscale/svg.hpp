/*
 * Copyright 2026 The areal-downscale Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Choropleth rendering of fine-partition values.

#ifndef DOWNSCALE_SVG_HPP
#define DOWNSCALE_SVG_HPP

#include <array>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "downscale/geo.hpp"

namespace downscale {

inline constexpr int kRampSteps = 256;

using Rgb = std::array<std::uint8_t, 3>;

/// Step k of the single-hue ramp; 0 is lightest, kRampSteps - 1 darkest.
Rgb ramp_color(int step);

/// Min-max normalization to [0, 1]; a constant vector maps to all zeros.
Eigen::VectorXd normalize_min_max(const Eigen::VectorXd& values);

/// Ramp step for a normalized value in [0, 1].
int ramp_step(double normalized);

std::string hex_color(const Rgb& c);

struct SvgOptions {
    double width = 800;  ///< pixel width; height follows the aspect ratio
    std::string title;
};

/// One <path> per region, keyed by region id, darker for higher values.
std::string choropleth_svg(const Partition& partition, const Eigen::VectorXd& values, const SvgOptions& opts = {});

}  // namespace downscale

#endif  // DOWNSCALE_SVG_HPP
