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

#include "downscale/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "downscale/errors.hpp"
#include "text_io.hpp"

namespace downscale {

namespace {

constexpr Rgb kLight{247, 251, 255};
constexpr Rgb kDark{8, 48, 107};

std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

Rgb ramp_color(int step) {
    step = std::clamp(step, 0, kRampSteps - 1);
    const double t = static_cast<double>(step) / (kRampSteps - 1);
    Rgb c{};
    for (int k = 0; k < 3; ++k)
        c[k] = static_cast<std::uint8_t>(std::lround(kLight[k] + t * (kDark[k] - kLight[k])));
    return c;
}

Eigen::VectorXd normalize_min_max(const Eigen::VectorXd& values) {
    if (values.size() == 0) return values;
    if (!values.allFinite()) throw InputError("choropleth: non-finite value");
    const double lo = values.minCoeff(), hi = values.maxCoeff();
    if (!(hi > lo)) return Eigen::VectorXd::Zero(values.size());
    return ((values.array() - lo) / (hi - lo)).matrix();
}

int ramp_step(double normalized) {
    return std::clamp(static_cast<int>(std::lround(normalized * (kRampSteps - 1))), 0, kRampSteps - 1);
}

std::string hex_color(const Rgb& c) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
    return buf;
}

std::string choropleth_svg(const Partition& partition, const Eigen::VectorXd& values, const SvgOptions& opts) {
    if (static_cast<Eigen::Index>(partition.size()) != values.size())
        throw InputError("choropleth: " + std::to_string(values.size()) + " values for " +
                         std::to_string(partition.size()) + " regions");
    if (!(opts.width > 0)) throw InputError("choropleth: width must be positive");

    double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
    double x1 = -x0, y1 = -x0;
    for (const auto& r : partition.regions())
        for (const auto& poly : r.geometry)
            for (const auto& ring : poly.rings)
                for (const auto& p : ring) {
                    x0 = std::min(x0, p.x()), x1 = std::max(x1, p.x());
                    y0 = std::min(y0, p.y()), y1 = std::max(y1, p.y());
                }
    const double span_x = x1 > x0 ? x1 - x0 : 1.0;
    const double span_y = y1 > y0 ? y1 - y0 : 1.0;
    const double s = opts.width / span_x;
    const double height = span_y * s;

    const Eigen::VectorXd t = normalize_min_max(values);
    std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + coord(opts.width) +
           "\" height=\"" + coord(height) + "\" viewBox=\"0 0 " + coord(opts.width) + " " + coord(height) + "\">\n";
    if (!opts.title.empty()) out += "  <title>" + xml_escape(opts.title) + "</title>\n";
    out += "  <g stroke=\"#808080\" stroke-width=\"0.5\" fill-rule=\"evenodd\">\n";
    for (std::size_t i = 0; i < partition.size(); ++i) {
        const auto& r = partition[i];
        std::string d;
        for (const auto& poly : r.geometry)
            for (const auto& ring : poly.rings) {
                for (std::size_t k = 0; k < ring.size(); ++k) {
                    // y grows downward in SVG.
                    d += (k == 0 ? "M" : " L") + coord((ring[k].x() - x0) * s) + " " + coord((y1 - ring[k].y()) * s);
                }
                if (!ring.empty()) d += " Z ";
            }
        while (!d.empty() && d.back() == ' ') d.pop_back();
        const auto k = static_cast<Eigen::Index>(i);
        out += "    <path id=\"" + xml_escape(r.id) + "\" fill=\"" + hex_color(ramp_color(ramp_step(t(k)))) +
               "\" d=\"" + d + "\"><title>" + xml_escape(r.id) + ": " + text::format_double(values(k)) +
               "</title></path>\n";
    }
    out += "  </g>\n</svg>\n";
    return out;
}

}  // namespace downscale
