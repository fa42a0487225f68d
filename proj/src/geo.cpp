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

#include "downscale/geo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "downscale/errors.hpp"
#include "text_io.hpp"

namespace downscale {

namespace {

using nlohmann::json;

std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ", ";
        out += ids[i];
    }
    return out;
}

// Ring without a repeated closing vertex.
std::size_t ring_size(const Ring& r) {
    if (r.size() > 1 && r.front() == r.back()) return r.size() - 1;
    return r.size();
}

bool on_segment(const Location2d& p, const Location2d& a, const Location2d& b) {
    const Location2d ab = b - a;
    const Location2d ap = p - a;
    const double cross = ab.x() * ap.y() - ab.y() * ap.x();
    const double tol = 1e-12 * std::max(1.0, ab.norm() * std::max(1.0, ap.norm()));
    if (std::abs(cross) > tol) return false;
    const double dot = ap.dot(ab);
    return dot >= -tol && dot <= ab.squaredNorm() + tol;
}

enum class Side { outside, boundary, inside };

Side ring_side(const Ring& ring, const Location2d& p) {
    const std::size_t n = ring_size(ring);
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Location2d& a = ring[i];
        const Location2d& b = ring[j];
        if (on_segment(p, a, b)) return Side::boundary;
        if ((a.y() > p.y()) != (b.y() > p.y())) {
            const double x_cross = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
            if (p.x() < x_cross) inside = !inside;
        }
    }
    return inside ? Side::inside : Side::outside;
}

Location2d parse_position(const json& j, const std::string& id) {
    if (!j.is_array() || j.size() < 2 || !j[0].is_number() || !j[1].is_number())
        throw ParseError("region '" + id + "': position must be an array of two numbers");
    Location2d p(j[0].get<double>(), j[1].get<double>());
    if (!p.allFinite()) throw ParseError("region '" + id + "': non-finite coordinate");
    return p;
}

Polygon parse_polygon(const json& rings, const std::string& id) {
    if (!rings.is_array() || rings.empty())
        throw ParseError("region '" + id + "': polygon needs at least one ring");
    Polygon poly;
    for (const auto& r : rings) {
        if (!r.is_array()) throw ParseError("region '" + id + "': ring must be an array");
        Ring ring;
        ring.reserve(r.size());
        for (const auto& pos : r) ring.push_back(parse_position(pos, id));
        if (ring_size(ring) < 3) throw ParseError("region '" + id + "': ring has fewer than 3 vertices");
        poly.rings.push_back(std::move(ring));
    }
    return poly;
}

std::vector<Polygon> parse_geometry(const json& g, const std::string& id) {
    if (!g.is_object() || !g.contains("type") || !g.contains("coordinates"))
        throw ParseError("region '" + id + "': missing geometry");
    const std::string type = g.at("type").get<std::string>();
    const json& coords = g.at("coordinates");
    std::vector<Polygon> out;
    if (type == "Polygon") {
        out.push_back(parse_polygon(coords, id));
    } else if (type == "MultiPolygon") {
        if (!coords.is_array() || coords.empty())
            throw ParseError("region '" + id + "': empty MultiPolygon");
        for (const auto& p : coords) out.push_back(parse_polygon(p, id));
    } else {
        throw ParseError("region '" + id + "': unsupported geometry type " + type);
    }
    return out;
}

bool looks_geographic(const json& doc, const std::vector<Region>& regions) {
    if (doc.contains("crs")) {
        const std::string crs = doc["crs"].dump();
        if (crs.find("CRS84") != std::string::npos || crs.find("4326") != std::string::npos) return true;
    }
    // City-scale lon/lat: small extent, far from the origin, inside the lon/lat box.
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    for (const auto& r : regions)
        for (const auto& poly : r.geometry)
            for (const auto& p : poly.rings.front()) {
                xmin = std::min(xmin, p.x());
                xmax = std::max(xmax, p.x());
                ymin = std::min(ymin, p.y());
                ymax = std::max(ymax, p.y());
            }
    const bool in_box = xmin >= -180 && xmax <= 180 && ymin >= -90 && ymax <= 90;
    const bool small = (xmax - xmin) < 5 && (ymax - ymin) < 5;
    const bool offset = std::abs(xmin) > 5 || std::abs(ymin) > 5;
    return in_box && small && offset;
}

json ring_json(const Ring& ring) {
    json out = json::array();
    for (const auto& p : ring) out.push_back({p.x(), p.y()});
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

double signed_area(const Ring& ring) {
    const std::size_t n = ring_size(ring);
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Location2d& a = ring[i];
        const Location2d& b = ring[(i + 1) % n];
        s += a.x() * b.y() - b.x() * a.y();
    }
    return 0.5 * s;
}

std::pair<double, Location2d> area_and_centroid(const std::vector<Polygon>& geometry,
                                                const std::string& region_id) {
    double total = 0;
    Location2d moment = Location2d::Zero();
    for (const auto& poly : geometry) {
        for (std::size_t k = 0; k < poly.rings.size(); ++k) {
            const Ring& ring = poly.rings[k];
            const std::size_t n = ring_size(ring);
            // Shift to the first vertex to keep the cross products well conditioned.
            const Location2d origin = ring[0];
            double a2 = 0;
            Location2d m = Location2d::Zero();
            for (std::size_t i = 0; i < n; ++i) {
                const Location2d p = ring[i] - origin;
                const Location2d q = ring[(i + 1) % n] - origin;
                const double cross = p.x() * q.y() - q.x() * p.y();
                a2 += cross;
                m += cross * (p + q);
            }
            // Exterior counts positive, holes negative, whatever the winding.
            const double sign = (k == 0) == (a2 >= 0) ? 1.0 : -1.0;
            const double area = sign * 0.5 * a2;
            if (std::abs(a2) > 0) {
                const Location2d c = m / (3.0 * a2) + origin;
                moment += area * c;
            }
            total += area;
        }
    }
    if (!(total > 0) || !std::isfinite(total))
        throw ValidationError("region '" + region_id + "' has zero or negative area");
    return {total, moment / total};
}

bool Region::contains(const Location2d& p) const {
    for (const auto& poly : geometry) {
        const Side outer = ring_side(poly.rings.front(), p);
        if (outer == Side::outside) continue;
        if (outer == Side::boundary) return true;
        bool in_hole = false;
        for (std::size_t k = 1; k < poly.rings.size(); ++k) {
            const Side s = ring_side(poly.rings[k], p);
            if (s == Side::boundary) return true;
            if (s == Side::inside) {
                in_hole = true;
                break;
            }
        }
        if (!in_hole) return true;
    }
    return false;
}

Partition::Partition(std::string name, std::vector<Region> regions)
    : name_(std::move(name)), regions_(std::move(regions)) {
    if (regions_.empty()) throw ValidationError("partition '" + name_ + "' has no regions");
    std::set<std::string> seen;
    for (const auto& r : regions_) {
        if (!seen.insert(r.id).second)
            throw ValidationError("partition '" + name_ + "': duplicate region id '" + r.id + "'");
        if (!(r.area > 0)) throw ValidationError("region '" + r.id + "' has non-positive area");
        if (!r.centroid.allFinite())
            throw ValidationError("region '" + r.id + "' has a non-finite centroid");
    }
}

std::optional<std::size_t> Partition::find(std::string_view id) const {
    for (std::size_t i = 0; i < regions_.size(); ++i)
        if (regions_[i].id == id) return i;
    return std::nullopt;
}

std::vector<std::string> Partition::ids() const {
    std::vector<std::string> out;
    out.reserve(regions_.size());
    for (const auto& r : regions_) out.push_back(r.id);
    return out;
}

Centroids Partition::centroids() const {
    Centroids X(static_cast<Eigen::Index>(regions_.size()), 2);
    for (std::size_t i = 0; i < regions_.size(); ++i)
        X.row(static_cast<Eigen::Index>(i)) = regions_[i].centroid.transpose();
    return X;
}

Eigen::VectorXd Partition::areas() const {
    Eigen::VectorXd a(static_cast<Eigen::Index>(regions_.size()));
    for (std::size_t i = 0; i < regions_.size(); ++i) a(static_cast<Eigen::Index>(i)) = regions_[i].area;
    return a;
}

void ArealDataset::validate() const {
    if (!partition) throw ValidationError("dataset '" + id + "' has no partition");
    if (static_cast<std::size_t>(values.size()) != partition->size())
        throw ValidationError("dataset '" + id + "': " + std::to_string(values.size()) +
                              " values for " + std::to_string(partition->size()) + " regions");
    for (Eigen::Index i = 0; i < values.size(); ++i)
        if (!std::isfinite(values(i)))
            throw ValidationError("dataset '" + id + "': non-finite value for region '" +
                                  (*partition)[static_cast<std::size_t>(i)].id + "'");
}

std::vector<std::size_t> AggregationMap::members(std::size_t coarse_index) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < membership.size(); ++j)
        if (membership[j] == coarse_index) out.push_back(j);
    return out;
}

Partition load_partition(std::string_view geojson, std::string name, std::vector<std::string>* warnings) {
    json doc;
    try {
        doc = json::parse(geojson);
    } catch (const json::parse_error& e) {
        throw ParseError("geojson: " + std::string(e.what()));
    }
    if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
        !doc["features"].is_array())
        throw ParseError("geojson: expected a FeatureCollection with a features array");
    if (doc["features"].empty()) throw ValidationError("geojson: FeatureCollection has no features");

    std::vector<Region> regions;
    std::set<std::string> seen;
    std::size_t index = 0;
    for (const auto& f : doc["features"]) {
        ++index;
        const json* props = f.contains("properties") ? &f["properties"] : nullptr;
        if (!props || !props->is_object() || !props->contains("id") || !(*props)["id"].is_string())
            throw ParseError("geojson: feature " + std::to_string(index) + " lacks a string property 'id'");
        Region r;
        r.id = (*props)["id"].get<std::string>();
        if (!seen.insert(r.id).second) throw ValidationError("geojson: duplicate region id '" + r.id + "'");
        try {
            r.geometry = parse_geometry(f.value("geometry", json()), r.id);
        } catch (const json::exception& e) {
            throw ParseError("region '" + r.id + "': " + e.what());
        }
        auto [area, centroid] = area_and_centroid(r.geometry, r.id);
        r.area = area;
        r.centroid = centroid;
        regions.push_back(std::move(r));
    }
    if (warnings && looks_geographic(doc, regions))
        warnings->push_back("partition '" + name +
                            "': coordinates look like longitude/latitude; distances are treated as planar");
    return Partition(std::move(name), std::move(regions));
}

Partition load_partition_file(const std::string& path, std::vector<std::string>* warnings) {
    return load_partition(text::read_file(path), path, warnings);
}

std::string to_geojson(const Partition& partition) {
    json features = json::array();
    for (const auto& r : partition.regions()) {
        json geometry;
        auto poly_json = [](const Polygon& p) {
            json rings = json::array();
            for (const auto& ring : p.rings) rings.push_back(ring_json(ring));
            return rings;
        };
        if (r.geometry.size() == 1) {
            geometry = {{"type", "Polygon"}, {"coordinates", poly_json(r.geometry.front())}};
        } else {
            json polys = json::array();
            for (const auto& p : r.geometry) polys.push_back(poly_json(p));
            geometry = {{"type", "MultiPolygon"}, {"coordinates", polys}};
        }
        features.push_back({{"type", "Feature"}, {"properties", {{"id", r.id}}}, {"geometry", geometry}});
    }
    json doc = {{"type", "FeatureCollection"}, {"features", features}};
    return doc.dump() + "\n";
}

ArealDataset load_dataset(std::string_view csv, PartitionPtr partition, std::string id, QuantityKind kind) {
    if (!partition) throw InputError("load_dataset: null partition");
    const auto rows = text::parse_csv(csv);
    if (rows.empty() || rows[0].size() != 2 || rows[0][0] != "region_id" || rows[0][1] != "value")
        throw ParseError("dataset '" + id + "': header must be 'region_id,value'");

    Eigen::VectorXd values(static_cast<Eigen::Index>(partition->size()));
    std::vector<bool> filled(partition->size(), false);
    std::vector<std::string> extra;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != 2)
            throw ParseError("dataset '" + id + "': line " + std::to_string(r + 1) + " needs 2 fields");
        const auto idx = partition->find(row[0]);
        if (!idx) {
            extra.push_back(row[0]);
            continue;
        }
        if (filled[*idx]) throw ValidationError("dataset '" + id + "': duplicate row for region '" + row[0] + "'");
        filled[*idx] = true;
        values(static_cast<Eigen::Index>(*idx)) =
            text::parse_double(row[1], "dataset '" + id + "' region '" + row[0] + "'");
    }
    if (!extra.empty())
        throw ValidationError("dataset '" + id + "': ids not in partition: " + join_ids(extra));
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < filled.size(); ++i)
        if (!filled[i]) missing.push_back((*partition)[i].id);
    if (!missing.empty())
        throw ValidationError("dataset '" + id + "': missing ids: " + join_ids(missing));

    ArealDataset d{std::move(id), std::move(partition), std::move(values), kind};
    d.validate();
    return d;
}

ArealDataset load_dataset_file(const std::string& path, PartitionPtr partition, std::string id,
                               QuantityKind kind) {
    return load_dataset(text::read_file(path), std::move(partition), std::move(id), kind);
}

std::string to_csv(const ArealDataset& data) {
    data.validate();
    std::string out = "region_id,value\n";
    for (std::size_t i = 0; i < data.partition->size(); ++i)
        out += text::csv_field((*data.partition)[i].id) + "," +
               text::format_double(data.values(static_cast<Eigen::Index>(i))) + "\n";
    return out;
}

ArealDataset to_intensive(const ArealDataset& data) {
    data.validate();
    if (data.kind == QuantityKind::intensive)
        throw ValidationError("dataset '" + data.id + "' is already intensive");
    ArealDataset out = data;
    for (std::size_t i = 0; i < data.partition->size(); ++i) {
        const Region& r = (*data.partition)[i];
        if (!(r.area > 0)) throw ValidationError("region '" + r.id + "' has zero area");
        out.values(static_cast<Eigen::Index>(i)) /= r.area;
    }
    out.kind = QuantityKind::intensive;
    return out;
}

AggregationMap build_aggregation(PartitionPtr coarse, PartitionPtr fine) {
    if (!coarse || !fine) throw InputError("build_aggregation: null partition");

    // Candidate coarse regions in lexicographic id order so the first hit wins ties.
    std::vector<std::size_t> order(coarse->size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return (*coarse)[a].id < (*coarse)[b].id; });

    std::vector<std::size_t> membership(fine->size());
    std::vector<std::string> unassigned;
    for (std::size_t j = 0; j < fine->size(); ++j) {
        const Location2d& c = (*fine)[j].centroid;
        bool found = false;
        for (std::size_t i : order) {
            if ((*coarse)[i].contains(c)) {
                membership[j] = i;
                found = true;
                break;
            }
        }
        if (!found) unassigned.push_back((*fine)[j].id);
    }
    if (!unassigned.empty()) throw UnassignedRegionError(unassigned);

    std::vector<std::size_t> counts(coarse->size(), 0);
    for (std::size_t m : membership) ++counts[m];
    std::vector<std::string> empty;
    for (std::size_t i = 0; i < counts.size(); ++i)
        if (counts[i] == 0) empty.push_back((*coarse)[i].id);
    if (!empty.empty()) throw EmptyCoarseRegionError(empty);

    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(coarse->size()),
                                              static_cast<Eigen::Index>(fine->size()));
    for (std::size_t j = 0; j < membership.size(); ++j)
        H(static_cast<Eigen::Index>(membership[j]), static_cast<Eigen::Index>(j)) =
            1.0 / static_cast<double>(counts[membership[j]]);
    return AggregationMap{std::move(coarse), std::move(fine), std::move(H), std::move(membership)};
}

AggregationMap make_aggregation(PartitionPtr coarse, PartitionPtr fine, Eigen::MatrixXd H) {
    if (!coarse || !fine) throw InputError("make_aggregation: null partition");
    if (static_cast<std::size_t>(H.rows()) != coarse->size() || static_cast<std::size_t>(H.cols()) != fine->size())
        throw ValidationError("aggregation matrix must be " + std::to_string(coarse->size()) + " x " +
                              std::to_string(fine->size()));
    if (!H.allFinite() || (H.array() < 0).any())
        throw ValidationError("aggregation matrix entries must be finite and nonnegative");
    for (Eigen::Index i = 0; i < H.rows(); ++i) {
        if (std::abs(H.row(i).sum() - 1.0) > 1e-12)
            throw ValidationError("aggregation row '" + (*coarse)[static_cast<std::size_t>(i)].id +
                                  "' does not sum to 1");
    }
    std::vector<std::size_t> membership(fine->size());
    for (Eigen::Index j = 0; j < H.cols(); ++j) {
        Eigen::Index nonzero = 0;
        for (Eigen::Index i = 0; i < H.rows(); ++i) {
            if (H(i, j) != 0) {
                ++nonzero;
                membership[static_cast<std::size_t>(j)] = static_cast<std::size_t>(i);
            }
        }
        if (nonzero != 1)
            throw ValidationError("aggregation column '" + (*fine)[static_cast<std::size_t>(j)].id +
                                  "' must have exactly one nonzero entry");
    }
    return AggregationMap{std::move(coarse), std::move(fine), std::move(H), std::move(membership)};
}

Eigen::VectorXd aggregate(const AggregationMap& map, const Eigen::VectorXd& fine_values) {
    if (fine_values.size() != map.H.cols())
        throw InputError("aggregate: expected " + std::to_string(map.H.cols()) + " fine values, got " +
                         std::to_string(fine_values.size()));
    return map.H * fine_values;
}

std::string aggregation_to_csv(const AggregationMap& map) {
    std::string out;
    for (const auto& id : map.fine->ids()) out += "," + text::csv_field(id);
    out += "\n";
    for (std::size_t i = 0; i < map.coarse->size(); ++i) {
        out += text::csv_field((*map.coarse)[i].id);
        for (Eigen::Index j = 0; j < map.H.cols(); ++j)
            out += "," + text::format_double(map.H(static_cast<Eigen::Index>(i), j));
        out += "\n";
    }
    return out;
}

AggregationMap aggregation_from_csv(std::string_view csv, PartitionPtr coarse, PartitionPtr fine) {
    if (!coarse || !fine) throw InputError("aggregation_from_csv: null partition");
    const auto rows = text::parse_csv(csv);
    if (rows.size() != coarse->size() + 1)
        throw ParseError("aggregation csv: expected " + std::to_string(coarse->size()) + " data rows");
    const auto& header = rows[0];
    if (header.size() != fine->size() + 1)
        throw ParseError("aggregation csv: expected " + std::to_string(fine->size()) + " fine columns");

    std::vector<std::size_t> col_index(fine->size());
    std::vector<bool> col_seen(fine->size(), false);
    for (std::size_t c = 1; c < header.size(); ++c) {
        const auto idx = fine->find(header[c]);
        if (!idx) throw ValidationError("aggregation csv: unknown fine id '" + header[c] + "'");
        if (col_seen[*idx]) throw ValidationError("aggregation csv: duplicate fine id '" + header[c] + "'");
        col_seen[*idx] = true;
        col_index[c - 1] = *idx;
    }

    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(coarse->size()),
                                              static_cast<Eigen::Index>(fine->size()));
    std::vector<bool> row_seen(coarse->size(), false);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != header.size())
            throw ParseError("aggregation csv: line " + std::to_string(r + 1) + " has wrong field count");
        const auto i = coarse->find(row[0]);
        if (!i) throw ValidationError("aggregation csv: unknown coarse id '" + row[0] + "'");
        if (row_seen[*i]) throw ValidationError("aggregation csv: duplicate coarse id '" + row[0] + "'");
        row_seen[*i] = true;
        for (std::size_t c = 1; c < row.size(); ++c)
            H(static_cast<Eigen::Index>(*i), static_cast<Eigen::Index>(col_index[c - 1])) =
                text::parse_double(row[c], "aggregation csv row '" + row[0] + "'");
    }
    return make_aggregation(std::move(coarse), std::move(fine), std::move(H));
}

CoordinateTransform CoordinateTransform::standardize(const Centroids& reference) {
    CoordinateTransform t;
    if (reference.rows() == 0) return t;
    t.center = reference.colwise().mean().transpose();
    for (int k = 0; k < 2; ++k) {
        const double var = (reference.col(k).array() - t.center(k)).square().mean();
        t.scale(k) = var > 0 ? std::sqrt(var) : 1.0;
    }
    return t;
}

Centroids CoordinateTransform::apply(const Centroids& X) const {
    Centroids out(X.rows(), 2);
    for (int k = 0; k < 2; ++k) out.col(k) = (X.col(k).array() - center(k)) / scale(k);
    return out;
}

}  // namespace downscale
