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

#ifndef DOWNSCALE_GEO_HPP
#define DOWNSCALE_GEO_HPP

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "downscale/kernel.hpp"

namespace downscale {

/// Closed ring; the closing vertex may or may not be repeated.
using Ring = std::vector<Location2d>;

/// First ring is the exterior, the rest are holes.
struct Polygon {
    std::vector<Ring> rings;
};

struct Region {
    std::string id;
    std::vector<Polygon> geometry;  ///< one entry for Polygon, several for MultiPolygon
    Location2d centroid = Location2d::Zero();
    double area = 0;

    /// Point-in-region test that counts the boundary as inside.
    bool contains(const Location2d& p) const;
};

class Partition {
public:
    Partition(std::string name, std::vector<Region> regions);

    const std::string& name() const { return name_; }
    const std::vector<Region>& regions() const { return regions_; }
    std::size_t size() const { return regions_.size(); }
    const Region& operator[](std::size_t i) const { return regions_[i]; }

    /// Index of a region id, or nullopt.
    std::optional<std::size_t> find(std::string_view id) const;
    std::vector<std::string> ids() const;

    /// One centroid per row, in partition order.
    Centroids centroids() const;
    Eigen::VectorXd areas() const;

private:
    std::string name_;
    std::vector<Region> regions_;
};

using PartitionPtr = std::shared_ptr<const Partition>;

enum class QuantityKind { intensive, extensive };

struct ArealDataset {
    std::string id;
    PartitionPtr partition;
    Eigen::VectorXd values;
    QuantityKind kind = QuantityKind::intensive;

    /// Checks length and finiteness; throws ValidationError.
    void validate() const;
};

/// Row-stochastic coarse-over-fine operator with single membership per fine region.
struct AggregationMap {
    PartitionPtr coarse;
    PartitionPtr fine;
    Eigen::MatrixXd H;                      ///< |coarse| x |fine|
    std::vector<std::size_t> membership;    ///< coarse index for each fine region

    /// Fine indices belonging to coarse region i, ascending.
    std::vector<std::size_t> members(std::size_t coarse_index) const;
};

/// Ring signed area (positive when counter-clockwise).
double signed_area(const Ring& ring);

/// Area and area-weighted centroid of a set of polygons (holes subtract).
/// Throws ValidationError when the total area is not positive.
std::pair<double, Location2d> area_and_centroid(const std::vector<Polygon>& geometry,
                                                const std::string& region_id);

/// Parse a GeoJSON FeatureCollection. Each feature needs a string property "id"
/// and Polygon or MultiPolygon geometry. Warnings (e.g. geographic coordinates)
/// are appended to `warnings` when it is non-null.
Partition load_partition(std::string_view geojson, std::string name = "partition",
                         std::vector<std::string>* warnings = nullptr);
Partition load_partition_file(const std::string& path, std::vector<std::string>* warnings = nullptr);

/// Serialize as a GeoJSON FeatureCollection (deterministic formatting).
std::string to_geojson(const Partition& partition);

/// Parse a `region_id,value` CSV against a partition; every region must appear exactly once.
ArealDataset load_dataset(std::string_view csv, PartitionPtr partition, std::string id = "dataset",
                          QuantityKind kind = QuantityKind::intensive);
ArealDataset load_dataset_file(const std::string& path, PartitionPtr partition, std::string id,
                               QuantityKind kind = QuantityKind::intensive);
std::string to_csv(const ArealDataset& data);

/// Divide extensive values by region area. Errors on already-intensive input.
ArealDataset to_intensive(const ArealDataset& data);

/// Uniform H from centroid membership. Boundary ties go to the lexicographically
/// smallest coarse id.
AggregationMap build_aggregation(PartitionPtr coarse, PartitionPtr fine);

/// Validate a user-supplied H (nonnegative, unit row sums, one nonzero per column).
AggregationMap make_aggregation(PartitionPtr coarse, PartitionPtr fine, Eigen::MatrixXd H);

/// H * fine_values.
Eigen::VectorXd aggregate(const AggregationMap& map, const Eigen::VectorXd& fine_values);

std::string aggregation_to_csv(const AggregationMap& map);
AggregationMap aggregation_from_csv(std::string_view csv, PartitionPtr coarse, PartitionPtr fine);

/// Per-axis affine standardization of coordinates, applied before any kernel evaluation.
struct CoordinateTransform {
    Eigen::Vector2d center = Eigen::Vector2d::Zero();
    Eigen::Vector2d scale = Eigen::Vector2d::Ones();

    static CoordinateTransform identity() { return {}; }
    /// Zero mean and unit (population) variance per axis over `reference`.
    static CoordinateTransform standardize(const Centroids& reference);

    Centroids apply(const Centroids& X) const;
    bool operator==(const CoordinateTransform&) const = default;
};

}  // namespace downscale

#endif  // DOWNSCALE_GEO_HPP
