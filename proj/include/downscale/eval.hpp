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

#ifndef DOWNSCALE_EVAL_HPP
#define DOWNSCALE_EVAL_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "downscale/pipeline.hpp"

namespace downscale {

// ---------------------------------------------------------------------------
// Metrics

struct MetricReport {
    double mape = 0;
    double mae = 0;
    double rmse = 0;
    double rmspe = 0;
    Eigen::VectorXd ape_per_region;
    double std_error_ape = 0;  ///< sample std of the per-region APE over sqrt(n)
};

/// Errors of `pred` against `truth`. A zero truth entry is an error naming the
/// region (from `region_ids` when given, else the index).
MetricReport mape(const Eigen::VectorXd& truth, const Eigen::VectorXd& pred,
                  const std::vector<std::string>& region_ids = {});

struct TTestResult {
    double t = 0;
    double p = 1;
    int df = 0;
    bool degenerate = false;  ///< zero variance of the differences

    bool significant_05() const { return p < 0.05; }
    bool significant_01() const { return p < 0.01; }
    /// "", "★" (p < 0.05) or "★★" (p < 0.01).
    std::string stars() const;
};

/// Two-sided paired t-test on a - b.
TTestResult paired_ttest(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// ---------------------------------------------------------------------------
// Synthetic instances

struct GridSpec {
    int nx = 1;
    int ny = 1;
    int size() const { return nx * ny; }
};

/// Regular nx-by-ny grid over the unit square; ids are `prefix` + zero-padded column/row.
Partition make_grid_partition(const GridSpec& grid, const std::string& prefix, const std::string& name);

struct LatentFieldSpec {
    KernelParams kernel{1.0, 0.3};
    double weight = 1.0;  ///< true regression weight of this field in the target mean
};

struct AuxSpec {
    std::string id;
    GridSpec grid;
    std::size_t field = 0;  ///< index into SyntheticSpec::fields
    double noise = 0.05;
};

struct SyntheticSpec {
    GridSpec fine{12, 10};
    GridSpec coarse{6, 5};
    std::vector<LatentFieldSpec> fields;
    std::vector<AuxSpec> aux;
    KernelParams target_kernel{0.3, 0.25};
    double target_noise = 0.01;  ///< sigma of a given H z
    double bias = 0;             ///< w_0 before the positivity offset
    std::uint64_t seed = 0;

    /// Three latent fields observed at 100, 30 and 12 regions.
    static SyntheticSpec standard(std::uint64_t seed = 0);
    /// One latent field observed twice, at 5 and 100 regions.
    static SyntheticSpec twin(std::uint64_t seed = 0);

    void validate() const;
};

struct SyntheticInstance {
    SyntheticSpec spec;
    PartitionPtr fine;
    PartitionPtr coarse;
    AggregationMap map;
    std::vector<ArealDataset> aux;
    Eigen::VectorXd z_true;         ///< fine truth
    ArealDataset target;            ///< a on the coarse partition
    Eigen::VectorXd true_w;         ///< one weight per auxiliary dataset, then the bias
    double positivity_offset = 0;   ///< constant added to the bias so the truth stays positive

    DataBundle bundle() const;
};

/// Forward-samples latent fields, auxiliary observations, z and a from `spec.seed`.
SyntheticInstance generate_synthetic(const SyntheticSpec& spec);

/// Writes coarse.geojson, fine.geojson, target.csv, truth.csv, aux/<id>.{geojson,csv},
/// aux_manifest.json and synthetic.json into `dir`.
void write_synthetic(const SyntheticInstance& instance, const std::string& dir);
BundlePaths synthetic_paths(const std::string& dir);

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Comparison

inline constexpr const char* kProposed = "proposed";

struct ComparisonRow {
    std::string method;
    MetricReport metrics;
    Eigen::VectorXd prediction;
    std::optional<TTestResult> vs_reference;  ///< paired t-test of this row's APE against the reference row
    std::string stars;
};

struct ComparisonTable {
    std::string reference;  ///< first method listed
    std::vector<ComparisonRow> rows;
};

/// Runs each of `methods` (proposed, gpr, lr, sd2) against the bundle's truth.
ComparisonTable run_comparison(const DataBundle& bundle, const std::vector<std::string>& methods,
                               const PipelineOptions& opts);

std::string comparison_csv(const ComparisonTable& table);
std::string comparison_text(const ComparisonTable& table);

}  // namespace downscale

#endif  // DOWNSCALE_EVAL_HPP
