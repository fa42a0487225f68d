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

// End-to-end wiring: load a dataset bundle, run both inference steps or a baseline.

#ifndef DOWNSCALE_PIPELINE_HPP
#define DOWNSCALE_PIPELINE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "downscale/baselines.hpp"
#include "downscale/geo.hpp"
#include "downscale/gp_aux.hpp"
#include "downscale/model.hpp"

namespace downscale {

struct AuxManifestEntry {
    std::string id;
    std::string geojson;  ///< resolved path
    std::string csv;      ///< resolved path
};

/// JSON array of {id, geojson, csv}; relative paths resolve against the manifest's directory.
std::vector<AuxManifestEntry> load_aux_manifest(const std::string& path);

struct BundlePaths {
    std::string target_csv;
    std::string coarse_geojson;
    std::string fine_geojson;
    std::string aux_manifest;
    std::optional<std::string> aggregation_csv;  ///< user-supplied H
    std::optional<std::string> truth_csv;        ///< fine-level truth, for evaluation
};

struct DataBundle {
    PartitionPtr coarse;
    PartitionPtr fine;
    ArealDataset target;
    std::vector<ArealDataset> aux;
    AggregationMap map;
    std::optional<ArealDataset> truth;
};

DataBundle load_bundle(const BundlePaths& paths, std::vector<std::string>* warnings = nullptr);

struct PipelineOptions {
    std::uint64_t seed = 0;
    int restarts = 5;
    double ridge = 0;
    double jitter = kDefaultJitter;
    double gtol = 1e-6;
};

/// Kernel-space coordinates: standardized over the fine centroids.
CoordinateTransform bundle_transform(const DataBundle& bundle);

std::vector<AuxFit> run_aux(const DataBundle& bundle, const PipelineOptions& opts);

struct ProposedRun {
    CoordinateTransform transform;
    std::vector<AuxFit> aux;
    DownscaleProblem problem;
    DownscaleFit fit;
    Refinement refinement;
};

/// Both inference steps and the fine predictive distribution. Pass `aux` to reuse
/// first-step fits computed with the same options.
ProposedRun run_proposed(const DataBundle& bundle, const PipelineOptions& opts,
                         const std::vector<AuxFit>* aux = nullptr);

/// Rebuild the second-step problem and refinement from stored parameters.
ProposedRun restore_proposed(const DataBundle& bundle, const PipelineOptions& opts, std::vector<AuxFit> aux,
                             const DownscaleParams& params);

BaselineResult run_baseline(const DataBundle& bundle, BaselineMethod method, const PipelineOptions& opts,
                            const std::vector<AuxFit>* aux = nullptr);

std::vector<AuxPosterior> posteriors_of(const std::vector<AuxFit>& fits);

}  // namespace downscale

#endif  // DOWNSCALE_PIPELINE_HPP
