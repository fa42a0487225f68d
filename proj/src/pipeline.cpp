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

#include "downscale/pipeline.hpp"

#include <filesystem>
#include <memory>
#include <set>

#include <json.hpp>

#include "downscale/errors.hpp"
#include "text_io.hpp"

namespace downscale {

namespace fs = std::filesystem;

namespace {

void require_file(const std::string& path, const std::string& what) {
    if (!fs::is_regular_file(path)) throw InputError(what + " not found: " + path);
}

std::string resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

AuxFitOptions aux_options(const DataBundle& bundle, const PipelineOptions& opts) {
    AuxFitOptions a;
    a.restarts = opts.restarts;
    a.seed = opts.seed;
    a.jitter = opts.jitter;
    a.transform = bundle_transform(bundle);
    a.bfgs.gtol = opts.gtol;
    return a;
}

GPFitOptions gp_options(const PipelineOptions& opts) {
    GPFitOptions g;
    g.restarts = opts.restarts;
    g.seed = opts.seed;
    g.jitter = opts.jitter;
    g.bfgs.gtol = opts.gtol;
    return g;
}

}  // namespace

std::vector<AuxManifestEntry> load_aux_manifest(const std::string& path) {
    require_file(path, "auxiliary manifest");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("auxiliary manifest " + path + ": " + e.what());
    }
    if (!doc.is_array()) throw ParseError("auxiliary manifest " + path + ": expected a JSON array");
    const fs::path base = fs::path(path).parent_path();
    std::vector<AuxManifestEntry> out;
    std::set<std::string> seen;
    for (const auto& e : doc) {
        if (!e.is_object() || !e.contains("id") || !e.contains("geojson") || !e.contains("csv") ||
            !e["id"].is_string() || !e["geojson"].is_string() || !e["csv"].is_string())
            throw ParseError("auxiliary manifest " + path + ": entries need string id, geojson, csv");
        AuxManifestEntry m{e["id"].get<std::string>(), resolve(base, e["geojson"].get<std::string>()),
                           resolve(base, e["csv"].get<std::string>())};
        if (m.id == kBiasColumn) throw ValidationError("auxiliary id 'bias' is reserved");
        if (!seen.insert(m.id).second) throw ValidationError("auxiliary manifest: duplicate id '" + m.id + "'");
        out.push_back(std::move(m));
    }
    return out;
}

DataBundle load_bundle(const BundlePaths& paths, std::vector<std::string>* warnings) {
    require_file(paths.coarse_geojson, "coarse partition");
    require_file(paths.fine_geojson, "fine partition");
    require_file(paths.target_csv, "target dataset");
    const auto manifest = load_aux_manifest(paths.aux_manifest);
    for (const auto& m : manifest) {
        require_file(m.geojson, "auxiliary geometry '" + m.id + "'");
        require_file(m.csv, "auxiliary dataset '" + m.id + "'");
    }
    if (paths.aggregation_csv) require_file(*paths.aggregation_csv, "aggregation matrix");
    if (paths.truth_csv) require_file(*paths.truth_csv, "truth dataset");

    DataBundle b;
    b.coarse = std::make_shared<const Partition>(load_partition_file(paths.coarse_geojson, warnings));
    b.fine = std::make_shared<const Partition>(load_partition_file(paths.fine_geojson, warnings));
    b.target = load_dataset_file(paths.target_csv, b.coarse, "target");
    for (const auto& m : manifest) {
        auto part = std::make_shared<const Partition>(load_partition_file(m.geojson, warnings));
        b.aux.push_back(load_dataset_file(m.csv, std::move(part), m.id));
    }
    b.map = paths.aggregation_csv
                ? aggregation_from_csv(text::read_file(*paths.aggregation_csv), b.coarse, b.fine)
                : build_aggregation(b.coarse, b.fine);
    if (paths.truth_csv) b.truth = load_dataset_file(*paths.truth_csv, b.fine, "truth");
    return b;
}

CoordinateTransform bundle_transform(const DataBundle& bundle) {
    return CoordinateTransform::standardize(bundle.fine->centroids());
}

std::vector<AuxFit> run_aux(const DataBundle& bundle, const PipelineOptions& opts) {
    return fit_all_aux(bundle.aux, *bundle.fine, aux_options(bundle, opts));
}

std::vector<AuxPosterior> posteriors_of(const std::vector<AuxFit>& fits) {
    std::vector<AuxPosterior> out;
    out.reserve(fits.size());
    for (const auto& f : fits) out.push_back(f.posterior);
    return out;
}

ProposedRun run_proposed(const DataBundle& bundle, const PipelineOptions& opts, const std::vector<AuxFit>* aux) {
    ProposedRun run;
    run.transform = bundle_transform(bundle);
    run.aux = aux ? *aux : run_aux(bundle, opts);
    run.problem = DownscaleProblem::make(bundle.target, posteriors_of(run.aux), bundle.map, run.transform, opts.jitter);

    DownscaleOptions d;
    d.restarts = opts.restarts;
    d.seed = opts.seed;
    d.ridge = opts.ridge;
    d.bfgs.gtol = opts.gtol;
    run.fit = fit_downscale(run.problem, d);
    run.refinement = predict_fine(run.fit.params, run.problem);
    run.refinement.iterations = run.fit.iterations;
    return run;
}

ProposedRun restore_proposed(const DataBundle& bundle, const PipelineOptions& opts, std::vector<AuxFit> aux,
                             const DownscaleParams& params) {
    ProposedRun run;
    run.transform = bundle_transform(bundle);
    run.aux = std::move(aux);
    run.problem = DownscaleProblem::make(bundle.target, posteriors_of(run.aux), bundle.map, run.transform, opts.jitter);
    run.fit.params = params;
    run.fit.log_marginal = log_marginal(params, run.problem);
    run.refinement = predict_fine(params, run.problem);
    return run;
}

BaselineResult run_baseline(const DataBundle& bundle, BaselineMethod method, const PipelineOptions& opts,
                            const std::vector<AuxFit>* aux) {
    if (method == BaselineMethod::gpr) {
        GprBaselineOptions g;
        g.gp = gp_options(opts);
        g.transform = bundle_transform(bundle);
        return gpr_baseline(bundle.target, *bundle.fine, g);
    }
    const std::vector<AuxFit> fits = aux ? *aux : run_aux(bundle, opts);
    const auto posteriors = posteriors_of(fits);
    if (method == BaselineMethod::lr) return lr_baseline(bundle.target, posteriors, bundle.map);
    Sd2BaselineOptions s;
    s.gp = gp_options(opts);
    s.transform = bundle_transform(bundle);
    return sd2_baseline(bundle.target, posteriors, bundle.map, s);
}

}  // namespace downscale
