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

#include "downscale/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "downscale/errors.hpp"
#include "downscale/eval.hpp"
#include "downscale/pipeline.hpp"
#include "downscale/svg.hpp"
#include "text_io.hpp"

namespace downscale {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct DataFlags {
    std::string data_dir;
    std::string target, coarse, fine, aux_manifest, aggregation, truth;
};

struct RunFlags {
    std::string out = ".";
    std::uint64_t seed = 0;
    int restarts = 5;
    double ridge = 0;
    double jitter = kDefaultJitter;
    double gtol = 1e-6;
};

void add_data_flags(CLI::App* cmd, DataFlags& d, bool with_truth) {
    cmd->add_option("--data", d.data_dir, "Directory laid out like synth output; fills unset paths");
    cmd->add_option("--target", d.target, "Coarse target CSV (region_id,value)");
    cmd->add_option("--coarse", d.coarse, "Coarse partition GeoJSON");
    cmd->add_option("--fine", d.fine, "Fine partition GeoJSON");
    cmd->add_option("--aux-manifest", d.aux_manifest, "JSON array of {id, geojson, csv}");
    cmd->add_option("--aggregation", d.aggregation, "Aggregation matrix CSV (coarse rows, fine columns)");
    if (with_truth) cmd->add_option("--truth", d.truth, "Fine-level truth CSV");
}

void add_run_flags(CLI::App* cmd, RunFlags& r) {
    cmd->add_option("--out", r.out, "Output directory")->capture_default_str();
    cmd->add_option("--seed", r.seed, "Random seed for optimizer restarts")->capture_default_str();
    cmd->add_option("--restarts", r.restarts, "Optimizer restarts")->check(CLI::Range(1, 1000))->capture_default_str();
    cmd->add_option("--ridge", r.ridge, "Ridge penalty on auxiliary weights")->check(CLI::NonNegativeNumber);
    cmd->add_option("--jitter", r.jitter, "Relative diagonal jitter")->check(CLI::NonNegativeNumber);
    cmd->add_option("--gtol", r.gtol, "Gradient-norm tolerance")->check(CLI::PositiveNumber);
}

BundlePaths resolve_paths(const DataFlags& d, bool need_truth) {
    BundlePaths p;
    if (!d.data_dir.empty()) p = synthetic_paths(d.data_dir);
    if (d.data_dir.empty()) p.truth_csv.reset();
    if (!d.target.empty()) p.target_csv = d.target;
    if (!d.coarse.empty()) p.coarse_geojson = d.coarse;
    if (!d.fine.empty()) p.fine_geojson = d.fine;
    if (!d.aux_manifest.empty()) p.aux_manifest = d.aux_manifest;
    if (!d.aggregation.empty()) p.aggregation_csv = d.aggregation;
    if (!d.truth.empty()) p.truth_csv = d.truth;
    if (!need_truth) p.truth_csv.reset();
    const std::pair<const char*, const std::string*> required[] = {{"--target", &p.target_csv},
                                                                    {"--coarse", &p.coarse_geojson},
                                                                    {"--fine", &p.fine_geojson},
                                                                    {"--aux-manifest", &p.aux_manifest}};
    for (const auto& [flag, value] : required)
        if (value->empty()) throw InputError(std::string(flag) + " is required (or pass --data)");
    if (need_truth && !p.truth_csv) throw InputError("--truth is required for eval");
    return p;
}

PipelineOptions pipeline_options(const RunFlags& r) {
    PipelineOptions o;
    o.seed = r.seed;
    o.restarts = r.restarts;
    o.ridge = r.ridge;
    o.jitter = r.jitter;
    o.gtol = r.gtol;
    return o;
}

DataBundle load(const BundlePaths& p, std::ostream& err) {
    std::vector<std::string> warnings;
    DataBundle b = load_bundle(p, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << "\n";
    return b;
}

json input_record(const std::string& path) {
    return {{"path", path}, {"fnv1a64", hex64(fnv1a64(text::read_file(path)))}};
}

json inputs_json(const BundlePaths& p) {
    json in = {{"target", input_record(p.target_csv)},
               {"coarse", input_record(p.coarse_geojson)},
               {"fine", input_record(p.fine_geojson)},
               {"aux_manifest", input_record(p.aux_manifest)}};
    json aux = json::array();
    for (const auto& m : load_aux_manifest(p.aux_manifest))
        aux.push_back({{"id", m.id}, {"geojson", input_record(m.geojson)}, {"csv", input_record(m.csv)}});
    in["aux"] = aux;
    if (p.aggregation_csv) in["aggregation"] = input_record(*p.aggregation_csv);
    if (p.truth_csv) in["truth"] = input_record(*p.truth_csv);
    return in;
}

fs::path prepare_out(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw InputError("cannot create output directory " + dir);
    return fs::path(dir);
}

void write_json(const fs::path& path, const json& j) { text::write_file(path.string(), j.dump(2) + "\n"); }

void write_manifest(const fs::path& out, const std::string& command, const RunFlags& r, const BundlePaths& p,
                    const std::vector<std::string>& outputs, json extra = json::object()) {
    json m = {{"command", command},
              {"version", kVersion},
              {"seed", r.seed},
              {"restarts", r.restarts},
              {"ridge", r.ridge},
              {"jitter", r.jitter},
              {"gtol", r.gtol},
              {"inputs", inputs_json(p)},
              {"outputs", outputs}};
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    write_json(out / ("manifest_" + command + ".json"), m);
}

std::string fine_fingerprint(const Partition& fine) {
    std::string joined;
    for (const auto& id : fine.ids()) joined += id + "\n";
    return hex64(fnv1a64(joined));
}

json read_json(const fs::path& path, const std::string& what) {
    if (!fs::is_regular_file(path)) throw InputError(what + " not found: " + path.string());
    try {
        return json::parse(text::read_file(path.string()));
    } catch (const json::exception& e) {
        throw ParseError(what + " " + path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------

int cmd_fit(const DataFlags& d, const RunFlags& r, std::ostream& out, std::ostream& err) {
    const BundlePaths paths = resolve_paths(d, false);
    const DataBundle bundle = load(paths, err);
    const fs::path dir = prepare_out(r.out);
    const ProposedRun run = run_proposed(bundle, pipeline_options(r));

    json aux = json::array();
    for (const auto& a : run.aux) aux.push_back(to_json(a.model));
    write_json(dir / "aux_models.json", {{"version", kVersion}, {"models", aux}});

    const json model = {{"version", kVersion},
                        {"params", to_json(run.fit.params, run.problem.design)},
                        {"log_marginal", run.fit.log_marginal},
                        {"iterations", run.fit.iterations},
                        {"converged", run.fit.converged},
                        {"jitter", r.jitter},
                        {"transform", to_json(run.transform)},
                        {"coarse_regions", bundle.coarse->size()},
                        {"fine_regions", bundle.fine->size()},
                        {"fine_ids_fnv1a64", fine_fingerprint(*bundle.fine)}};
    write_json(dir / "model.json", model);
    write_manifest(dir, "fit", r, paths, {"aux_models.json", "model.json"});

    out << "fitted " << run.aux.size() << " auxiliary GP(s); log marginal " << run.fit.log_marginal
        << (run.fit.converged ? "" : " (not converged)") << "\n";
    for (std::size_t k = 0; k < run.problem.design.column_ids.size(); ++k)
        out << "  w[" << run.problem.design.column_ids[k] << "] = " << run.fit.params.w(static_cast<Eigen::Index>(k))
            << "\n";
    return kExitOk;
}

int cmd_refine(const DataFlags& d, const RunFlags& r, const std::string& models_dir, bool full_cov,
               std::ostream& out, std::ostream& err) {
    const BundlePaths paths = resolve_paths(d, false);
    const DataBundle bundle = load(paths, err);
    const fs::path mdir(models_dir.empty() ? r.out : models_dir);
    const json aux_doc = read_json(mdir / "aux_models.json", "auxiliary models");
    const json model = read_json(mdir / "model.json", "model");

    std::vector<AuxFit> aux;
    const CoordinateTransform transform = bundle_transform(bundle);
    try {
        const auto& models = aux_doc.at("models");
        if (models.size() != bundle.aux.size())
            throw ValidationError("model has " + std::to_string(models.size()) + " auxiliary datasets, manifest has " +
                                  std::to_string(bundle.aux.size()));
        for (std::size_t s = 0; s < bundle.aux.size(); ++s) {
            AuxFit f;
            f.model = aux_model_from_json(models[s], bundle.aux[s]);
            if (!(f.model.transform == transform))
                throw ValidationError("auxiliary model '" + f.model.dataset_id + "' was fitted on a different fine partition");
            f.posterior = predict_aux(f.model, bundle.fine->centroids());
            aux.push_back(std::move(f));
        }
        if (model.at("fine_regions").get<std::size_t>() != bundle.fine->size() ||
            model.at("fine_ids_fnv1a64").get<std::string>() != fine_fingerprint(*bundle.fine) ||
            model.at("coarse_regions").get<std::size_t>() != bundle.coarse->size())
            throw ValidationError("model was fitted on different partitions");
    } catch (const json::exception& e) {
        throw ParseError(std::string("model files: ") + e.what());
    }

    PipelineOptions opts = pipeline_options(r);
    opts.jitter = model.value("jitter", r.jitter);
    const DesignMatrix design = build_design(posteriors_of(aux), static_cast<Eigen::Index>(bundle.fine->size()));
    const DownscaleParams params = params_from_json(model.at("params"), design);
    const ProposedRun run = restore_proposed(bundle, opts, std::move(aux), params);

    const fs::path dir = prepare_out(r.out);
    const auto ids = bundle.fine->ids();
    const Eigen::VectorXd var = run.refinement.variance();
    text::write_file((dir / "prediction.csv").string(), refinement_csv(ids, run.refinement.mean, &var));
    text::write_file((dir / "prediction.svg").string(),
                     choropleth_svg(*bundle.fine, run.refinement.mean, {800, "predicted mean"}));
    std::vector<std::string> outputs{"prediction.csv", "prediction.svg"};
    if (full_cov) {
        text::write_file((dir / "covariance.csv").string(), covariance_csv(ids, run.refinement.cov));
        outputs.push_back("covariance.csv");
    }
    write_manifest(dir, "refine", r, paths, outputs,
                   {{"models", {{"aux_models", input_record((mdir / "aux_models.json").string())},
                                {"model", input_record((mdir / "model.json").string())}}}});
    out << "wrote " << ids.size() << " fine predictions to " << (dir / "prediction.csv").string() << "\n";
    return kExitOk;
}

int cmd_baseline(const DataFlags& d, const RunFlags& r, const std::string& method_name_arg, std::ostream& out,
                 std::ostream& err) {
    const BaselineMethod method = parse_baseline_method(method_name_arg);
    const BundlePaths paths = resolve_paths(d, false);
    const DataBundle bundle = load(paths, err);
    const fs::path dir = prepare_out(r.out);
    const BaselineResult res = run_baseline(bundle, method, pipeline_options(r));

    const std::string stem = "baseline_" + std::string(method_name(method));
    const auto ids = bundle.fine->ids();
    text::write_file((dir / (stem + ".csv")).string(),
                     refinement_csv(ids, res.prediction, res.variance ? &*res.variance : nullptr));
    text::write_file((dir / (stem + ".svg")).string(),
                     choropleth_svg(*bundle.fine, res.prediction, {800, std::string(method_name(method))}));
    json params = json::object();
    for (const auto& [k, v] : res.params) params[k] = v;
    write_json(dir / (stem + ".json"), {{"version", kVersion}, {"method", method_name(method)}, {"params", params}});
    write_manifest(dir, "baseline", r, paths, {stem + ".csv", stem + ".svg", stem + ".json"},
                   {{"method", method_name(method)}});
    out << "wrote " << method_name(method) << " predictions to " << (dir / (stem + ".csv")).string() << "\n";
    return kExitOk;
}

int cmd_eval(const DataFlags& d, const RunFlags& r, std::vector<std::string> methods, std::ostream& out,
             std::ostream& err) {
    if (methods.empty()) methods = {kProposed, "sd2", "lr", "gpr"};
    for (const auto& m : methods)
        if (m != kProposed && m != "gpr" && m != "lr" && m != "sd2")
            throw InputError("unknown method '" + m + "' (valid: proposed, gpr, lr, sd2)");
    const BundlePaths paths = resolve_paths(d, true);
    const DataBundle bundle = load(paths, err);
    const fs::path dir = prepare_out(r.out);
    const ComparisonTable table = run_comparison(bundle, methods, pipeline_options(r));
    text::write_file((dir / "comparison.csv").string(), comparison_csv(table));
    const std::string txt = comparison_text(table);
    text::write_file((dir / "comparison.txt").string(), txt);
    write_manifest(dir, "eval", r, paths, {"comparison.csv", "comparison.txt"}, {{"methods", methods}});
    out << txt;
    return kExitOk;
}

int cmd_synth(const std::string& out_dir, std::uint64_t seed, const std::string& scenario, const std::string& config,
              std::ostream& out) {
    SyntheticSpec spec;
    if (!config.empty()) {
        spec = synthetic_spec_from_json(read_json(config, "synthetic spec"));
    } else if (scenario == "standard") {
        spec = SyntheticSpec::standard(seed);
    } else if (scenario == "twin") {
        spec = SyntheticSpec::twin(seed);
    } else {
        throw InputError("unknown scenario '" + scenario + "' (valid: standard, twin)");
    }
    const SyntheticInstance inst = generate_synthetic(spec);
    prepare_out(out_dir);
    write_synthetic(inst, out_dir);
    out << "wrote synthetic instance (" << inst.coarse->size() << " coarse, " << inst.fine->size() << " fine, "
        << inst.aux.size() << " auxiliary) to " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Statistical downscaling with Gaussian processes over auxiliary areal data", "downscale"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    DataFlags d;
    RunFlags r;
    std::string models_dir, method, scenario = "standard", config;
    std::vector<std::string> methods;
    bool full_cov = false;

    auto* fit = app.add_subcommand("fit", "Fit auxiliary GPs and the downscaling model");
    add_data_flags(fit, d, false);
    add_run_flags(fit, r);

    auto* refine = app.add_subcommand("refine", "Predict fine values from fitted models");
    add_data_flags(refine, d, false);
    add_run_flags(refine, r);
    refine->add_option("--models", models_dir, "Directory holding model.json and aux_models.json (default: --out)");
    refine->add_flag("--full-cov", full_cov, "Also write the full predictive covariance");

    auto* baseline = app.add_subcommand("baseline", "Run a baseline method");
    add_data_flags(baseline, d, false);
    add_run_flags(baseline, r);
    baseline->add_option("--method", method, "gpr, lr or sd2")->required();

    auto* eval = app.add_subcommand("eval", "Compare methods against fine-level truth");
    add_data_flags(eval, d, true);
    add_run_flags(eval, r);
    eval->add_option("--method", methods, "Methods to compare; the first is the reference")->delimiter(',');

    auto* synth = app.add_subcommand("synth", "Write a synthetic instance directory");
    std::string synth_out = "synthetic";
    std::uint64_t synth_seed = 0;
    synth->add_option("--out", synth_out, "Output directory")->capture_default_str();
    synth->add_option("--seed", synth_seed, "Generator seed");
    synth->add_option("--scenario", scenario, "standard or twin")->capture_default_str();
    synth->add_option("--config", config, "JSON synthetic spec (overrides --scenario and --seed)");

    std::vector<const char*> argv{"downscale"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return kExitOk;
        }
        app.exit(e, out, err);
        return kExitInput;
    }

    try {
        if (*fit) return cmd_fit(d, r, out, err);
        if (*refine) return cmd_refine(d, r, models_dir, full_cov, out, err);
        if (*baseline) return cmd_baseline(d, r, method, out, err);
        if (*eval) return cmd_eval(d, r, methods, out, err);
        if (*synth) return cmd_synth(synth_out, synth_seed, scenario, config, out);
    } catch (const InputError& e) {
        err << "error[input]: " << e.what() << "\n";
        return kExitInput;
    } catch (const NumericalError& e) {
        err << "error[numerical]: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << "error[internal]: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitInput;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace downscale
