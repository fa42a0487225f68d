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

#include "downscale/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <memory>
#include <random>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "downscale/errors.hpp"
#include "text_io.hpp"

namespace downscale {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Metrics

MetricReport mape(const Eigen::VectorXd& truth, const Eigen::VectorXd& pred,
                  const std::vector<std::string>& region_ids) {
    if (truth.size() != pred.size()) throw InputError("mape: truth and prediction lengths differ");
    if (truth.size() == 0) throw InputError("mape: empty input");
    if (!region_ids.empty() && static_cast<Eigen::Index>(region_ids.size()) != truth.size())
        throw InputError("mape: region id count does not match");
    for (Eigen::Index i = 0; i < truth.size(); ++i) {
        if (truth(i) == 0) {
            const std::string name =
                region_ids.empty() ? "#" + std::to_string(i) : region_ids[static_cast<std::size_t>(i)];
            throw InputError("mape: truth is zero at region " + name + "; percentage error undefined");
        }
    }
    if (!truth.allFinite() || !pred.allFinite()) throw InputError("mape: non-finite input");

    const Eigen::ArrayXd err = (truth - pred).array();
    const Eigen::ArrayXd rel = err / truth.array();
    const double n = static_cast<double>(truth.size());

    MetricReport r;
    r.ape_per_region = rel.abs().matrix();
    r.mape = r.ape_per_region.mean();
    r.mae = err.abs().mean();
    r.rmse = std::sqrt(err.square().mean());
    r.rmspe = std::sqrt(rel.square().mean());
    if (truth.size() > 1) {
        const double var = (r.ape_per_region.array() - r.mape).square().sum() / (n - 1);
        r.std_error_ape = std::sqrt(var / n);
    }
    return r;
}

std::string TTestResult::stars() const {
    if (p < 0.01) return "★★";
    if (p < 0.05) return "★";
    return "";
}

TTestResult paired_ttest(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw InputError("paired_ttest: lengths differ");
    if (a.size() < 3) throw InputError("paired_ttest: need at least 3 pairs");
    const Eigen::ArrayXd d = (a - b).array();
    const double n = static_cast<double>(d.size());
    const double mean = d.mean();
    const double sd = std::sqrt((d - mean).square().sum() / (n - 1));

    TTestResult r;
    r.df = static_cast<int>(d.size()) - 1;
    if (!(sd > 0)) {
        r.degenerate = true;
        if (mean == 0) {
            r.t = 0;
            r.p = 1;
        } else {
            r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
            r.p = 0;
        }
        return r;
    }
    r.t = mean / (sd / std::sqrt(n));
    const boost::math::students_t dist(static_cast<double>(r.df));
    r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
    r.p = std::min(1.0, r.p);
    return r;
}

// ---------------------------------------------------------------------------
// Synthetic instances

namespace {

std::string padded(int v, int width) {
    std::string s = std::to_string(v);
    return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

// Draws one sample of N(0, C) using the symmetric eigendecomposition, which
// tolerates the near-singular Gram matrices of smooth kernels on dense grids.
Eigen::VectorXd sample_gaussian(const Eigen::MatrixXd& C, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd xi(C.rows());
    for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = normal(rng);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(C);
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * (root.asDiagonal() * xi);
}

nlohmann::json grid_json(const GridSpec& g) { return {{"nx", g.nx}, {"ny", g.ny}}; }
GridSpec grid_from_json(const nlohmann::json& j) { return {j.at("nx").get<int>(), j.at("ny").get<int>()}; }
nlohmann::json kernel_json(const KernelParams& k) { return {{"alpha", k.alpha}, {"gamma", k.gamma}}; }
KernelParams kernel_from_json(const nlohmann::json& j) {
    return {j.at("alpha").get<double>(), j.at("gamma").get<double>()};
}

}  // namespace

Partition make_grid_partition(const GridSpec& grid, const std::string& prefix, const std::string& name) {
    if (grid.nx < 1 || grid.ny < 1) throw InputError("grid dimensions must be positive");
    const int wx = static_cast<int>(std::to_string(grid.nx - 1).size());
    const int wy = static_cast<int>(std::to_string(grid.ny - 1).size());
    std::vector<Region> regions;
    regions.reserve(static_cast<std::size_t>(grid.size()));
    for (int iy = 0; iy < grid.ny; ++iy) {
        for (int ix = 0; ix < grid.nx; ++ix) {
            const double x0 = static_cast<double>(ix) / grid.nx, x1 = static_cast<double>(ix + 1) / grid.nx;
            const double y0 = static_cast<double>(iy) / grid.ny, y1 = static_cast<double>(iy + 1) / grid.ny;
            Region r;
            r.id = prefix + padded(ix, wx) + "_" + padded(iy, wy);
            r.geometry = {Polygon{{Ring{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}}}}};
            auto [area, c] = area_and_centroid(r.geometry, r.id);
            r.area = area;
            r.centroid = c;
            regions.push_back(std::move(r));
        }
    }
    return Partition(name, std::move(regions));
}

SyntheticSpec SyntheticSpec::standard(std::uint64_t seed) {
    SyntheticSpec s;
    s.fields = {{{1.0, 0.15}, 1.0}, {{1.0, 0.25}, -0.6}, {{1.0, 0.4}, 0.4}};
    s.aux = {{"aux_fine", {10, 10}, 0, 0.05}, {"aux_mid", {6, 5}, 1, 0.05}, {"aux_coarse", {4, 3}, 2, 0.05}};
    s.seed = seed;
    return s;
}

SyntheticSpec SyntheticSpec::twin(std::uint64_t seed) {
    SyntheticSpec s;
    s.fields = {{{1.0, 0.2}, 1.0}};
    s.aux = {{"twin_coarse", {5, 1}, 0, 0.05}, {"twin_fine", {10, 10}, 0, 0.05}};
    s.seed = seed;
    return s;
}

void SyntheticSpec::validate() const {
    if (fine.nx < 1 || fine.ny < 1 || coarse.nx < 1 || coarse.ny < 1) throw InputError("synthetic: invalid grid");
    if (coarse.size() > fine.size()) throw InputError("synthetic: coarse grid is finer than the fine grid");
    if (!target_kernel.valid()) throw InputError("synthetic: invalid target kernel");
    if (!(target_noise >= 0)) throw InputError("synthetic: target noise must be nonnegative");
    for (const auto& f : fields)
        if (!f.kernel.valid() || !std::isfinite(f.weight)) throw InputError("synthetic: invalid latent field");
    std::set<std::string> ids;
    for (const auto& a : aux) {
        if (a.field >= fields.size()) throw InputError("synthetic: auxiliary '" + a.id + "' references no field");
        if (a.grid.nx < 1 || a.grid.ny < 1 || a.grid.size() < 2)
            throw InputError("synthetic: auxiliary '" + a.id + "' needs at least 2 regions");
        if (!(a.noise >= 0)) throw InputError("synthetic: negative noise");
        if (a.id.empty() || a.id == kBiasColumn || !ids.insert(a.id).second)
            throw InputError("synthetic: auxiliary ids must be unique, nonempty and not 'bias'");
    }
}

SyntheticInstance generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticInstance inst;
    inst.spec = spec;
    inst.fine = std::make_shared<const Partition>(make_grid_partition(spec.fine, "f", "fine"));
    inst.coarse = std::make_shared<const Partition>(make_grid_partition(spec.coarse, "c", "coarse"));
    inst.map = build_aggregation(inst.coarse, inst.fine);

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Centroids Xf = inst.fine->centroids();
    const Eigen::Index nf = Xf.rows();

    std::vector<PartitionPtr> aux_parts;
    for (const auto& a : spec.aux)
        aux_parts.push_back(std::make_shared<const Partition>(make_grid_partition(a.grid, a.id + "_", a.id)));

    // Latent fields sampled jointly at the fine centroids and every auxiliary centroid.
    Eigen::VectorXd mean_z = Eigen::VectorXd::Zero(nf);
    std::vector<Eigen::VectorXd> aux_latent(spec.aux.size());
    for (std::size_t k = 0; k < spec.fields.size(); ++k) {
        std::vector<std::size_t> users;
        Eigen::Index total = nf;
        for (std::size_t s = 0; s < spec.aux.size(); ++s)
            if (spec.aux[s].field == k) {
                users.push_back(s);
                total += static_cast<Eigen::Index>(aux_parts[s]->size());
            }
        Centroids X(total, 2);
        X.topRows(nf) = Xf;
        Eigen::Index row = nf;
        for (std::size_t s : users) {
            const Centroids Xs = aux_parts[s]->centroids();
            X.middleRows(row, Xs.rows()) = Xs;
            row += Xs.rows();
        }
        const Eigen::VectorXd f = sample_gaussian(cov_matrix(spec.fields[k].kernel, X), rng);
        mean_z += spec.fields[k].weight * f.head(nf);
        row = nf;
        for (std::size_t s : users) {
            const auto n = static_cast<Eigen::Index>(aux_parts[s]->size());
            aux_latent[s] = f.segment(row, n);
            row += n;
        }
    }

    for (std::size_t s = 0; s < spec.aux.size(); ++s) {
        Eigen::VectorXd y = aux_latent[s];
        for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += spec.aux[s].noise * normal(rng);
        inst.aux.push_back(ArealDataset{spec.aux[s].id, aux_parts[s], std::move(y), QuantityKind::intensive});
    }

    double var = spec.target_kernel.variance();
    for (const auto& f : spec.fields) var += f.weight * f.weight * f.kernel.variance();
    inst.positivity_offset = 5.0 * std::sqrt(var);

    const Eigen::VectorXd residual = sample_gaussian(cov_matrix(spec.target_kernel, Xf), rng);
    inst.z_true = (mean_z + residual).array() + (spec.bias + inst.positivity_offset);

    Eigen::VectorXd a = inst.map.H * inst.z_true;
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) += spec.target_noise * normal(rng);
    inst.target = ArealDataset{"target", inst.coarse, std::move(a), QuantityKind::intensive};

    // Fields shared by several auxiliaries split their weight evenly.
    inst.true_w.resize(static_cast<Eigen::Index>(spec.aux.size()) + 1);
    for (std::size_t s = 0; s < spec.aux.size(); ++s) {
        const auto sharing = std::count_if(spec.aux.begin(), spec.aux.end(),
                                           [&](const AuxSpec& o) { return o.field == spec.aux[s].field; });
        inst.true_w(static_cast<Eigen::Index>(s)) = spec.fields[spec.aux[s].field].weight / static_cast<double>(sharing);
    }
    inst.true_w(static_cast<Eigen::Index>(spec.aux.size())) = spec.bias + inst.positivity_offset;
    return inst;
}

DataBundle SyntheticInstance::bundle() const {
    DataBundle b;
    b.coarse = coarse;
    b.fine = fine;
    b.target = target;
    b.aux = aux;
    b.map = map;
    b.truth = ArealDataset{"truth", fine, z_true, QuantityKind::intensive};
    return b;
}

nlohmann::json to_json(const SyntheticSpec& spec) {
    nlohmann::json fields = nlohmann::json::array();
    for (const auto& f : spec.fields) fields.push_back({{"kernel", kernel_json(f.kernel)}, {"weight", f.weight}});
    nlohmann::json aux = nlohmann::json::array();
    for (const auto& a : spec.aux)
        aux.push_back({{"id", a.id}, {"grid", grid_json(a.grid)}, {"field", a.field}, {"noise", a.noise}});
    return {{"fine", grid_json(spec.fine)},
            {"coarse", grid_json(spec.coarse)},
            {"fields", fields},
            {"aux", aux},
            {"target_kernel", kernel_json(spec.target_kernel)},
            {"target_noise", spec.target_noise},
            {"bias", spec.bias},
            {"seed", spec.seed}};
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
    SyntheticSpec s;
    try {
        s.fine = grid_from_json(j.at("fine"));
        s.coarse = grid_from_json(j.at("coarse"));
        for (const auto& f : j.at("fields"))
            s.fields.push_back({kernel_from_json(f.at("kernel")), f.at("weight").get<double>()});
        for (const auto& a : j.at("aux"))
            s.aux.push_back({a.at("id").get<std::string>(), grid_from_json(a.at("grid")),
                             a.at("field").get<std::size_t>(), a.at("noise").get<double>()});
        s.target_kernel = kernel_from_json(j.at("target_kernel"));
        s.target_noise = j.at("target_noise").get<double>();
        s.bias = j.value("bias", 0.0);
        s.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("synthetic spec: ") + e.what());
    }
    s.validate();
    return s;
}

BundlePaths synthetic_paths(const std::string& dir) {
    const fs::path d(dir);
    BundlePaths p;
    p.target_csv = (d / "target.csv").string();
    p.coarse_geojson = (d / "coarse.geojson").string();
    p.fine_geojson = (d / "fine.geojson").string();
    p.aux_manifest = (d / "aux_manifest.json").string();
    p.truth_csv = (d / "truth.csv").string();
    return p;
}

void write_synthetic(const SyntheticInstance& inst, const std::string& dir) {
    const fs::path d(dir);
    std::error_code ec;
    fs::create_directories(d / "aux", ec);
    if (ec) throw InputError("cannot create directory " + (d / "aux").string() + ": " + ec.message());

    text::write_file((d / "coarse.geojson").string(), to_geojson(*inst.coarse));
    text::write_file((d / "fine.geojson").string(), to_geojson(*inst.fine));
    text::write_file((d / "target.csv").string(), to_csv(inst.target));
    text::write_file((d / "truth.csv").string(),
                     to_csv(ArealDataset{"truth", inst.fine, inst.z_true, QuantityKind::intensive}));
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& a : inst.aux) {
        const std::string geo = "aux/" + a.id + ".geojson";
        const std::string csv = "aux/" + a.id + ".csv";
        text::write_file((d / geo).string(), to_geojson(*a.partition));
        text::write_file((d / csv).string(), to_csv(a));
        manifest.push_back({{"id", a.id}, {"geojson", geo}, {"csv", csv}});
    }
    text::write_file((d / "aux_manifest.json").string(), manifest.dump(2) + "\n");

    nlohmann::json w = nlohmann::json::array();
    for (std::size_t s = 0; s < inst.aux.size(); ++s)
        w.push_back({{"column", inst.aux[s].id}, {"value", inst.true_w(static_cast<Eigen::Index>(s))}});
    w.push_back({{"column", kBiasColumn}, {"value", inst.true_w(inst.true_w.size() - 1)}});
    const nlohmann::json meta = {{"spec", to_json(inst.spec)},
                                 {"true_w", w},
                                 {"positivity_offset", inst.positivity_offset},
                                 {"note", "truth values include the positivity offset"}};
    text::write_file((d / "synthetic.json").string(), meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Comparison

ComparisonTable run_comparison(const DataBundle& bundle, const std::vector<std::string>& methods,
                               const PipelineOptions& opts) {
    ComparisonTable table;
    if (methods.empty()) return table;
    if (!bundle.truth) throw InputError("comparison needs fine-level truth");
    std::set<std::string> seen;
    bool need_aux = false;
    for (const auto& m : methods) {
        if (m != kProposed) parse_baseline_method(m);
        if (!seen.insert(m).second) throw InputError("method '" + m + "' listed twice");
        need_aux = need_aux || m != "gpr";
    }

    std::vector<AuxFit> aux;
    if (need_aux) aux = run_aux(bundle, opts);
    const auto ids = bundle.fine->ids();
    table.reference = methods.front();
    for (const auto& m : methods) {
        ComparisonRow row;
        row.method = m;
        if (m == kProposed)
            row.prediction = run_proposed(bundle, opts, &aux).refinement.mean;
        else
            row.prediction = run_baseline(bundle, parse_baseline_method(m), opts, &aux).prediction;
        row.metrics = mape(bundle.truth->values, row.prediction, ids);
        table.rows.push_back(std::move(row));
    }

    const auto& ref = table.rows.front();
    if (ref.metrics.ape_per_region.size() < 3) return table;
    bool ref_best = true;
    double worst_p = 0;
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
        auto& row = table.rows[i];
        row.vs_reference = paired_ttest(ref.metrics.ape_per_region, row.metrics.ape_per_region);
        worst_p = std::max(worst_p, row.vs_reference->p);
        ref_best = ref_best && ref.metrics.mape < row.metrics.mape;
    }
    if (table.rows.size() > 1 && ref_best) {
        TTestResult summary;
        summary.p = worst_p;
        table.rows.front().stars = summary.stars();
    }
    return table;
}

std::string comparison_csv(const ComparisonTable& table) {
    using text::format_double;
    std::string out = "method,mape,std_error_ape,mae,rmse,rmspe,t_vs_reference,p_vs_reference,stars\n";
    for (const auto& r : table.rows) {
        out += text::csv_field(r.method) + "," + format_double(r.metrics.mape) + "," +
               format_double(r.metrics.std_error_ape) + "," + format_double(r.metrics.mae) + "," +
               format_double(r.metrics.rmse) + "," + format_double(r.metrics.rmspe) + ",";
        if (r.vs_reference) out += format_double(r.vs_reference->t) + "," + format_double(r.vs_reference->p);
        else out += ",";
        out += "," + r.stars + "\n";
    }
    return out;
}

std::string comparison_text(const ComparisonTable& table) {
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "%-10s %-22s %10s %10s %10s %10s\n", "method", "MAPE ± SE", "MAE", "RMSE",
                  "RMSPE", "p(vs ref)");
    out += line;
    for (const auto& r : table.rows) {
        char cell[64];
        std::snprintf(cell, sizeof cell, "%.4f ± %.4f%s", r.metrics.mape, r.metrics.std_error_ape, r.stars.c_str());
        char p[32] = "-";
        if (r.vs_reference) std::snprintf(p, sizeof p, "%.4g", r.vs_reference->p);
        // The ± and star glyphs are multi-byte; pad by display width.
        std::string c(cell);
        std::size_t display = 0;
        for (unsigned char ch : c) display += (ch & 0xC0) != 0x80;
        c.append(display < 22 ? 22 - display : 0, ' ');
        std::snprintf(line, sizeof line, "%-10s %s %10.4f %10.4f %10.4f %10s\n", r.method.c_str(), c.c_str(),
                      r.metrics.mae, r.metrics.rmse, r.metrics.rmspe, p);
        out += line;
    }
    if (!table.rows.empty())
        out += "reference: " + table.reference + "; ★ p < 0.05, ★★ p < 0.01 (paired t-test on per-region APE)\n";
    return out;
}

}  // namespace downscale
