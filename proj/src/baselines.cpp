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

#include "downscale/baselines.hpp"

#include <Eigen/QR>

#include "downscale/errors.hpp"
#include "downscale/model.hpp"

namespace downscale {

namespace {

void check_target(const ArealDataset& a, const AggregationMap& map) {
    a.validate();
    if (a.partition != map.coarse && a.partition->ids() != map.coarse->ids())
        throw InputError("target dataset is not on the aggregation map's coarse partition");
}

struct Regression {
    DesignMatrix design;
    Eigen::VectorXd w;
};

Regression regress(const ArealDataset& a, const std::vector<AuxPosterior>& posteriors, const AggregationMap& map) {
    check_target(a, map);
    Regression r;
    r.design = build_design(posteriors, map.H.cols());
    const Eigen::MatrixXd coarse_design = map.H * r.design.values;
    r.w = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(coarse_design).solve(a.values);
    return r;
}

void record_weights(BaselineResult& out, const Regression& r) {
    for (std::size_t k = 0; k < r.design.column_ids.size(); ++k)
        out.params["w:" + r.design.column_ids[k]] = r.w(static_cast<Eigen::Index>(k));
}

void record_hyper(BaselineResult& out, const GPFit& fit, const std::string& prefix) {
    out.params[prefix + "alpha"] = fit.hyper.kernel.alpha;
    out.params[prefix + "gamma"] = fit.hyper.kernel.gamma;
    out.params[prefix + "sigma"] = fit.hyper.sigma;
    out.params[prefix + "offset"] = fit.offset;
}

}  // namespace

std::string_view method_name(BaselineMethod m) {
    switch (m) {
        case BaselineMethod::gpr: return "gpr";
        case BaselineMethod::lr: return "lr";
        case BaselineMethod::sd2: return "sd2";
    }
    return "unknown";
}

BaselineMethod parse_baseline_method(std::string_view name) {
    if (name == "gpr") return BaselineMethod::gpr;
    if (name == "lr") return BaselineMethod::lr;
    if (name == "sd2") return BaselineMethod::sd2;
    throw InputError("unknown baseline method '" + std::string(name) + "' (valid: gpr, lr, sd2)");
}

BaselineResult gpr_baseline(const ArealDataset& coarse_target, const Partition& fine,
                            const GprBaselineOptions& opts) {
    coarse_target.validate();
    GPFitOptions gp = opts.gp;
    gp.center = true;
    const Centroids X = opts.transform.apply(coarse_target.partition->centroids());
    const GPFit fit = fit_gp(X, coarse_target.values, gp);
    auto pred = gp_predict(X, coarse_target.values, fit, gp.jitter, opts.transform.apply(fine.centroids()));

    BaselineResult out;
    out.method = BaselineMethod::gpr;
    out.prediction = std::move(pred.mean);
    out.variance = pred.cov.diagonal();
    record_hyper(out, fit, "");
    out.params["log_marginal"] = fit.log_marginal;
    return out;
}

BaselineResult lr_baseline(const ArealDataset& coarse_target, const std::vector<AuxPosterior>& posteriors,
                           const AggregationMap& map) {
    const Regression r = regress(coarse_target, posteriors, map);
    BaselineResult out;
    out.method = BaselineMethod::lr;
    out.regression = r.design.values * r.w;
    out.prediction = out.regression;
    record_weights(out, r);
    return out;
}

BaselineResult sd2_baseline(const ArealDataset& coarse_target, const std::vector<AuxPosterior>& posteriors,
                            const AggregationMap& map, const Sd2BaselineOptions& opts) {
    const Regression r = regress(coarse_target, posteriors, map);

    BaselineResult out;
    out.method = BaselineMethod::sd2;
    out.regression = r.design.values * r.w;
    out.coarse_residual = coarse_target.values - map.H * out.regression;

    const Centroids X = opts.transform.apply(map.coarse->centroids());
    GPFit fit;
    if (opts.fixed_residual_hyper) {
        fit.hyper = *opts.fixed_residual_hyper;
    } else {
        GPFitOptions gp = opts.gp;
        gp.center = false;
        fit = fit_gp(X, out.coarse_residual, gp);
    }
    out.kriged_residual =
        gp_predict(X, out.coarse_residual, fit, opts.gp.jitter, opts.transform.apply(map.fine->centroids())).mean;
    out.prediction = out.regression + out.kriged_residual;

    record_weights(out, r);
    record_hyper(out, fit, "residual_");
    return out;
}

}  // namespace downscale
