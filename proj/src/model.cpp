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

#include "downscale/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/QR>

#include "downscale/errors.hpp"
#include "text_io.hpp"

namespace downscale {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogBound = 30.0;

double median_pairwise_distance(const Eigen::MatrixXd& sqdist) {
    std::vector<double> d;
    for (Eigen::Index j = 0; j < sqdist.cols(); ++j)
        for (Eigen::Index i = 0; i < j; ++i) d.push_back(std::sqrt(sqdist(i, j)));
    if (d.empty()) return 1.0;
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    return *mid > 0 ? *mid : 1.0;
}

double population_std(const Eigen::VectorXd& v) {
    if (v.size() == 0) return 0;
    return std::sqrt((v.array() - v.mean()).square().mean());
}

// Copy of `problem` with a and the auxiliary columns divided by c.
// Weights w_s are invariant; bias, alpha and sigma scale by 1/c.
DownscaleProblem rescaled(const DownscaleProblem& problem, double c) {
    DownscaleProblem out = problem;
    out.target /= c;
    const Eigen::Index S = problem.design.aux_count();
    out.design.values.leftCols(S) /= c;
    for (auto& cov : out.aux_cov) cov /= c * c;
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Design matrix and parameters

DesignMatrix build_design(const std::vector<AuxPosterior>& posteriors, Eigen::Index fine_count) {
    DesignMatrix d;
    const auto S = static_cast<Eigen::Index>(posteriors.size());
    d.values.resize(fine_count, S + 1);
    for (Eigen::Index s = 0; s < S; ++s) {
        const auto& p = posteriors[static_cast<std::size_t>(s)];
        if (p.mean.size() != fine_count)
            throw InputError("build_design: posterior '" + p.dataset_id + "' has " +
                             std::to_string(p.mean.size()) + " entries, expected " + std::to_string(fine_count));
        if (!p.mean.allFinite()) throw InputError("build_design: posterior '" + p.dataset_id + "' is not finite");
        d.values.col(s) = p.mean;
        d.column_ids.push_back(p.dataset_id);
    }
    d.values.col(S).setOnes();
    d.column_ids.emplace_back(kBiasColumn);
    return d;
}

DesignMatrix build_design(const std::vector<AuxPosterior>& posteriors) {
    if (posteriors.empty()) throw InputError("build_design: fine count unknown without posteriors");
    return build_design(posteriors, posteriors.front().mean.size());
}

Eigen::VectorXd DownscaleParams::pack() const {
    Eigen::VectorXd theta(w.size() + 3);
    theta.head(w.size()) = w;
    theta.tail<3>() << std::log(kernel.alpha), std::log(kernel.gamma), std::log(sigma);
    return theta;
}

DownscaleParams DownscaleParams::unpack(const Eigen::VectorXd& theta) {
    if (theta.size() < 4) throw InputError("DownscaleParams::unpack: theta too short");
    const Eigen::Index nw = theta.size() - 3;
    DownscaleParams p;
    p.w = theta.head(nw);
    p.kernel = KernelParams::from_log(theta(nw), theta(nw + 1));
    p.sigma = std::exp(theta(nw + 2));
    return p;
}

void DownscaleParams::validate() const {
    if (w.size() < 1 || !w.allFinite()) throw InputError("downscale params: weights must be finite");
    if (!kernel.valid()) throw InputError("downscale params: kernel parameters must be positive");
    if (!std::isfinite(sigma) || !(sigma > 0)) throw InputError("downscale params: sigma must be positive");
}

// ---------------------------------------------------------------------------
// Problem

DownscaleProblem DownscaleProblem::make(Eigen::VectorXd target, const std::vector<AuxPosterior>& posteriors,
                                        const Centroids& fine_centroids, Eigen::MatrixXd H, double jitter) {
    DownscaleProblem p;
    p.target = std::move(target);
    p.design = build_design(posteriors, fine_centroids.rows());
    for (const auto& post : posteriors) {
        if (post.cov.rows() != fine_centroids.rows() || post.cov.cols() != fine_centroids.rows())
            throw InputError("posterior '" + post.dataset_id + "' covariance has the wrong shape");
        p.aux_cov.push_back(post.cov);
    }
    p.fine_centroids = fine_centroids;
    p.H = std::move(H);
    p.jitter = jitter;
    p.fine_sqdist = squared_distances(p.fine_centroids, p.fine_centroids);
    p.validate();
    return p;
}

DownscaleProblem DownscaleProblem::make(const ArealDataset& target, const std::vector<AuxPosterior>& posteriors,
                                        const AggregationMap& map, const CoordinateTransform& transform,
                                        double jitter) {
    target.validate();
    if (target.partition != map.coarse && target.partition->ids() != map.coarse->ids())
        throw InputError("target dataset is not on the aggregation map's coarse partition");
    auto p = make(target.values, posteriors, transform.apply(map.fine->centroids()), map.H, jitter);
    p.fine_ids = map.fine->ids();
    return p;
}

void DownscaleProblem::validate() const {
    const Eigen::Index nf = fine_centroids.rows();
    if (H.cols() != nf) throw InputError("aggregation matrix columns do not match the fine centroids");
    if (target.size() != H.rows()) throw InputError("target length does not match the aggregation matrix rows");
    if (design.values.rows() != nf) throw InputError("design matrix rows do not match the fine centroids");
    if (static_cast<Eigen::Index>(aux_cov.size()) != design.aux_count())
        throw InputError("posterior covariance count does not match the design columns");
    if (!target.allFinite()) throw InputError("target values must be finite");
    if (!(jitter >= 0)) throw InputError("jitter must be nonnegative");
}

// ---------------------------------------------------------------------------
// Marginal likelihood

LambdaAssembly assemble_lambda(const DownscaleParams& params, const DownscaleProblem& problem) {
    params.validate();
    if (params.w.size() != problem.design.values.cols())
        throw InputError("assemble_lambda: weight count does not match the design matrix");

    LambdaAssembly out;
    out.omega = se_from_squared_distances(params.kernel, problem.fine_sqdist);
    for (std::size_t s = 0; s < problem.aux_cov.size(); ++s) {
        const double ws = params.w(static_cast<Eigen::Index>(s));
        out.omega.noalias() += (ws * ws) * problem.aux_cov[s];
    }
    out.lambda = problem.H * out.omega * problem.H.transpose();
    out.lambda = 0.5 * (out.lambda + out.lambda.transpose()).eval();
    out.lambda.diagonal().array() += params.sigma * params.sigma;

    out.jitter_added = problem.jitter * (params.sigma * params.sigma + params.kernel.variance());
    Eigen::MatrixXd jittered = out.lambda;
    jittered.diagonal().array() += out.jitter_added;
    try {
        out.factor = cholesky(jittered);
    } catch (const FactorizationError& e) {
        const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(jittered, Eigen::EigenvaluesOnly)
                                   .eigenvalues()
                                   .minCoeff();
        throw NumericalError(std::string("Lambda factorization failed: ") + e.what() +
                             "; smallest eigenvalue estimate " + text::format_double(min_eig));
    }
    return out;
}

double log_marginal(const DownscaleParams& params, const DownscaleProblem& problem,
                    const LambdaAssembly& assembly) {
    const Eigen::VectorXd r = problem.target - problem.H * (problem.design.values * params.w);
    const Eigen::VectorXd half = assembly.factor.solve_lower(r);
    return -0.5 * half.squaredNorm() - 0.5 * assembly.factor.log_det() -
           0.5 * static_cast<double>(r.size()) * std::log(2 * std::numbers::pi);
}

double log_marginal(const DownscaleParams& params, const DownscaleProblem& problem) {
    return log_marginal(params, problem, assemble_lambda(params, problem));
}

namespace {

// Value and gradient in one pass over a shared assembly.
double value_and_gradient(const DownscaleParams& params, const DownscaleProblem& problem, Eigen::VectorXd* grad) {
    const LambdaAssembly A = assemble_lambda(params, problem);
    const double value = log_marginal(params, problem, A);
    if (!grad) return value;

    const Eigen::Index S = problem.design.aux_count();
    const Eigen::MatrixXd HF = problem.H * problem.design.values;
    const Eigen::VectorXd r = problem.target - HF * params.w;
    const Eigen::VectorXd p = A.factor.solve(r);
    const Eigen::MatrixXd B = p * p.transpose() - A.factor.inverse();
    const Eigen::MatrixXd G = problem.H.transpose() * B * problem.H;
    const Eigen::MatrixXd K = se_from_squared_distances(params.kernel, problem.fine_sqdist);
    const double trB = B.trace();
    const double j = problem.jitter;

    grad->resize(params.w.size() + 3);
    // Mean term: d(-1/2 r^T Lambda^{-1} r)/dw = (H Fbar)^T p.
    grad->head(params.w.size()) = HF.transpose() * p;
    for (Eigen::Index s = 0; s < S; ++s)
        (*grad)(s) += params.w(s) * (G.array() * problem.aux_cov[static_cast<std::size_t>(s)].array()).sum();

    const Eigen::Index o = params.w.size();
    const double a2 = params.kernel.variance();
    const double g2 = params.kernel.gamma * params.kernel.gamma;
    const double s2 = params.sigma * params.sigma;
    (*grad)(o) = 0.5 * (2.0 * (G.array() * K.array()).sum() + 2.0 * j * a2 * trB);
    (*grad)(o + 1) = 0.5 * (G.array() * K.array() * problem.fine_sqdist.array()).sum() / g2;
    (*grad)(o + 2) = 0.5 * trB * 2.0 * s2 * (1.0 + j);
    return value;
}

}  // namespace

Eigen::VectorXd grad_log_marginal(const DownscaleParams& params, const DownscaleProblem& problem) {
    Eigen::VectorXd g;
    value_and_gradient(params, problem, &g);
    return g;
}

double downscale_objective(const Eigen::VectorXd& theta, const DownscaleProblem& problem, double ridge,
                           double sigma_floor, Eigen::VectorXd* grad) {
    const Eigen::Index nw = theta.size() - 3;
    if (theta.tail<3>().cwiseAbs().maxCoeff() > kLogBound) return kInf;
    const DownscaleParams params = DownscaleParams::unpack(theta);
    if (params.sigma < sigma_floor) return kInf;
    double value = 0;
    try {
        value = -value_and_gradient(params, problem, grad);
    } catch (const NumericalError&) {
        return kInf;
    }
    const auto aux_w = theta.head(nw - 1);
    value += ridge * aux_w.squaredNorm();
    if (grad) {
        *grad = -*grad;
        grad->head(nw - 1) += 2.0 * ridge * aux_w;
    }
    return value;
}

// ---------------------------------------------------------------------------
// Fitting and prediction

Eigen::VectorXd least_squares_weights(const DownscaleProblem& problem) {
    const Eigen::MatrixXd HF = problem.H * problem.design.values;
    return Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(HF).solve(problem.target);
}

DownscaleFit fit_downscale(const DownscaleProblem& problem, const DownscaleOptions& opts) {
    problem.validate();
    if (opts.restarts < 1) throw InputError("fit_downscale: restarts must be at least 1");
    if (opts.ridge < 0) throw InputError("fit_downscale: ridge must be nonnegative");

    const double spread = population_std(problem.target);
    const double c = spread > 1e-12 * (1.0 + std::abs(problem.target.mean())) ? spread : 1.0;
    const DownscaleProblem scaled = rescaled(problem, c);
    const Eigen::Index nw = scaled.design.values.cols();

    // Warm start from the least-squares weights and the residual spread.
    const Eigen::VectorXd w0 = least_squares_weights(scaled);
    const Eigen::VectorXd resid = scaled.target - scaled.H * (scaled.design.values * w0);
    const double alpha0 = std::max({population_std(resid), 0.1, 1e-3});
    const double floor_scaled = opts.sigma_floor / c;
    Eigen::VectorXd start(nw + 3);
    start.head(nw) = w0;
    start(nw) = std::log(alpha0);
    start(nw + 1) = std::log(median_pairwise_distance(scaled.fine_sqdist));
    start(nw + 2) = std::log(std::max(0.1 * alpha0, 2.0 * floor_scaled));

    // Ridge is defined on the original scale; weights are scale invariant.
    const Objective<double> objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd* g) {
        return downscale_objective(theta, scaled, opts.ridge, floor_scaled, g);
    };

    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> perturb(0.0, 0.5);
    bool have = false;
    OptimizeResult<double> best;
    std::string last_error = "objective not finite at any start";
    for (int r = 0; r < opts.restarts; ++r) {
        Eigen::VectorXd s = start;
        if (r > 0)
            for (int k = 0; k < 3; ++k) s(nw + k) += perturb(rng);
        s(nw + 2) = std::max(s(nw + 2), std::log(floor_scaled) + 1e-9);
        try {
            auto res = bfgs_minimize<double>(objective, s, opts.bfgs);
            if (!std::isfinite(res.objective)) continue;
            if (!have || res.objective < best.objective) {
                best = std::move(res);
                have = true;
            }
        } catch (const OptimizationError& e) {
            last_error = e.what();
        }
    }
    if (!have) throw NumericalError("downscale fit failed on every restart: " + last_error);

    DownscaleParams sp = DownscaleParams::unpack(best.argmin);
    DownscaleFit fit;
    fit.params.w = sp.w;
    fit.params.w(nw - 1) *= c;
    fit.params.kernel = {sp.kernel.alpha * c, sp.kernel.gamma};
    fit.params.sigma = sp.sigma * c;
    fit.log_marginal = log_marginal(fit.params, problem);
    fit.iterations = best.iterations;
    fit.converged = best.converged;
    return fit;
}

Refinement predict_fine(const DownscaleParams& params, const DownscaleProblem& problem) {
    problem.validate();
    const LambdaAssembly A = assemble_lambda(params, problem);
    const Eigen::VectorXd prior_mean = problem.design.values * params.w;
    const Eigen::VectorXd r = problem.target - problem.H * prior_mean;
    const Eigen::MatrixXd HOmega = problem.H * A.omega;  // |coarse| x |fine|

    Refinement out;
    out.mean = prior_mean + HOmega.transpose() * A.factor.solve(r);
    const Eigen::MatrixXd V = A.factor.solve_lower(HOmega);
    out.cov = A.omega;
    out.cov.noalias() -= V.transpose() * V;
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    out.cov.diagonal() = out.cov.diagonal().cwiseMax(0.0);
    out.region_ids = problem.fine_ids;
    out.params = params;
    out.log_marginal = log_marginal(params, problem, A);
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const DownscaleParams& params, const DesignMatrix& design) {
    if (static_cast<std::size_t>(params.w.size()) != design.column_ids.size())
        throw InputError("to_json: weight count does not match the design columns");
    nlohmann::json w = nlohmann::json::array();
    for (std::size_t k = 0; k < design.column_ids.size(); ++k)
        w.push_back({{"column", design.column_ids[k]}, {"value", params.w(static_cast<Eigen::Index>(k))}});
    return {{"w", w},
            {"log_alpha", std::log(params.kernel.alpha)},
            {"log_gamma", std::log(params.kernel.gamma)},
            {"log_sigma", std::log(params.sigma)},
            {"alpha", params.kernel.alpha},
            {"gamma", params.kernel.gamma},
            {"sigma", params.sigma}};
}

DownscaleParams params_from_json(const nlohmann::json& j, const DesignMatrix& design) {
    DownscaleParams p;
    try {
        const auto& w = j.at("w");
        if (w.size() != design.column_ids.size())
            throw ValidationError("model has " + std::to_string(w.size()) + " weights, design has " +
                                  std::to_string(design.column_ids.size()) + " columns");
        p.w.resize(static_cast<Eigen::Index>(w.size()));
        for (std::size_t k = 0; k < w.size(); ++k) {
            const auto col = w[k].at("column").get<std::string>();
            if (col != design.column_ids[k])
                throw ValidationError("model column '" + col + "' does not match design column '" +
                                      design.column_ids[k] + "'");
            p.w(static_cast<Eigen::Index>(k)) = w[k].at("value").get<double>();
        }
        p.kernel = {j.at("alpha").get<double>(), j.at("gamma").get<double>()};
        p.sigma = j.at("sigma").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("downscale model: ") + e.what());
    }
    p.validate();
    return p;
}

std::string refinement_csv(const std::vector<std::string>& region_ids, const Eigen::VectorXd& mean,
                           const Eigen::VectorXd* variance) {
    if (static_cast<Eigen::Index>(region_ids.size()) != mean.size() ||
        (variance && variance->size() != mean.size()))
        throw InputError("refinement_csv: length mismatch");
    std::string out = variance ? "region_id,mean,variance\n" : "region_id,mean\n";
    for (std::size_t i = 0; i < region_ids.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        out += text::csv_field(region_ids[i]) + "," + text::format_double(mean(k));
        if (variance) out += "," + text::format_double((*variance)(k));
        out += "\n";
    }
    return out;
}

std::string covariance_csv(const std::vector<std::string>& region_ids, const Eigen::MatrixXd& cov) {
    if (static_cast<Eigen::Index>(region_ids.size()) != cov.rows() || cov.rows() != cov.cols())
        throw InputError("covariance_csv: shape mismatch");
    std::string out;
    for (const auto& id : region_ids) out += "," + text::csv_field(id);
    out += "\n";
    for (Eigen::Index i = 0; i < cov.rows(); ++i) {
        out += text::csv_field(region_ids[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < cov.cols(); ++j) out += "," + text::format_double(cov(i, j));
        out += "\n";
    }
    return out;
}

}  // namespace downscale
