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

#include "downscale/gp_aux.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "downscale/errors.hpp"
#include "parallel.hpp"

namespace downscale {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Log-parameters beyond this magnitude are treated as infeasible.
constexpr double kLogBound = 30.0;

double median_pairwise_distance(const Centroids& X) {
    std::vector<double> d;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = i + 1; j < X.rows(); ++j) d.push_back((X.row(i) - X.row(j)).norm());
    if (d.empty()) return 1.0;
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    return *mid > 0 ? *mid : 1.0;
}

double min_pairwise_distance(const Centroids& X) {
    double best = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = i + 1; j < X.rows(); ++j) {
            const double d = (X.row(i) - X.row(j)).norm();
            if (d > 0 && (best == 0 || d < best)) best = d;
        }
    return best;
}

Eigen::MatrixXd noisy_gram(const Centroids& X, const GPHyper& h, double jitter) {
    Eigen::MatrixXd K = cov_matrix(h.kernel, X);
    K.diagonal().array() += h.sigma * h.sigma + jitter * h.kernel.variance();
    return K;
}

}  // namespace

Eigen::Vector3d GPHyper::to_log() const {
    return {std::log(kernel.alpha), std::log(kernel.gamma), std::log(sigma)};
}

GPHyper GPHyper::from_log(const Eigen::Vector3d& theta) {
    return {KernelParams::from_log(theta(0), theta(1)), std::exp(theta(2))};
}

double gp_log_marginal(const Centroids& X, const Eigen::VectorXd& y, const GPHyper& h, double jitter,
                       Eigen::VectorXd* grad) {
    if (X.rows() != y.size()) throw InputError("gp_log_marginal: centroid and value counts differ");
    if (!h.kernel.valid() || !(h.sigma >= 0)) throw InputError("gp_log_marginal: invalid hyperparameters");
    const Eigen::Index n = y.size();
    const Eigen::MatrixXd D2 = squared_distances(X, X);
    const Eigen::MatrixXd K = se_from_squared_distances(h.kernel, D2);
    Eigen::MatrixXd Ky = K;
    const double jitter_var = jitter * h.kernel.variance();
    Ky.diagonal().array() += h.sigma * h.sigma + jitter_var;

    const auto F = cholesky(Ky);
    const Eigen::VectorXd alpha = F.solve(y);
    const double value = -0.5 * y.dot(alpha) - 0.5 * F.log_det() -
                         0.5 * static_cast<double>(n) * std::log(2 * std::numbers::pi);

    if (grad) {
        // d/dtheta = 1/2 tr((alpha alpha^T - Ky^{-1}) dKy/dtheta)
        const Eigen::MatrixXd B = alpha * alpha.transpose() - F.inverse();
        const double gamma2 = h.kernel.gamma * h.kernel.gamma;
        grad->resize(3);
        (*grad)(0) = 0.5 * ((B.array() * (2.0 * K.array())).sum() + B.trace() * 2.0 * jitter_var);
        (*grad)(1) = 0.5 * (B.array() * K.array() * D2.array()).sum() / gamma2;
        (*grad)(2) = 0.5 * B.trace() * 2.0 * h.sigma * h.sigma;
    }
    return value;
}

GPFit fit_gp(const Centroids& X, const Eigen::VectorXd& y, const GPFitOptions& opts) {
    const Eigen::Index n = y.size();
    if (n < 1 || X.rows() != n) throw InputError("fit_gp: need matching, nonempty centroids and values");
    if (!y.allFinite()) throw InputError("fit_gp: non-finite training values");
    if (opts.restarts < 1) throw InputError("fit_gp: restarts must be at least 1");

    GPFit fit;
    fit.offset = opts.center ? y.mean() : 0.0;
    const Eigen::VectorXd yc = y.array() - fit.offset;
    const double spread = std::sqrt(yc.squaredNorm() / static_cast<double>(n));
    const bool degenerate = !(spread > 1e-12 * (1.0 + std::abs(fit.offset)));
    fit.scale = degenerate ? 1.0 : spread;
    const Eigen::VectorXd ys = yc / fit.scale;

    const double floor_std = opts.sigma_floor / fit.scale;
    const double gamma_floor = opts.length_scale_floor * min_pairwise_distance(X);
    const double gamma0 = std::max(median_pairwise_distance(X), 2.0 * gamma_floor);
    const Eigen::Vector3d start(std::log(degenerate ? 0.1 : 1.0), std::log(gamma0), std::log(degenerate ? 0.01 : 0.1));

    const Objective<double> objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd* g) -> double {
        if (theta.cwiseAbs().maxCoeff() > kLogBound || std::exp(theta(2)) < floor_std) return kInf;
        if (gamma_floor > 0 && std::exp(theta(1)) < gamma_floor) return kInf;
        try {
            const double v = gp_log_marginal(X, ys, GPHyper::from_log(theta), opts.jitter, g);
            if (g) *g = -*g;
            return -v;
        } catch (const FactorizationError&) {
            return kInf;
        }
    };

    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> perturb(0.0, 0.5);
    std::vector<Eigen::Vector3d> starts;
    for (int r = 0; r < opts.restarts; ++r) {
        Eigen::Vector3d s = start;
        if (r > 0)
            for (int k = 0; k < 3; ++k) s(k) += perturb(rng);
        s(2) = std::max(s(2), std::log(floor_std) + 1e-9);
        if (gamma_floor > 0) s(1) = std::max(s(1), std::log(gamma_floor) + 1e-9);
        starts.push_back(s);
    }

    bool have = false;
    OptimizeResult<double> best;
    std::string last_error;
    for (const auto& s : starts) {
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
    if (!have) throw NumericalError("GP hyperparameter fit failed on every restart: " + last_error);

    const GPHyper h = GPHyper::from_log(best.argmin.head<3>());
    fit.hyper = {KernelParams{h.kernel.alpha * fit.scale, h.kernel.gamma}, h.sigma * fit.scale};
    fit.log_marginal = -best.objective - static_cast<double>(n) * std::log(fit.scale);
    fit.iterations = best.iterations;
    fit.converged = best.converged;
    return fit;
}

GPPrediction gp_predict(const Centroids& X, const Eigen::VectorXd& y, const GPFit& fit, double jitter,
                        const Centroids& test) {
    if (X.rows() != y.size()) throw InputError("gp_predict: centroid and value counts differ");
    const auto F = cholesky(noisy_gram(X, fit.hyper, jitter));
    const Eigen::MatrixXd Ks = cov_matrix(fit.hyper.kernel, X, test);
    const Eigen::VectorXd yc = y.array() - fit.offset;

    GPPrediction out;
    out.mean = (Ks.transpose() * F.solve(yc)).array() + fit.offset;
    const Eigen::MatrixXd V = F.solve_lower(Ks);
    out.cov = cov_matrix(fit.hyper.kernel, test);
    out.cov.noalias() -= V.transpose() * V;
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    out.cov.diagonal() = out.cov.diagonal().cwiseMax(0.0);
    return out;
}

GPFit AuxGPModel::as_fit() const {
    GPFit f;
    f.hyper = {params, noise_sigma};
    f.offset = offset;
    f.scale = scale;
    f.log_marginal = log_marginal;
    f.iterations = iterations;
    f.converged = converged;
    return f;
}

AuxGPModel fit_aux_gp(const ArealDataset& data, const AuxFitOptions& opts) {
    data.validate();
    if (data.partition->size() < 2)
        throw InputError("auxiliary dataset '" + data.id + "' needs at least 2 regions");

    AuxGPModel m;
    m.dataset_id = data.id;
    m.train_centroids = data.partition->centroids();
    m.train_values = data.values;
    m.jitter = opts.jitter;
    m.transform = opts.transform;

    GPFitOptions g;
    g.restarts = opts.restarts;
    g.seed = opts.seed;
    g.jitter = opts.jitter;
    g.sigma_floor = opts.sigma_floor;
    g.center = true;
    g.length_scale_floor = opts.length_scale_floor;
    g.bfgs = opts.bfgs;
    GPFit fit;
    try {
        fit = fit_gp(m.transform.apply(m.train_centroids), m.train_values, g);
    } catch (const NumericalError& e) {
        throw NumericalError("auxiliary dataset '" + data.id + "': " + e.what());
    }

    m.params = fit.hyper.kernel;
    m.noise_sigma = fit.hyper.sigma;
    m.offset = fit.offset;
    m.scale = fit.scale;
    m.log_marginal = fit.log_marginal;
    m.iterations = fit.iterations;
    m.converged = fit.converged;
    return m;
}

AuxPosterior predict_aux(const AuxGPModel& model, const Centroids& test_centroids) {
    if (test_centroids.rows() == 0) throw InputError("predict_aux: no test centroids");
    auto pred = gp_predict(model.transform.apply(model.train_centroids), model.train_values, model.as_fit(),
                           model.jitter, model.transform.apply(test_centroids));
    AuxPosterior p;
    p.dataset_id = model.dataset_id;
    p.avg_variance = pred.cov.diagonal().mean();
    p.mean = std::move(pred.mean);
    p.cov = std::move(pred.cov);
    p.offset = model.offset;
    p.scale = model.scale;
    return p;
}

std::vector<AuxFit> fit_all_aux(const std::vector<ArealDataset>& datasets, const Partition& fine,
                                const AuxFitOptions& opts) {
    std::vector<AuxFit> out(datasets.size());
    const Centroids test = fine.centroids();
    std::vector<std::exception_ptr> errors;
    detail::parallel_for(
        datasets.size(),
        [&](std::size_t i) {
            AuxGPModel m = fit_aux_gp(datasets[i], opts);
            AuxPosterior p = predict_aux(m, test);
            out[i] = AuxFit{std::move(m), std::move(p)};
        },
        errors);

    std::string message;
    bool input_problem = false;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!errors[i]) continue;
        try {
            std::rethrow_exception(errors[i]);
        } catch (const InputError& e) {
            input_problem = true;
            message += "\n  " + datasets[i].id + ": " + e.what();
        } catch (const std::exception& e) {
            message += "\n  " + datasets[i].id + ": " + e.what();
        }
    }
    if (!message.empty()) {
        if (input_problem) throw InputError("auxiliary fits failed:" + message);
        throw NumericalError("auxiliary fits failed:" + message);
    }
    return out;
}

nlohmann::json to_json(const CoordinateTransform& t) {
    return {{"center", {t.center(0), t.center(1)}}, {"scale", {t.scale(0), t.scale(1)}}};
}

CoordinateTransform transform_from_json(const nlohmann::json& j) {
    try {
        CoordinateTransform t;
        t.center = {j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>()};
        t.scale = {j.at("scale").at(0).get<double>(), j.at("scale").at(1).get<double>()};
        if (!(t.scale.array() > 0).all()) throw ValidationError("transform scale must be positive");
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("coordinate transform: ") + e.what());
    }
}

nlohmann::json to_json(const AuxGPModel& m) {
    return {{"dataset_id", m.dataset_id},
            {"log_alpha", std::log(m.params.alpha)},
            {"log_gamma", std::log(m.params.gamma)},
            {"log_sigma", std::log(m.noise_sigma)},
            {"alpha", m.params.alpha},
            {"gamma", m.params.gamma},
            {"sigma", m.noise_sigma},
            {"offset", m.offset},
            {"scale", m.scale},
            {"log_marginal", m.log_marginal},
            {"jitter", m.jitter},
            {"iterations", m.iterations},
            {"converged", m.converged},
            {"transform", to_json(m.transform)}};
}

AuxGPModel aux_model_from_json(const nlohmann::json& j, const ArealDataset& data) {
    data.validate();
    AuxGPModel m;
    try {
        m.dataset_id = j.at("dataset_id").get<std::string>();
        m.params = {j.at("alpha").get<double>(), j.at("gamma").get<double>()};
        m.noise_sigma = j.at("sigma").get<double>();
        m.offset = j.at("offset").get<double>();
        m.scale = j.at("scale").get<double>();
        m.log_marginal = j.at("log_marginal").get<double>();
        m.jitter = j.at("jitter").get<double>();
        m.iterations = j.value("iterations", 0);
        m.converged = j.value("converged", false);
        m.transform = transform_from_json(j.at("transform"));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("auxiliary model: ") + e.what());
    }
    if (m.dataset_id != data.id)
        throw ValidationError("auxiliary model '" + m.dataset_id + "' does not match dataset '" + data.id + "'");
    if (!m.params.valid() || !(m.noise_sigma > 0)) throw ValidationError("auxiliary model has invalid parameters");
    m.train_centroids = data.partition->centroids();
    m.train_values = data.values;
    return m;
}

}  // namespace downscale
