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

// First inference step: one GP per auxiliary dataset, fitted by maximizing
// log N(y | 0, K + sigma^2 I), then evaluated at the fine-partition centroids.

#ifndef DOWNSCALE_GP_AUX_HPP
#define DOWNSCALE_GP_AUX_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "downscale/geo.hpp"
#include "downscale/kernel.hpp"
#include "downscale/numerics.hpp"

namespace downscale {

inline constexpr double kDefaultJitter = 1e-8;
inline constexpr double kDefaultSigmaFloor = 1e-6;
/// Smallest admissible length scale, in units of the smallest centroid spacing.
inline constexpr double kDefaultLengthScaleFloor = 1.0;

/// Kernel hyperparameters plus observation noise.
struct GPHyper {
    KernelParams kernel;
    double sigma = 1;

    Eigen::Vector3d to_log() const;
    static GPHyper from_log(const Eigen::Vector3d& theta);
};

/// Log marginal likelihood log N(y | 0, K + (sigma^2 + jitter alpha^2) I) on
/// kernel-space coordinates. When `grad` is non-null it receives the gradient
/// with respect to (log alpha, log gamma, log sigma).
double gp_log_marginal(const Centroids& X, const Eigen::VectorXd& y, const GPHyper& h, double jitter,
                       Eigen::VectorXd* grad = nullptr);

struct GPFitOptions {
    int restarts = 5;
    std::uint64_t seed = 0;
    double jitter = kDefaultJitter;
    double sigma_floor = kDefaultSigmaFloor;
    bool center = true;  ///< false gives a zero-mean (simple kriging) fit
    /// Length scales below this multiple of the smallest nonzero training-centroid
    /// spacing are rejected; 0 disables the floor.
    double length_scale_floor = kDefaultLengthScaleFloor;
    BfgsOptions bfgs{};
};

/// Result of a hyperparameter fit on raw (kernel-space) inputs.
struct GPFit {
    GPHyper hyper;
    double offset = 0;  ///< empirical mean removed before fitting (0 when not centering)
    double scale = 1;   ///< standard deviation used to condition the optimizer
    double log_marginal = 0;
    int iterations = 0;
    bool converged = false;
};

/// Maximize the marginal likelihood with `restarts` starts around heuristic defaults.
/// X must already be in kernel-space coordinates.
GPFit fit_gp(const Centroids& X, const Eigen::VectorXd& y, const GPFitOptions& opts);

/// Predictive mean and covariance at `test` given a fitted GP (all in kernel space).
struct GPPrediction {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};
GPPrediction gp_predict(const Centroids& X, const Eigen::VectorXd& y, const GPFit& fit, double jitter,
                        const Centroids& test);

struct AuxGPModel {
    std::string dataset_id;
    KernelParams params;       ///< data units
    double noise_sigma = 1;    ///< data units
    Centroids train_centroids; ///< raw coordinates
    Eigen::VectorXd train_values;
    double offset = 0;
    double scale = 1;
    double log_marginal = 0;
    double jitter = kDefaultJitter;
    CoordinateTransform transform;
    int iterations = 0;
    bool converged = false;

    GPFit as_fit() const;
};

struct AuxPosterior {
    std::string dataset_id;
    Eigen::VectorXd mean;  ///< data units, offset re-added
    Eigen::MatrixXd cov;
    double avg_variance = 0;
    double offset = 0;
    double scale = 1;
};

struct AuxFitOptions {
    int restarts = 5;
    std::uint64_t seed = 0;
    double jitter = kDefaultJitter;
    double sigma_floor = kDefaultSigmaFloor;
    double length_scale_floor = kDefaultLengthScaleFloor;  ///< see GPFitOptions
    CoordinateTransform transform;
    BfgsOptions bfgs{};
};

AuxGPModel fit_aux_gp(const ArealDataset& data, const AuxFitOptions& opts = {});

/// Posterior at raw `test_centroids` (the model's transform is applied).
AuxPosterior predict_aux(const AuxGPModel& model, const Centroids& test_centroids);

struct AuxFit {
    AuxGPModel model;
    AuxPosterior posterior;
};

/// Independent fits, run concurrently (capped by DOWNSCALE_THREADS). Output order
/// follows input order; a failure reports every failing dataset id.
std::vector<AuxFit> fit_all_aux(const std::vector<ArealDataset>& datasets, const Partition& fine,
                                const AuxFitOptions& opts = {});

nlohmann::json to_json(const AuxGPModel& model);
/// Rebuild a model from its JSON record and the training dataset it was fitted on.
AuxGPModel aux_model_from_json(const nlohmann::json& j, const ArealDataset& data);

nlohmann::json to_json(const CoordinateTransform& t);
CoordinateTransform transform_from_json(const nlohmann::json& j);

}  // namespace downscale

#endif  // DOWNSCALE_GP_AUX_HPP
