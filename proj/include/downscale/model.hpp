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

// Second inference step. The coarse target a is modelled as
//
//   F* ~ prod_s N(f*_s | mean_s, Sigma*_s)
//   z  | F* ~ N(F* w, K)
//   a  | z  ~ N(H z, sigma^2 I)
//
// and with F* and z integrated out, a ~ N(H Fbar w, Lambda) where
//
//   Lambda = sigma^2 I + H Omega H^T,   Omega = K + sum_s w_s^2 Sigma*_s.
//
// Parameters are packed as theta = [w_1..w_S, w_0, log alpha, log gamma, log sigma];
// the bias sits last among the weights to line up with the trailing ones column.

#ifndef DOWNSCALE_MODEL_HPP
#define DOWNSCALE_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "downscale/geo.hpp"
#include "downscale/gp_aux.hpp"
#include "downscale/kernel.hpp"
#include "downscale/numerics.hpp"

namespace downscale {

inline constexpr const char* kBiasColumn = "bias";

/// Posterior means as columns, then a column of ones.
struct DesignMatrix {
    Eigen::MatrixXd values;               ///< |fine| x (S + 1)
    std::vector<std::string> column_ids;  ///< S auxiliary ids, then "bias"

    Eigen::Index aux_count() const { return values.cols() - 1; }
};

DesignMatrix build_design(const std::vector<AuxPosterior>& posteriors, Eigen::Index fine_count);
/// Same, with the fine count taken from the first posterior (at least one required).
DesignMatrix build_design(const std::vector<AuxPosterior>& posteriors);

struct DownscaleParams {
    Eigen::VectorXd w;  ///< S auxiliary weights, then bias
    KernelParams kernel;
    double sigma = 1;

    Eigen::Index aux_count() const { return w.size() - 1; }
    Eigen::VectorXd pack() const;
    static DownscaleParams unpack(const Eigen::VectorXd& theta);
    void validate() const;
};

/// Everything the second step needs, in kernel-space coordinates.
struct DownscaleProblem {
    Eigen::VectorXd target;                ///< a
    DesignMatrix design;
    std::vector<Eigen::MatrixXd> aux_cov;  ///< Sigma*_s in design column order
    Centroids fine_centroids;              ///< already transformed
    Eigen::MatrixXd H;
    double jitter = kDefaultJitter;        ///< relative to sigma^2 + alpha^2
    std::vector<std::string> fine_ids;     ///< optional; copied into refinements

    /// Squared distances between fine centroids, cached.
    Eigen::MatrixXd fine_sqdist;

    static DownscaleProblem make(Eigen::VectorXd target, const std::vector<AuxPosterior>& posteriors,
                                 const Centroids& fine_centroids, Eigen::MatrixXd H,
                                 double jitter = kDefaultJitter);
    static DownscaleProblem make(const ArealDataset& target, const std::vector<AuxPosterior>& posteriors,
                                 const AggregationMap& map, const CoordinateTransform& transform,
                                 double jitter = kDefaultJitter);

    Eigen::Index coarse_count() const { return H.rows(); }
    Eigen::Index fine_count() const { return H.cols(); }
    void validate() const;
};

struct LambdaAssembly {
    Eigen::MatrixXd omega;   ///< K + sum_s w_s^2 Sigma*_s
    Eigen::MatrixXd lambda;  ///< sigma^2 I + H Omega H^T (no jitter)
    double jitter_added = 0; ///< diagonal jitter applied before factorization
    CholeskyFactor<double> factor;
};

LambdaAssembly assemble_lambda(const DownscaleParams& params, const DownscaleProblem& problem);

/// log N(a | H Fbar w, Lambda + jitter I).
double log_marginal(const DownscaleParams& params, const DownscaleProblem& problem,
                    const LambdaAssembly& assembly);
double log_marginal(const DownscaleParams& params, const DownscaleProblem& problem);

/// Gradient of log_marginal with respect to the packed theta.
Eigen::VectorXd grad_log_marginal(const DownscaleParams& params, const DownscaleProblem& problem);

/// Negative log marginal plus an optional ridge on w_1..w_S, as a function of theta.
/// Returns +inf when sigma falls below `sigma_floor` (0 disables the floor).
double downscale_objective(const Eigen::VectorXd& theta, const DownscaleProblem& problem, double ridge,
                           double sigma_floor, Eigen::VectorXd* grad);

struct DownscaleOptions {
    int restarts = 5;
    std::uint64_t seed = 0;
    double ridge = 0;
    double sigma_floor = kDefaultSigmaFloor;
    BfgsOptions bfgs{};
};

struct DownscaleFit {
    DownscaleParams params;
    double log_marginal = 0;
    int iterations = 0;
    bool converged = false;
};

/// Least-squares warm start (minimum norm) for w on H Fbar.
Eigen::VectorXd least_squares_weights(const DownscaleProblem& problem);

DownscaleFit fit_downscale(const DownscaleProblem& problem, const DownscaleOptions& opts = {});

struct Refinement {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    std::vector<std::string> region_ids;
    DownscaleParams params;
    double log_marginal = 0;
    int iterations = 0;

    Eigen::VectorXd variance() const { return cov.diagonal(); }
};

/// Predictive mean Fbar w + Omega H^T Lambda^{-1} (a - H Fbar w) and covariance
/// Omega - Omega H^T Lambda^{-1} H Omega.
Refinement predict_fine(const DownscaleParams& params, const DownscaleProblem& problem);

nlohmann::json to_json(const DownscaleParams& params, const DesignMatrix& design);
DownscaleParams params_from_json(const nlohmann::json& j, const DesignMatrix& design);

/// `region_id,mean,variance`; a null `variance` drops that column.
std::string refinement_csv(const std::vector<std::string>& region_ids, const Eigen::VectorXd& mean,
                           const Eigen::VectorXd* variance);
std::string covariance_csv(const std::vector<std::string>& region_ids, const Eigen::MatrixXd& cov);

}  // namespace downscale

#endif  // DOWNSCALE_MODEL_HPP
