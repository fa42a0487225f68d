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

// Comparison methods: GP interpolation of the coarse target, linear-regression
// disaggregation, and two-stage downscaling (regression plus kriged residuals).

#ifndef DOWNSCALE_BASELINES_HPP
#define DOWNSCALE_BASELINES_HPP

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "downscale/geo.hpp"
#include "downscale/gp_aux.hpp"

namespace downscale {

enum class BaselineMethod { gpr, lr, sd2 };

std::string_view method_name(BaselineMethod m);
/// Throws InputError listing valid names.
BaselineMethod parse_baseline_method(std::string_view name);

struct BaselineResult {
    BaselineMethod method = BaselineMethod::gpr;
    Eigen::VectorXd prediction;               ///< fine partition order
    std::optional<Eigen::VectorXd> variance;  ///< gpr only
    std::map<std::string, double> params;

    // Components, filled where the method has them.
    Eigen::VectorXd regression;       ///< Fbar w_hat (lr, sd2)
    Eigen::VectorXd coarse_residual;  ///< a - H Fbar w_hat (sd2)
    Eigen::VectorXd kriged_residual;  ///< residual GP mean at fine centroids (sd2)
};

struct GprBaselineOptions {
    GPFitOptions gp{};
    CoordinateTransform transform;
};

BaselineResult gpr_baseline(const ArealDataset& coarse_target, const Partition& fine,
                            const GprBaselineOptions& opts = {});

/// Minimum-norm least squares of a on [H Fbar], applied to Fbar.
BaselineResult lr_baseline(const ArealDataset& coarse_target, const std::vector<AuxPosterior>& posteriors,
                           const AggregationMap& map);

struct Sd2BaselineOptions {
    GPFitOptions gp{};  ///< `center` is ignored; residual kriging is zero-mean
    CoordinateTransform transform;
    /// Skip the residual hyperparameter fit and krige with these values.
    std::optional<GPHyper> fixed_residual_hyper;
};

BaselineResult sd2_baseline(const ArealDataset& coarse_target, const std::vector<AuxPosterior>& posteriors,
                            const AggregationMap& map, const Sd2BaselineOptions& opts = {});

}  // namespace downscale

#endif  // DOWNSCALE_BASELINES_HPP
