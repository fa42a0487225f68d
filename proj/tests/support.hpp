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

// Random small instances and independent oracles shared by the unit and acceptance tests.

#ifndef DOWNSCALE_TESTS_SUPPORT_HPP
#define DOWNSCALE_TESTS_SUPPORT_HPP

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "downscale/model.hpp"

namespace downscale::testing {

struct SmallInstance {
    DownscaleProblem problem;
    DownscaleParams params;
};

inline Eigen::MatrixXd random_spd(Eigen::Index n, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd A(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) A(i, j) = normal(rng);
    Eigen::MatrixXd S = scale * (A * A.transpose()) / static_cast<double>(n);
    S.diagonal().array() += 0.05 * scale;
    return S;
}

/// Random problem with nc coarse, nf fine regions and S auxiliaries. Every coarse
/// region receives at least one fine region; H averages uniformly.
inline SmallInstance random_instance(std::mt19937_64& rng, int nc, int nf, int S, double jitter = kDefaultJitter) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> pick(0, nc - 1);

    Centroids X(nf, 2);
    for (int i = 0; i < nf; ++i) X.row(i) << unit(rng), unit(rng);
    std::vector<int> member(static_cast<std::size_t>(nf));
    for (int i = 0; i < nf; ++i) member[static_cast<std::size_t>(i)] = i < nc ? i : pick(rng);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nc, nf);
    for (int i = 0; i < nf; ++i) H(member[static_cast<std::size_t>(i)], i) = 1.0;
    for (int r = 0; r < nc; ++r) H.row(r) /= H.row(r).sum();

    std::vector<AuxPosterior> post;
    for (int s = 0; s < S; ++s) {
        AuxPosterior p;
        p.dataset_id = "aux" + std::to_string(s);
        p.mean.resize(nf);
        for (int i = 0; i < nf; ++i) p.mean(i) = normal(rng);
        p.cov = random_spd(nf, rng, 0.2 + unit(rng));
        p.avg_variance = p.cov.diagonal().mean();
        post.push_back(std::move(p));
    }
    Eigen::VectorXd a(nc);
    for (int r = 0; r < nc; ++r) a(r) = normal(rng) + 1.0;

    SmallInstance inst;
    inst.problem = DownscaleProblem::make(a, post, X, H, jitter);
    inst.params.w.resize(S + 1);
    for (int s = 0; s <= S; ++s) inst.params.w(s) = normal(rng);
    inst.params.kernel = {std::exp(0.6 * normal(rng)), 0.2 + 0.6 * unit(rng)};
    inst.params.sigma = std::exp(-1.0 + 0.5 * normal(rng));
    return inst;
}

/// log N(a | A u_mean, A Cov_u A^T + eps I) with u = [F*_1 .. F*_S, e_z, e_a] drawn
/// independently: the linear-Gaussian composition written out in full, evaluated
/// with Eigen's LDLT.
inline double brute_force_log_marginal(const DownscaleParams& p, const DownscaleProblem& prob) {
    const Eigen::Index nf = prob.fine_count(), nc = prob.coarse_count();
    const Eigen::Index S = prob.design.aux_count();
    const Eigen::Index nu = S * nf + nf + nc;

    Eigen::VectorXd mu = Eigen::VectorXd::Zero(nu);
    Eigen::MatrixXd Cu = Eigen::MatrixXd::Zero(nu, nu);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nc, nu);
    for (Eigen::Index s = 0; s < S; ++s) {
        mu.segment(s * nf, nf) = prob.design.values.col(s);
        Cu.block(s * nf, s * nf, nf, nf) = prob.aux_cov[static_cast<std::size_t>(s)];
        A.block(0, s * nf, nc, nf) = p.w(s) * prob.H;
    }
    Eigen::MatrixXd K(nf, nf);
    for (Eigen::Index i = 0; i < nf; ++i)
        for (Eigen::Index j = 0; j < nf; ++j) {
            const double d2 = (prob.fine_centroids.row(i) - prob.fine_centroids.row(j)).squaredNorm();
            K(i, j) = p.kernel.alpha * p.kernel.alpha * std::exp(-d2 / (2 * p.kernel.gamma * p.kernel.gamma));
        }
    Cu.block(S * nf, S * nf, nf, nf) = K;
    A.block(0, S * nf, nc, nf) = prob.H;
    const double eps = prob.jitter * (p.sigma * p.sigma + p.kernel.alpha * p.kernel.alpha);
    Cu.block(S * nf + nf, S * nf + nf, nc, nc) = (p.sigma * p.sigma + eps) * Eigen::MatrixXd::Identity(nc, nc);
    A.block(0, S * nf + nf, nc, nc) = Eigen::MatrixXd::Identity(nc, nc);

    const Eigen::VectorXd mean = A * mu + prob.H * Eigen::VectorXd::Constant(nf, p.w(S));
    const Eigen::MatrixXd C = A * Cu * A.transpose();
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(C);
    const Eigen::VectorXd r = prob.target - mean;
    const double quad = r.dot(ldlt.solve(r));
    const double logdet = ldlt.vectorD().array().log().sum();
    return -0.5 * quad - 0.5 * logdet - 0.5 * static_cast<double>(nc) * std::log(2 * M_PI);
}

/// Lambda assembled one entry at a time from the per-region sums.
inline Eigen::MatrixXd entrywise_lambda(const DownscaleParams& p, const DownscaleProblem& prob) {
    const Eigen::Index nf = prob.fine_count(), nc = prob.coarse_count();
    const Eigen::Index S = prob.design.aux_count();
    Eigen::MatrixXd L(nc, nc);
    for (Eigen::Index i = 0; i < nc; ++i)
        for (Eigen::Index j = 0; j < nc; ++j) {
            double v = i == j ? p.sigma * p.sigma : 0.0;
            for (Eigen::Index k = 0; k < nf; ++k) {
                if (prob.H(i, k) == 0) continue;
                for (Eigen::Index l = 0; l < nf; ++l) {
                    if (prob.H(j, l) == 0) continue;
                    const double d2 = (prob.fine_centroids.row(k) - prob.fine_centroids.row(l)).squaredNorm();
                    double omega = p.kernel.alpha * p.kernel.alpha *
                                   std::exp(-d2 / (2 * p.kernel.gamma * p.kernel.gamma));
                    for (Eigen::Index s = 0; s < S; ++s)
                        omega += p.w(s) * p.w(s) * prob.aux_cov[static_cast<std::size_t>(s)](k, l);
                    v += prob.H(i, k) * prob.H(j, l) * omega;
                }
            }
            L(i, j) = v;
        }
    return L;
}

inline double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    const Eigen::ArrayXd a = x.array() - x.mean();
    const Eigen::ArrayXd b = y.array() - y.mean();
    return (a * b).sum() / std::sqrt(a.square().sum() * b.square().sum());
}

inline std::filesystem::path temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("downscale_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace downscale::testing

#endif  // DOWNSCALE_TESTS_SUPPORT_HPP
