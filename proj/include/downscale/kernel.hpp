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

#ifndef DOWNSCALE_KERNEL_HPP
#define DOWNSCALE_KERNEL_HPP

#include <cmath>

#include <Eigen/Dense>

#include "downscale/errors.hpp"

namespace downscale {

template <typename Scalar>
using Location = Eigen::Matrix<Scalar, 2, 1>;

/// One centroid per row.
template <typename Scalar>
using CentroidMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;

using Location2d = Location<double>;
using Centroids = CentroidMatrix<double>;

/// Squared-exponential kernel hyperparameters in natural units.
/// Optimizers work on (log alpha, log gamma); see from_log().
template <typename Scalar>
struct SEKernelParams {
    Scalar alpha{1};  ///< signal amplitude, k(x, x) = alpha^2
    Scalar gamma{1};  ///< length scale

    static SEKernelParams from_log(Scalar log_alpha, Scalar log_gamma) {
        return {std::exp(log_alpha), std::exp(log_gamma)};
    }

    bool valid() const {
        return std::isfinite(alpha) && std::isfinite(gamma) && alpha > 0 && gamma > 0;
    }

    Scalar variance() const { return alpha * alpha; }
};

using KernelParams = SEKernelParams<double>;

template <typename Scalar>
void check_params(const SEKernelParams<Scalar>& p) {
    if (!p.valid()) throw InputError("kernel parameters must be finite and positive");
}

/// alpha^2 exp(-|x - x'|^2 / (2 gamma^2))
template <typename Scalar, typename DerivedA, typename DerivedB>
Scalar se_kernel(const SEKernelParams<Scalar>& p, const Eigen::MatrixBase<DerivedA>& x,
                 const Eigen::MatrixBase<DerivedB>& x2) {
    const Scalar d2 = (x - x2).squaredNorm();
    return p.alpha * p.alpha * std::exp(-d2 / (Scalar(2) * p.gamma * p.gamma));
}

/// Pairwise squared Euclidean distances between the rows of A and B.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> squared_distances(
    const CentroidMatrix<Scalar>& A, const CentroidMatrix<Scalar>& B) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> D(A.rows(), B.rows());
    for (Eigen::Index j = 0; j < B.rows(); ++j)
        for (Eigen::Index i = 0; i < A.rows(); ++i) D(i, j) = (A.row(i) - B.row(j)).squaredNorm();
    return D;
}

/// Kernel matrix from precomputed squared distances.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> se_from_squared_distances(
    const SEKernelParams<Scalar>& p, const Eigen::MatrixBase<Derived>& d2) {
    const Scalar scale = Scalar(-1) / (Scalar(2) * p.gamma * p.gamma);
    return (p.alpha * p.alpha) * (d2.array() * scale).exp().matrix();
}

/// Entry (i, j) = se_kernel(p, A.row(i), B.row(j)).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cov_matrix(const SEKernelParams<Scalar>& p,
                                                                 const CentroidMatrix<Scalar>& A,
                                                                 const CentroidMatrix<Scalar>& B) {
    check_params(p);
    if (A.rows() == 0 || B.rows() == 0) throw InputError("cov_matrix: empty centroid list");
    return se_from_squared_distances(p, squared_distances(A, B));
}

/// Symmetric Gram matrix of one centroid set; exact symmetry is kept by
/// filling the upper triangle and mirroring.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cov_matrix(const SEKernelParams<Scalar>& p,
                                                                 const CentroidMatrix<Scalar>& A) {
    check_params(p);
    if (A.rows() == 0) throw InputError("cov_matrix: empty centroid list");
    const Eigen::Index n = A.rows();
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> K(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        K(j, j) = p.alpha * p.alpha;
        for (Eigen::Index i = 0; i < j; ++i) K(j, i) = K(i, j) = se_kernel(p, A.row(i), A.row(j));
    }
    return K;
}

}  // namespace downscale

#endif  // DOWNSCALE_KERNEL_HPP
