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

#ifndef DOWNSCALE_NUMERICS_HPP
#define DOWNSCALE_NUMERICS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "downscale/errors.hpp"

namespace downscale {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Lower-triangular Cholesky factor L with L L^T = M.
template <typename Scalar>
class CholeskyFactor {
public:
    CholeskyFactor() = default;
    explicit CholeskyFactor(MatrixX<Scalar> lower) : L_(std::move(lower)) {}

    const MatrixX<Scalar>& matrixL() const { return L_; }
    Eigen::Index dim() const { return L_.rows(); }

    /// M^{-1} b for a vector or a block of columns.
    template <typename Derived>
    MatrixX<Scalar> solve(const Eigen::MatrixBase<Derived>& b) const {
        if (b.rows() != L_.rows())
            throw InputError("solve: right-hand side has " + std::to_string(b.rows()) +
                             " rows, factor has dimension " + std::to_string(L_.rows()));
        MatrixX<Scalar> x = L_.template triangularView<Eigen::Lower>().solve(b);
        L_.transpose().template triangularView<Eigen::Upper>().solveInPlace(x);
        return x;
    }

    /// L^{-1} b, the "half solve" used for quadratic forms and predictive covariances.
    template <typename Derived>
    MatrixX<Scalar> solve_lower(const Eigen::MatrixBase<Derived>& b) const {
        if (b.rows() != L_.rows()) throw InputError("solve_lower: shape mismatch");
        return L_.template triangularView<Eigen::Lower>().solve(b);
    }

    Scalar log_det() const { return Scalar(2) * L_.diagonal().array().log().sum(); }

    MatrixX<Scalar> inverse() const {
        return solve(MatrixX<Scalar>::Identity(L_.rows(), L_.rows()));
    }

    MatrixX<Scalar> reconstruct() const { return L_ * L_.transpose(); }

private:
    MatrixX<Scalar> L_;
};

/// Left-looking Cholesky. The caller adds any jitter beforehand. Throws
/// FactorizationError carrying the 1-based index of the first non-positive pivot.
template <typename Derived>
CholeskyFactor<typename Derived::Scalar> cholesky(const Eigen::MatrixBase<Derived>& M) {
    using Scalar = typename Derived::Scalar;
    const Eigen::Index n = M.rows();
    if (M.cols() != n) throw InputError("cholesky: matrix is not square");
    const Scalar scale = std::max(M.cwiseAbs().maxCoeff(), std::numeric_limits<Scalar>::min());
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-10) * scale)
        throw InputError("cholesky: matrix is not symmetric");

    MatrixX<Scalar> L = MatrixX<Scalar>::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Scalar d = M(j, j) - L.row(j).head(j).squaredNorm();
        if (!(d > Scalar(0))) throw FactorizationError(static_cast<std::size_t>(j + 1), double(d));
        const Scalar ljj = std::sqrt(d);
        L(j, j) = ljj;
        const Eigen::Index rest = n - j - 1;
        if (rest > 0) {
            L.col(j).tail(rest) =
                (M.col(j).tail(rest) - L.block(j + 1, 0, rest, j) * L.row(j).head(j).transpose()) /
                ljj;
        }
    }
    return CholeskyFactor<Scalar>(std::move(L));
}

template <typename Scalar, typename Derived>
MatrixX<Scalar> solve(const CholeskyFactor<Scalar>& F, const Eigen::MatrixBase<Derived>& b) {
    return F.solve(b);
}

template <typename Scalar>
Scalar log_det(const CholeskyFactor<Scalar>& F) {
    return F.log_det();
}

/// Objective callback: returns f(x) and, when `grad` is non-null, writes the gradient.
template <typename Scalar>
using Objective = std::function<Scalar(const VectorX<Scalar>& x, VectorX<Scalar>* grad)>;

struct BfgsOptions {
    double gtol = 1e-6;       ///< infinity norm of the gradient
    double ftol = 1e-10;      ///< relative objective change
    int max_iterations = 500;
    double armijo_c = 1e-4;
    double backtrack = 0.5;
    int max_backtracks = 50;
};

enum class StopReason { gradient, ftol, line_search, max_iterations };

template <typename Scalar>
struct OptimizeResult {
    VectorX<Scalar> argmin;
    Scalar objective{};
    Scalar gradient_norm{};
    int iterations = 0;
    bool converged = false;  ///< stopped on the gradient or the relative objective test
    StopReason reason = StopReason::max_iterations;
};

namespace detail {

template <typename Scalar>
std::vector<double> to_std(const VectorX<Scalar>& v) {
    std::vector<double> out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = double(v(i));
    return out;
}

}  // namespace detail

/// Dense BFGS on the inverse Hessian with a backtracking Armijo line search.
///
/// A trial point whose objective is +inf is treated as an infeasible step and
/// backtracked from, which lets callers express soft lower bounds. NaN anywhere,
/// or a non-finite value at the starting point, raises OptimizationError.
template <typename Scalar>
OptimizeResult<Scalar> bfgs_minimize(const Objective<Scalar>& f, const VectorX<Scalar>& x0,
                                     const BfgsOptions& opts = {}) {
    const Eigen::Index n = x0.size();
    VectorX<Scalar> x = x0;
    VectorX<Scalar> g(n);
    Scalar fx = f(x, &g);
    if (!std::isfinite(fx) || !g.allFinite())
        throw OptimizationError("non-finite objective or gradient at the starting point",
                                detail::to_std(x));

    OptimizeResult<Scalar> res;
    MatrixX<Scalar> Hinv = MatrixX<Scalar>::Identity(n, n);
    bool scaled = false;
    VectorX<Scalar> g_new(n);

    auto finish = [&](StopReason reason, int it) {
        res.argmin = x;
        res.objective = fx;
        res.gradient_norm = n > 0 ? g.cwiseAbs().maxCoeff() : Scalar(0);
        res.iterations = it;
        res.converged = reason == StopReason::gradient || reason == StopReason::ftol;
        res.reason = reason;
        return res;
    };

    for (int it = 0; it < opts.max_iterations; ++it) {
        if (n == 0 || g.cwiseAbs().maxCoeff() <= Scalar(opts.gtol)) return finish(StopReason::gradient, it);

        VectorX<Scalar> dir = -Hinv * g;
        Scalar slope = g.dot(dir);
        if (!(slope < 0)) {
            // Lost descent; restart from steepest descent.
            Hinv.setIdentity();
            scaled = false;
            dir = -g;
            slope = -g.squaredNorm();
        }

        Scalar step = 1;
        bool accepted = false;
        VectorX<Scalar> x_new;
        Scalar f_new = 0;
        for (int bt = 0; bt <= opts.max_backtracks; ++bt) {
            x_new = x + step * dir;
            f_new = f(x_new, &g_new);
            if (std::isnan(f_new))
                throw OptimizationError("objective returned NaN", detail::to_std(x_new));
            if (std::isfinite(f_new) && f_new <= fx + Scalar(opts.armijo_c) * step * slope) {
                if (!g_new.allFinite())
                    throw OptimizationError("non-finite gradient", detail::to_std(x_new));
                accepted = true;
                break;
            }
            step *= Scalar(opts.backtrack);
        }
        if (!accepted) return finish(StopReason::line_search, it);

        const VectorX<Scalar> s = x_new - x;
        const VectorX<Scalar> y = g_new - g;
        const Scalar f_old = fx;
        x = x_new;
        fx = f_new;
        g = g_new;

        const Scalar sy = s.dot(y);
        if (sy > Scalar(1e-12) * s.norm() * y.norm()) {
            if (!scaled) {
                Hinv *= sy / y.squaredNorm();
                scaled = true;
            }
            const Scalar rho = Scalar(1) / sy;
            const VectorX<Scalar> Hy = Hinv * y;
            Hinv += (rho * rho * y.dot(Hy) + rho) * (s * s.transpose()) -
                    rho * (Hy * s.transpose() + s * Hy.transpose());
        }

        if (g.cwiseAbs().maxCoeff() <= Scalar(opts.gtol)) return finish(StopReason::gradient, it + 1);
        if (std::abs(f_old - fx) <= Scalar(opts.ftol) * std::max<Scalar>(Scalar(1), std::abs(fx)))
            return finish(StopReason::ftol, it + 1);
    }
    return finish(StopReason::max_iterations, opts.max_iterations);
}

/// Max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|), with the
/// numeric derivative from central differences.
template <typename Scalar>
Scalar grad_check(const Objective<Scalar>& f, const VectorX<Scalar>& x, Scalar h = Scalar(1e-5)) {
    VectorX<Scalar> analytic(x.size());
    f(x, &analytic);
    Scalar worst = 0;
    VectorX<Scalar> xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        xp(i) = x(i) + h;
        const Scalar fp = f(xp, nullptr);
        xp(i) = x(i) - h;
        const Scalar fm = f(xp, nullptr);
        xp(i) = x(i);
        const Scalar numeric = (fp - fm) / (Scalar(2) * h);
        worst = std::max(worst, std::abs(analytic(i) - numeric) /
                                    std::max({Scalar(1), std::abs(analytic(i)), std::abs(numeric)}));
    }
    return worst;
}

}  // namespace downscale

#endif  // DOWNSCALE_NUMERICS_HPP
