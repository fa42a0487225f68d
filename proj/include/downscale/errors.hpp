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

#ifndef DOWNSCALE_ERRORS_HPP
#define DOWNSCALE_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace downscale {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: malformed documents, invariant violations, shape mismatches.
/// The CLI maps these to exit code 2.
class InputError : public Error {
public:
    using Error::Error;
};

class ParseError : public InputError {
public:
    using InputError::InputError;
};

class ValidationError : public InputError {
public:
    using InputError::InputError;
};

/// Fine centroids that fall inside no coarse polygon.
class UnassignedRegionError : public ValidationError {
public:
    explicit UnassignedRegionError(std::vector<std::string> ids);
    const std::vector<std::string>& region_ids() const noexcept { return ids_; }

private:
    std::vector<std::string> ids_;
};

/// Coarse regions that received no fine member.
class EmptyCoarseRegionError : public ValidationError {
public:
    explicit EmptyCoarseRegionError(std::vector<std::string> ids);
    const std::vector<std::string>& region_ids() const noexcept { return ids_; }

private:
    std::vector<std::string> ids_;
};

/// Numerical failure. The CLI maps these to exit code 1.
class NumericalError : public Error {
public:
    using Error::Error;
};

class FactorizationError : public NumericalError {
public:
    /// `pivot` is 1-based.
    FactorizationError(std::size_t pivot, double pivot_value);
    std::size_t pivot() const noexcept { return pivot_; }
    double pivot_value() const noexcept { return value_; }

private:
    std::size_t pivot_;
    double value_;
};

class OptimizationError : public NumericalError {
public:
    OptimizationError(const std::string& what, std::vector<double> point)
        : NumericalError(what), point_(std::move(point)) {}
    const std::vector<double>& point() const noexcept { return point_; }

private:
    std::vector<double> point_;
};

}  // namespace downscale

#endif  // DOWNSCALE_ERRORS_HPP
