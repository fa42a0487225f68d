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

#include "downscale/errors.hpp"

#include "text_io.hpp"

namespace downscale {

namespace {

std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ", ";
        out += ids[i];
    }
    return out;
}

}  // namespace

UnassignedRegionError::UnassignedRegionError(std::vector<std::string> ids)
    : ValidationError("fine regions whose centroid lies in no coarse region: " + join_ids(ids)),
      ids_(std::move(ids)) {}

EmptyCoarseRegionError::EmptyCoarseRegionError(std::vector<std::string> ids)
    : ValidationError("coarse regions with no fine members: " + join_ids(ids)), ids_(std::move(ids)) {}

FactorizationError::FactorizationError(std::size_t pivot, double pivot_value)
    : NumericalError("matrix is not positive definite (pivot " + std::to_string(pivot) +
                     ", value " + text::format_double(pivot_value) + ")"),
      pivot_(pivot),
      value_(pivot_value) {}

}  // namespace downscale
