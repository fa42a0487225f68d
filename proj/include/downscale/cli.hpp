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

#ifndef DOWNSCALE_CLI_HPP
#define DOWNSCALE_CLI_HPP

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace downscale {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitNumerical = 1, kExitInput = 2 };

/// 64-bit FNV-1a, used to fingerprint inputs in the run manifest.
std::uint64_t fnv1a64(std::string_view bytes);

/// Entry point for `downscale <fit|refine|baseline|eval|synth> ...`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace downscale

#endif  // DOWNSCALE_CLI_HPP
