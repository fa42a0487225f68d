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

// Private helpers shared by the readers and writers.

#ifndef DOWNSCALE_SRC_TEXT_IO_HPP
#define DOWNSCALE_SRC_TEXT_IO_HPP

#include <string>
#include <string_view>
#include <vector>

namespace downscale::text {

using CsvRow = std::vector<std::string>;

/// RFC 4180-ish: quoted fields, doubled quotes, CRLF tolerated, blank lines skipped.
std::vector<CsvRow> parse_csv(std::string_view text);

/// Quote a field only when it needs it.
std::string csv_field(std::string_view s);

/// Shortest round-trip representation ("%.17g" semantics, trimmed).
std::string format_double(double v);

/// Strict decimal parse; throws ParseError naming `context`.
double parse_double(const std::string& s, const std::string& context);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace downscale::text

#endif  // DOWNSCALE_SRC_TEXT_IO_HPP
