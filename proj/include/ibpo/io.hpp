// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

namespace ibpo {

// Writes content to path via a temp file + rename so readers never observe a
// half-written file.
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

}  // namespace ibpo
