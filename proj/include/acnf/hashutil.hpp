// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace acnf {

std::array<uint8_t, 32> sha256(const void* data, size_t len);
std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::vector<uint8_t>& bytes);
std::string sha256_hex(const std::string& text);

// Whole-file digest; throws DataError if the file cannot be read.
std::string sha256_file_hex(const std::string& path);

}  // namespace acnf
