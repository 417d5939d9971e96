// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#include "acnf/hashutil.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>

#include "acnf/error.hpp"

namespace acnf {

std::array<uint8_t, 32> sha256(const void* data, size_t len) {
  std::array<uint8_t, 32> out{};
  unsigned int out_len = 0;
  if (!EVP_Digest(data, len, out.data(), &out_len, EVP_sha256(), nullptr) || out_len != 32)
    throw Error("SHA-256 computation failed");
  return out;
}

static std::string to_hex(const std::array<uint8_t, 32>& d) {
  static const char* kHex = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (uint8_t b : d) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xf]);
  }
  return s;
}

std::string sha256_hex(const void* data, size_t len) { return to_hex(sha256(data, len)); }

std::string sha256_hex(const std::vector<uint8_t>& bytes) {
  return sha256_hex(bytes.data(), bytes.size());
}

std::string sha256_hex(const std::string& text) { return sha256_hex(text.data(), text.size()); }

std::string sha256_file_hex(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read file for hashing: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

}  // namespace acnf
