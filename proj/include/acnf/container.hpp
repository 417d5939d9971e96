// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "acnf/codec.hpp"

namespace acnf {

// 19-byte APP11 payload carried inside the JPEG stream.
struct ContainerMetadata {
  uint8_t version = 1;
  uint8_t scale_code = 0;  // 0 -> 1.0, 1 -> 0.75, 2 -> 0.5
  uint8_t qf = 0;
  uint16_t orig_width = 0;
  uint16_t orig_height = 0;
  std::array<uint8_t, 8> model_id{};
};

// Extra bytes pack() adds on top of the bare JPEG (marker + length + payload).
inline constexpr int kContainerOverheadBytes = 2 + 2 + 19;

double scale_from_code(uint8_t code);          // throws CodecError on bad code
uint8_t code_from_scale(double scale);         // throws ConfigError off-grid

// First 8 bytes of SHA-256 of a weights manifest file.
std::array<uint8_t, 8> model_id_from_manifest(const std::string& manifest_path);

// Inserts one APP11 segment carrying meta immediately after SOI.
std::vector<uint8_t> pack(const EncodedArtifact& artifact, const ContainerMetadata& meta);

// Strips the ACNF APP11 segment if present. Returns the bare artifact (qf
// filled from metadata when available) and the metadata, or nullopt for a
// plain JPEG. Throws CodecError on non-JPEG input or a corrupt ACNF segment.
std::pair<EncodedArtifact, std::optional<ContainerMetadata>> unpack(
    const std::vector<uint8_t>& file_bytes);

}  // namespace acnf
