// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "acnf/tensor.hpp"

namespace acnf {

// Loads a PNG, JPEG, or binary PNM file into a (1,h,w,c) tensor in [0,1],
// c = 1 (gray) or 3 (RGB). Format is sniffed from the file magic.
// Throws DataError on unreadable/unsupported files.
Tensor load_image(const std::string& path);

// Saves a (1,h,w,c) tensor (c = 1 or 3, values clamped to [0,1]) as 8-bit PNG.
void save_png(const std::string& path, const Tensor& img);

// BT.601 luma: Y = 0.299 R + 0.587 G + 0.114 B. Identity on 1-channel input.
Tensor rgb_to_luma(const Tensor& img);

}  // namespace acnf
