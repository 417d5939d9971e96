// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0
//
// Regenerates the pinned golden corpus: deterministic synthetic inputs, their
// JPEG payloads at fixed quality factors, and a manifest of payload hashes.
// Any change in manifest bytes means the codec identity drifted.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"

#include "acnf/codec.hpp"
#include "acnf/hashutil.hpp"
#include "acnf/image_io.hpp"
#include "acnf/synth.hpp"

namespace fs = std::filesystem;
using namespace acnf;

int main(int argc, char** argv) {
  std::string out_dir = argc > 1 ? argv[1] : "goldens";
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  JpegCodec codec;

  nlohmann::ordered_json manifest;
  manifest["format"] = "acnf-goldens-v1";
  manifest["codec_identity"] = codec.identity();
  auto entries = nlohmann::ordered_json::array();

  auto add_entry = [&](const std::string& input_name, const Tensor& img, int qf) {
    EncodedArtifact a = codec.encode(img, qf);
    std::string file = input_name + ".qf" + std::to_string(qf) + ".jpg";
    std::ofstream f(fs::path(out_dir) / file, std::ios::binary);
    f.write(reinterpret_cast<const char*>(a.payload.data()),
            static_cast<std::streamsize>(a.payload.size()));
    if (!f) {
      std::cerr << "write failed: " << file << "\n";
      std::exit(1);
    }
    nlohmann::ordered_json e;
    e["input"] = input_name + ".png";
    e["qf"] = qf;
    e["file"] = file;
    e["payload_sha256"] = sha256_hex(a.payload);
    e["bit_count"] = a.bit_count;
    entries.push_back(e);
  };

  const int kQfs[4] = {10, 20, 40, 80};
  for (int i = 0; i < 5; ++i) {
    int channels = i == 4 ? 3 : 1;  // four grayscale inputs plus one color
    Tensor img = synthetic_image(static_cast<uint64_t>(i), 64, 64, channels);
    std::string name = "synth" + std::to_string(i);
    save_png((fs::path(out_dir) / (name + ".png")).string(), img);
    for (int qf : kQfs) add_entry(name, img, qf);
  }

  // Constant mid-gray 8x8 (all 128/255), the minimal-dimension pin.
  Tensor gray(1, 8, 8, 1);
  gray.fill(128.0f / 255.0f);
  save_png((fs::path(out_dir) / "midgray8.png").string(), gray);
  add_entry("midgray8", gray, 50);

  manifest["entries"] = entries;
  std::ofstream mf(fs::path(out_dir) / "manifest.json");
  mf << manifest.dump(2) << "\n";
  if (!mf) {
    std::cerr << "write failed: manifest.json\n";
    return 1;
  }
  std::cout << "wrote " << entries.size() << " golden artifacts to " << out_dir << "\n";
  return 0;
}
