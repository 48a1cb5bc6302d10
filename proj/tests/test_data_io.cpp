/*
 * Copyright 2026 The UCTransNet-cpp Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "uctransnet/checkpoint.hpp"
#include "uctransnet/dataset.hpp"
#include "uctransnet/errors.hpp"
#include "uctransnet/image_io.hpp"
#include "uctransnet/unet.hpp"

using namespace uct;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("uct_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

RawImage gray(std::size_t h, std::size_t w, std::uint16_t base) {
  RawImage img;
  img.height = h;
  img.width = w;
  for (std::size_t i = 0; i < h * w; ++i) img.pixels.push_back(static_cast<std::uint16_t>((base + i * 7) % 256));
  return img;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST_CASE("image round trips") {
  TempDir dir("images");
  for (const char* ext : {".png", ".pgm"}) {
    auto img = gray(5, 7, 3);
    write_image(dir.path / (std::string("a") + ext), img);
    auto back = read_image(dir.path / (std::string("a") + ext));
    CHECK(back.height == 5);
    CHECK(back.width == 7);
    CHECK(back.pixels == img.pixels);
  }
  RawImage rgb = gray(3, 4, 9);
  rgb.channels = 3;
  rgb.pixels.resize(36, 17);
  write_image(dir.path / "c.png", rgb);
  CHECK(read_image(dir.path / "c.png").pixels == rgb.pixels);
  RawImage wide = gray(2, 2, 0);
  wide.max_value = 65535;
  wide.pixels = {0, 1000, 40000, 65535};
  write_image(dir.path / "w.png", wide);
  write_image(dir.path / "w.pgm", wide);
  CHECK(read_image(dir.path / "w.png").pixels == wide.pixels);
  CHECK(read_image(dir.path / "w.pgm").pixels == wide.pixels);

  // ASCII PGM with a comment and a small maxval gets rescaled.
  std::ofstream(dir.path / "t.pgm") << "P2\n# comment\n2 1\n15\n0 15\n";
  auto t = read_image(dir.path / "t.pgm");
  CHECK(t.pixels == std::vector<std::uint16_t>{0, 255});
  CHECK_THROWS_AS(read_image(dir.path / "missing.png"), DataError);
  CHECK_THROWS_AS(read_image(dir.path / "x.bmp"), DataError);
}

TEST_CASE("load_dataset pairing and ordering") {
  TempDir dir("dataset");
  RawImage mask = gray(4, 4, 0);
  for (auto& p : mask.pixels) p = p % 2;
  for (const char* id : {"c", "a", "b"}) {
    write_image(dir.path / (std::string(id) + ".img.png"), gray(4, 4, 1));
    write_image(dir.path / (std::string(id) + ".mask.pgm"), mask);
  }
  std::ofstream(dir.path / "notes.txt") << "ignored";
  auto data = load_dataset(dir.path);
  REQUIRE(data.size() == 3);
  CHECK(data[0].id == "a");
  CHECK(data[2].id == "c");
  CHECK(data[0].image.shape() == Shape{1, 4, 4});
  CHECK(data[0].image[1] == doctest::Approx(8.0 / 255.0));
  CHECK(data[1].mask.labels() == std::vector<int>(mask.pixels.begin(), mask.pixels.end()));
  CHECK(load_dataset(dir.path).size() == 3);

  SUBCASE("image without mask names the id") {
    write_image(dir.path / "lonely.img.png", gray(4, 4, 1));
    try {
      load_dataset(dir.path);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("lonely") != std::string::npos);
    }
  }
  SUBCASE("255 masks need the binarize flag") {
    RawImage m255 = mask;
    for (auto& p : m255.pixels) p *= 255;
    write_image(dir.path / "d.img.png", gray(4, 4, 1));
    write_image(dir.path / "d.mask.png", m255);
    CHECK_THROWS_AS(load_dataset(dir.path), DataError);
    auto bin = load_dataset(dir.path, {2, true});
    CHECK(bin.back().mask.max_label() == 1);
    CHECK(bin.back().mask.labels() == data[0].mask.labels());
  }
  SUBCASE("size mismatch") {
    write_image(dir.path / "e.img.png", gray(4, 4, 1));
    write_image(dir.path / "e.mask.png", gray(5, 4, 0));
    CHECK_THROWS_AS(load_dataset(dir.path, {256, false}), DataError);
  }
}

TEST_CASE("synthetic corpus") {
  auto a = generate_synthetic({6, 32, 42, 1});
  auto b = generate_synthetic({6, 32, 42, 1});
  REQUIRE(a.size() == 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].mask == b[i].mask);
    CHECK(a[i].mask.max_label() == 1);
    CHECK(a[i].mask.count(1) > 0);
    for (float v : a[i].image.data()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
  CHECK_FALSE(generate_synthetic({6, 32, 43, 1})[0].mask == a[0].mask);
  CHECK(generate_synthetic({1, 8, 5, 3})[0].image.shape() == Shape{3, 8, 8});

  // Mean foreground fraction over 100 seeds.
  double total = 0;
  std::size_t n = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    for (const auto& s : generate_synthetic({1, 64, seed, 1})) {
      total += foreground_fraction(s);
      ++n;
    }
  }
  const double mean = total / static_cast<double>(n);
  CHECK(mean >= 0.05);
  CHECK(mean <= 0.5);

  TempDir dir("synthetic");
  save_dataset(a, dir.path);
  auto back = load_dataset(dir.path);
  REQUIRE(back.size() == a.size());
  CHECK(back[3].mask == a[3].mask);

  auto split = split_dataset(a, 0.34);
  CHECK(split.train.size() == 4);
  CHECK(split.held_out.size() == 2);
  CHECK(split.held_out[0].id == a[4].id);
}

TEST_CASE("checkpoint round trip is bitwise") {
  TempDir dir("ckpt");
  ModelConfig cfg;
  cfg.channels = {4, 8, 16, 32};
  cfg.height = cfg.width = 32;
  cfg.heads = 2;
  auto p = init_params<float>(cfg, 3);
  p.get("unet.head.bias").value[0] = -0.0f;
  p.get("unet.head.bias").value[1] = std::numeric_limits<float>::denorm_min();
  save_checkpoint(p, cfg, dir.path / "m.uctn");
  auto ckpt = load_checkpoint(dir.path / "m.uctn");
  auto q = init_params<float>(cfg, 4);
  restore_params(q, ckpt);
  for (auto& a : p) {
    const auto& b = q.get(a.name).value;
    REQUIRE(a.value.size() == b.size());
    CHECK(std::memcmp(a.value.data().data(), b.data().data(), b.size() * sizeof(float)) == 0);
  }
  REQUIRE(ckpt.config().has_value());
  CHECK(ckpt.config()->to_key_values() == cfg.to_key_values());
  // Re-serialising reproduces the file byte for byte.
  CHECK(serialize(ckpt) == read_bytes(dir.path / "m.uctn"));

  Checkpoint mixed;
  mixed.add("d", Tensor<double>({2, 1}, std::vector<double>{1.0 / 3.0, -1e300}));
  CHECK(std::get<Tensor<double>>(deserialize(serialize(mixed)).entries[0].tensor) ==
        std::get<Tensor<double>>(mixed.entries[0].tensor));
}

TEST_CASE("checkpoint byte layout") {
  Checkpoint c;
  c.add("ab", Tensor<float>({2}, std::vector<float>{1.0f, -2.0f}));
  auto b = serialize(c);
  const std::vector<std::uint8_t> head{'U', 'C', 'T', 'N', 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 'a', 'b', 0, 1,
                                       2, 0, 0, 0, 0, 0, 0, 0, 0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0};
  REQUIRE(b.size() == head.size() + 4);
  CHECK(std::vector<std::uint8_t>(b.begin(), b.end() - 4) == head);
}

TEST_CASE("corrupt checkpoints give typed errors") {
  ModelConfig cfg;
  cfg.channels = {4, 8, 16, 32};
  cfg.height = cfg.width = 32;
  auto good = serialize(make_checkpoint(init_params<float>(cfg, 1), &cfg));

  auto magic = good;
  magic[0] = 'X';
  CHECK_THROWS_AS(deserialize(magic), BadMagicError);

  auto crc = good;
  crc[good.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(deserialize(crc), BadCrcError);

  auto truncated = good;
  truncated.resize(good.size() - 100);
  CHECK_THROWS_AS(deserialize(truncated), BadCrcError);

  auto version = good;
  version[4] = 2;
  CHECK_THROWS_AS(deserialize(version), UnsupportedVersionError);

  try {
    deserialize(version);
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::unsupported_version);
  }

  TempDir dir("ckpt_err");
  write_bytes(dir.path / "bad.uctn", magic);
  CHECK_THROWS_AS(load_checkpoint(dir.path / "bad.uctn"), BadMagicError);
  CHECK_THROWS_AS(load_checkpoint(dir.path / "absent.uctn"), CheckpointError);

  auto p = init_params<float>(cfg, 1);
  ModelConfig other = cfg;
  other.channels = {8, 16, 32, 64};
  auto wrong = make_checkpoint(init_params<float>(other, 1));
  CHECK_THROWS_AS(restore_params(p, wrong), CheckpointError);
}
