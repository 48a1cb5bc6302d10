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

#include "uctransnet/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "uctransnet/errors.hpp"

namespace uct {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(const void* p, std::size_t n) {
    auto b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t end) : b_(b), end_(end) {}
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    need(n);
    const auto* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw CheckpointError(CheckpointError::Kind::io, "checkpoint entry table runs past the payload");
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

template <class T>
void write_payload(Writer& w, const Tensor<T>& t) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  for (T v : t.data()) {
    const auto bits = std::bit_cast<Bits>(v);
    if constexpr (sizeof(T) == 4) {
      w.u32(bits);
    } else {
      w.u64(bits);
    }
  }
}

template <class T>
Tensor<T> read_payload(Reader& r, Shape shape, const std::string& name) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  std::size_t n = 1;
  for (auto d : shape) {
    if (d == 0) throw CheckpointError(CheckpointError::Kind::io, "entry '" + name + "' has a zero extent");
    n *= d;
  }
  std::vector<T> data(n);
  for (auto& v : data) {
    if constexpr (sizeof(T) == 4) {
      v = std::bit_cast<T>(static_cast<Bits>(r.u32()));
    } else {
      v = std::bit_cast<T>(static_cast<Bits>(r.u64()));
    }
  }
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace

const Shape& CheckpointEntry::shape() const {
  return std::visit([](const auto& t) -> const Shape& { return t.shape(); }, tensor);
}

template <class T>
Tensor<T> CheckpointEntry::as() const {
  return std::visit([](const auto& t) { return t.template cast<T>(); }, tensor);
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

template <class T>
void Checkpoint::add(std::string name, Tensor<T> tensor) {
  if (find(name)) throw CheckpointError(CheckpointError::Kind::mismatch, "duplicate checkpoint entry '" + name + "'");
  entries.push_back({std::move(name), std::move(tensor)});
}

void Checkpoint::set_config(const ModelConfig& cfg) {
  const auto text = key_value_text(cfg.to_key_values());
  std::vector<double> bytes(text.begin(), text.end());
  entries.erase(std::remove_if(entries.begin(), entries.end(), [](const auto& e) { return e.name == kConfigEntry; }),
                entries.end());
  const std::size_t n = bytes.size();
  add(kConfigEntry, Tensor<double>({n}, std::move(bytes)));
}

std::optional<ModelConfig> Checkpoint::config() const {
  const auto* e = find(kConfigEntry);
  if (!e) return std::nullopt;
  std::string text;
  const auto bytes = e->as<double>();
  for (double v : bytes.data()) text += static_cast<char>(static_cast<unsigned char>(v));
  return model_config_from(parse_key_value_text(text));
}

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  Writer w;
  w.bytes("UCTN", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.u8(static_cast<std::uint8_t>(e.dtype()));
    const auto& shape = e.shape();
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) w.u64(d);
    std::visit([&](const auto& t) { write_payload(w, t); }, e.tensor);
  }
  auto& buf = w.buffer();
  const auto crc = crc_of(buf.data(), buf.size());
  w.u32(crc);
  return std::move(buf);
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  using Kind = CheckpointError::Kind;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "UCTN", 4) != 0) {
    throw BadMagicError("not a checkpoint: missing 'UCTN' magic");
  }
  if (bytes.size() >= 8) {
    const std::uint32_t version = bytes[4] | bytes[5] << 8 | bytes[6] << 16 | static_cast<std::uint32_t>(bytes[7]) << 24;
    if (version != kCheckpointVersion) {
      throw UnsupportedVersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                std::to_string(kCheckpointVersion) + ")");
    }
  }
  if (bytes.size() < 16) throw BadCrcError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
  const std::size_t body = bytes.size() - 4;
  const std::uint32_t stored = bytes[body] | bytes[body + 1] << 8 | bytes[body + 2] << 16 |
                               static_cast<std::uint32_t>(bytes[body + 3]) << 24;
  if (crc_of(bytes.data(), body) != stored) {
    throw BadCrcError("checkpoint CRC mismatch (file corrupt or truncated)");
  }
  Reader r(bytes, body);
  r.take(8);
  const std::uint32_t count = r.u32();
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    const auto* name_bytes = r.take(len);
    std::string name(reinterpret_cast<const char*>(name_bytes), len);
    const std::uint8_t dtype = r.u8();
    const std::uint8_t rank = r.u8();
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    if (dtype == 0) {
      ckpt.entries.push_back({name, read_payload<float>(r, std::move(shape), name)});
    } else if (dtype == 1) {
      ckpt.entries.push_back({name, read_payload<double>(r, std::move(shape), name)});
    } else {
      throw CheckpointError(Kind::io, "entry '" + name + "' has unknown dtype code " + std::to_string(dtype));
    }
  }
  if (!r.done()) throw CheckpointError(Kind::io, "trailing bytes after the last checkpoint entry");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

template <class T>
Checkpoint make_checkpoint(const ParamStore<T>& params, const ModelConfig* cfg) {
  Checkpoint ckpt;
  for (const auto& p : params) ckpt.add(p.name, p.value);
  if (cfg) ckpt.set_config(*cfg);
  return ckpt;
}

template <class T>
void restore_params(ParamStore<T>& params, const Checkpoint& ckpt) {
  using Kind = CheckpointError::Kind;
  for (auto& p : params) {
    const auto* e = ckpt.find(p.name);
    if (!e) throw CheckpointError(Kind::mismatch, "checkpoint has no entry for parameter '" + p.name + "'");
    if (e->shape() != p.value.shape()) {
      throw CheckpointError(Kind::mismatch, "parameter '" + p.name + "' is " + shape_str(p.value.shape()) +
                                                " but the checkpoint holds " + shape_str(e->shape()));
    }
  }
  for (const auto& e : ckpt.entries) {
    if (!e.name.starts_with("meta.") && !params.contains(e.name)) {
      throw CheckpointError(Kind::mismatch, "checkpoint entry '" + e.name + "' has no matching parameter");
    }
  }
  for (auto& p : params) p.value = ckpt.find(p.name)->template as<T>();
}

template Tensor<float> CheckpointEntry::as<float>() const;
template Tensor<double> CheckpointEntry::as<double>() const;
template void Checkpoint::add(std::string, Tensor<float>);
template void Checkpoint::add(std::string, Tensor<double>);
template Checkpoint make_checkpoint(const ParamStore<float>&, const ModelConfig*);
template Checkpoint make_checkpoint(const ParamStore<double>&, const ModelConfig*);
template void restore_params(ParamStore<float>&, const Checkpoint&);
template void restore_params(ParamStore<double>&, const Checkpoint&);

}  // namespace uct
