// Copyright 2026 The fedsal Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#include "fedsal/checkpoint.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "fedsal/error.h"

namespace fedsal {
namespace {

constexpr char kMagic[8] = {'F', 'E', 'D', 'S', 'A', 'L', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
// Guards against absurd allocations when reading corrupt files.
constexpr std::uint64_t kMaxCount = 1ULL << 32;

template <typename T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <typename T>
  void put(T v) {
    v = to_le(v);
    os_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void bytes(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void str(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}
  template <typename T>
  T get() {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is_) throw IoError("checkpoint truncated");
    return to_le(v);
  }
  std::uint64_t count() {
    auto n = get<std::uint32_t>();
    if (n >= kMaxCount) throw IoError("checkpoint count field is implausible");
    return n;
  }
  std::string str() {
    const auto n = count();
    std::string s(n, '\0');
    is_.read(s.data(), static_cast<std::streamsize>(n));
    if (!is_) throw IoError("checkpoint truncated");
    return s;
  }

 private:
  std::istream& is_;
};

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  Writer w(os);
  w.bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.spec.input_shape.size()));
  for (auto d : ckpt.spec.input_shape) w.put<std::uint64_t>(d);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.spec.layers.size()));
  for (const auto& l : ckpt.spec.layers) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(l.kind));
    w.put<std::uint64_t>(l.in);
    w.put<std::uint64_t>(l.out);
    w.put<std::uint64_t>(l.kernel);
    w.put<std::uint64_t>(l.stride);
    w.put<std::uint64_t>(l.padding);
    w.put<std::uint8_t>(l.bias ? 1 : 0);
    w.put<std::uint64_t>(l.skip_from);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    w.str(k);
    w.put<double>(v);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    w.str(p.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) w.put<std::uint64_t>(d);
    for (double v : p.value.data()) w.put<double>(v);
  }
  if (!os) throw IoError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& is) {
  Reader r(is);
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) throw IoError("not a checkpoint file (bad magic)");
  if (auto v = r.get<std::uint32_t>(); v != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(v));

  Checkpoint ck;
  for (auto n = r.count(); n > 0; --n) ck.spec.input_shape.push_back(r.get<std::uint64_t>());
  for (auto n = r.count(); n > 0; --n) {
    LayerSpec l;
    const auto kind = r.get<std::uint8_t>();
    if (kind > static_cast<std::uint8_t>(LayerKind::residual_add)) throw IoError("unknown layer kind in checkpoint");
    l.kind = static_cast<LayerKind>(kind);
    l.in = r.get<std::uint64_t>();
    l.out = r.get<std::uint64_t>();
    l.kernel = r.get<std::uint64_t>();
    l.stride = r.get<std::uint64_t>();
    l.padding = r.get<std::uint64_t>();
    l.bias = r.get<std::uint8_t>() != 0;
    l.skip_from = r.get<std::uint64_t>();
    ck.spec.layers.push_back(l);
  }
  for (auto n = r.count(); n > 0; --n) {
    std::string key = r.str();
    ck.meta.emplace_back(std::move(key), r.get<double>());
  }
  for (auto n = r.count(); n > 0; --n) {
    std::string name = r.str();
    Shape shape;
    for (auto k = r.count(); k > 0; --k) shape.push_back(r.get<std::uint64_t>());
    for (auto d : shape)
      if (d == 0 || d >= kMaxCount) throw IoError("checkpoint tensor '" + name + "' has an invalid extent");
    std::vector<double> data(numel(shape));
    for (auto& v : data) v = r.get<double>();
    ck.params.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  write_checkpoint(os, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  return read_checkpoint(is);
}

void save_network(const std::filesystem::path& path, const Network& net) {
  check_params(net.spec, net.params);
  save_checkpoint(path, Checkpoint{net.spec, {}, net.params});
}

Network load_network(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  Network net{std::move(ck.spec), std::move(ck.params)};
  check_params(net.spec, net.params);
  return net;
}

}  // namespace fedsal
