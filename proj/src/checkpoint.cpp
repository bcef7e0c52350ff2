/* Copyright 2026 The exitlab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Checkpoint layout (all integers and doubles little-endian):
//
//   "EXLBCKPT"                 8-byte magic
//   u32 version
//   i32 num_layers, num_classes, input_dim, hidden_dim, proto_dim
//   u8  activation (0 tanh, 1 relu), u8 use_projection
//   u64 model seed
//   u64 training step counter
//   f64 prototype gamma
//   parameter tensors in declared order (see tensors()), column-major f64
//   prototype bank: for layer 1..M-1, class 0..K-1: u8 initialized, f64[dim]
//   u64 FNV-1a hash of every preceding byte

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "exitlab/error.hpp"
#include "exitlab/model.hpp"

namespace exitlab {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'E', 'X', 'L', 'B', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

class Writer {
 public:
  template <class T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void put_doubles(const double* d, std::size_t n) {
    out_.append(reinterpret_cast<const char*>(d), n * sizeof(double));
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& data, std::size_t end) : data_(data), end_(end) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void get_doubles(double* d, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(d, data_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw CorruptFileError("checkpoint is truncated");
  }
  const std::string& data_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  check_shapes(ckpt.config, ckpt.params);
  const auto& cfg = ckpt.config;
  if (ckpt.bank.num_layers() != cfg.num_layers - 1 ||
      ckpt.bank.num_classes() != cfg.num_classes ||
      ckpt.bank.dim() != cfg.metric_dim()) {
    throw ShapeError("checkpoint: prototype bank does not match model config");
  }
  Writer w;
  w.bytes().append(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::int32_t>(cfg.num_layers);
  w.put<std::int32_t>(cfg.num_classes);
  w.put<std::int32_t>(cfg.input_dim);
  w.put<std::int32_t>(cfg.hidden_dim);
  w.put<std::int32_t>(cfg.proto_dim);
  w.put<std::uint8_t>(cfg.activation == Activation::kTanh ? 0 : 1);
  w.put<std::uint8_t>(cfg.use_projection ? 1 : 0);
  w.put<std::uint64_t>(cfg.seed);
  w.put<std::uint64_t>(ckpt.step);
  w.put<double>(ckpt.bank.gamma());
  for (const auto& t : tensors(ckpt.params)) w.put_doubles(t.data, t.size);
  for (int m = 0; m < ckpt.bank.num_layers(); ++m) {
    for (int k = 0; k < ckpt.bank.num_classes(); ++k) {
      w.put<std::uint8_t>(ckpt.bank.initialized(m, k) ? 1 : 0);
      const Vec& v = ckpt.bank.raw(m, k);
      w.put_doubles(v.data(), static_cast<std::size_t>(v.size()));
    }
  }
  w.put<std::uint64_t>(fnv1a(w.bytes().data(), w.bytes().size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!f) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (data.size() < sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t)) {
    throw CorruptFileError("checkpoint is truncated");
  }
  if (std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CorruptFileError("not a checkpoint file (bad magic)");
  }
  std::uint32_t version;
  std::memcpy(&version, data.data() + sizeof(kMagic), sizeof(version));
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) +
                       " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  const std::size_t body = data.size() - sizeof(std::uint64_t);
  std::uint64_t stored;
  std::memcpy(&stored, data.data() + body, sizeof(stored));
  if (stored != fnv1a(data.data(), body)) {
    throw CorruptFileError("checkpoint checksum mismatch (truncated or corrupt)");
  }

  Reader r(data, body);
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) r.get<char>();
  r.get<std::uint32_t>();
  Checkpoint c;
  auto& cfg = c.config;
  cfg.num_layers = r.get<std::int32_t>();
  cfg.num_classes = r.get<std::int32_t>();
  cfg.input_dim = r.get<std::int32_t>();
  cfg.hidden_dim = r.get<std::int32_t>();
  cfg.proto_dim = r.get<std::int32_t>();
  cfg.activation = r.get<std::uint8_t>() == 0 ? Activation::kTanh : Activation::kRelu;
  cfg.use_projection = r.get<std::uint8_t>() != 0;
  cfg.seed = r.get<std::uint64_t>();
  c.step = r.get<std::uint64_t>();
  const double gamma = r.get<double>();
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw CorruptFileError(std::string("checkpoint has an invalid config: ") + e.what());
  }

  // Shapes come from the embedded config; the byte count must agree.
  c.params = init_parameters(cfg).zeros_like();
  c.bank = PrototypeBank(cfg.num_layers - 1, cfg.num_classes, cfg.metric_dim(), gamma);
  const std::size_t bank_bytes = static_cast<std::size_t>(c.bank.num_layers()) *
                                 static_cast<std::size_t>(c.bank.num_classes()) *
                                 (1 + sizeof(double) * static_cast<std::size_t>(c.bank.dim()));
  const std::size_t expected = parameter_count(c.params) * sizeof(double) + bank_bytes;
  if (r.remaining() != expected) {
    throw ShapeError("checkpoint payload size " + std::to_string(r.remaining()) +
                     " does not match its config (expected " + std::to_string(expected) + ")");
  }
  for (auto& t : tensors(c.params)) r.get_doubles(t.data, t.size);
  Vec v(c.bank.dim());
  for (int m = 0; m < c.bank.num_layers(); ++m) {
    for (int k = 0; k < c.bank.num_classes(); ++k) {
      const bool init = r.get<std::uint8_t>() != 0;
      r.get_doubles(v.data(), static_cast<std::size_t>(v.size()));
      c.bank.set_raw(m, k, v, init);
    }
  }
  return c;
}

}  // namespace exitlab
