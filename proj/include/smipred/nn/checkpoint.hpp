//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary weight container: magic, format version, per-parameter
// records (name, rank, dims, raw little-endian float32 payload), FNV-1a64
// trailer. Values are stored at 32 bits regardless of the compute precision;
// a 32-bit save/load round trip is bit exact.
#pragma once

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "smipred/nn/graph.hpp"
#include "smipred/nn/tensor.hpp"

namespace smipred {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

class CheckpointVersionError : public IoError {
 public:
  using IoError::IoError;
};
class CheckpointTruncatedError : public IoError {
 public:
  using IoError::IoError;
};
class CheckpointChecksumError : public IoError {
 public:
  using IoError::IoError;
};

struct NamedTensorF32 {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

namespace detail {

inline constexpr char kCkptMagic[8] = {'S', 'M', 'P', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCkptVersion = 1;

class HashingWriter {
 public:
  explicit HashingWriter(std::ostream& os) : os_(os) {}
  void write(const void* p, std::size_t n) {
    os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    hash_ = fnv1a64(p, n, hash_);
  }
  template <typename V>
  void write_pod(V v) {
    write(&v, sizeof(v));
  }
  std::uint64_t hash() const { return hash_; }

 private:
  std::ostream& os_;
  std::uint64_t hash_ = 0xcbf29ce484222325ull;
};

class HashingReader {
 public:
  explicit HashingReader(std::istream& is) : is_(is) {}
  void read(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n)
      throw CheckpointTruncatedError("checkpoint truncated");
    hash_ = fnv1a64(p, n, hash_);
  }
  template <typename V>
  V read_pod() {
    V v;
    read(&v, sizeof(v));
    return v;
  }
  std::uint64_t hash() const { return hash_; }

 private:
  std::istream& is_;
  std::uint64_t hash_ = 0xcbf29ce484222325ull;
};

}  // namespace detail

inline void write_checkpoint(std::ostream& os,
                             const std::vector<NamedTensorF32>& params) {
  detail::HashingWriter w(os);
  w.write(detail::kCkptMagic, sizeof(detail::kCkptMagic));
  w.write_pod(detail::kCkptVersion);
  w.write_pod(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.write_pod(static_cast<std::uint32_t>(p.name.size()));
    w.write(p.name.data(), p.name.size());
    w.write_pod(static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) w.write_pod(static_cast<std::uint64_t>(d));
    if (shape_size(p.shape) != p.values.size())
      raise<ShapeError>("checkpoint: tensor '", p.name, "' payload mismatch");
    w.write(p.values.data(), p.values.size() * sizeof(float));
  }
  const std::uint64_t h = w.hash();
  os.write(reinterpret_cast<const char*>(&h), sizeof(h));
  if (!os) raise<IoError>("checkpoint: write failed");
}

inline std::vector<NamedTensorF32> read_checkpoint(std::istream& is) {
  detail::HashingReader r(is);
  char magic[8];
  r.read(magic, sizeof(magic));
  if (std::memcmp(magic, detail::kCkptMagic, sizeof(magic)) != 0)
    raise<IoError>("checkpoint: bad magic");
  const auto version = r.read_pod<std::uint32_t>();
  if (version != detail::kCkptVersion)
    throw CheckpointVersionError(
        str_cat("checkpoint: unsupported format version ", version));
  const auto count = r.read_pod<std::uint32_t>();
  std::vector<NamedTensorF32> out;
  out.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensorF32 t;
    const auto name_len = r.read_pod<std::uint32_t>();
    if (name_len > 4096) raise<IoError>("checkpoint: absurd name length");
    t.name.resize(name_len);
    r.read(t.name.data(), name_len);
    const auto rank = r.read_pod<std::uint32_t>();
    if (rank > 8) raise<IoError>("checkpoint: absurd tensor rank");
    t.shape.resize(rank);
    for (auto& d : t.shape)
      d = static_cast<std::size_t>(r.read_pod<std::uint64_t>());
    const std::size_t n = shape_size(t.shape);
    if (n > (1ull << 31)) raise<IoError>("checkpoint: absurd tensor size");
    t.values.resize(n);
    r.read(t.values.data(), n * sizeof(float));
    out.push_back(std::move(t));
  }
  const std::uint64_t expect = r.hash();
  std::uint64_t stored = 0;
  is.read(reinterpret_cast<char*>(&stored), sizeof(stored));
  if (static_cast<std::size_t>(is.gcount()) != sizeof(stored))
    throw CheckpointTruncatedError("checkpoint truncated before checksum");
  if (stored != expect)
    throw CheckpointChecksumError("checkpoint checksum mismatch");
  return out;
}

template <typename T>
NamedTensorF32 to_f32_record(const Variable<T>& v) {
  NamedTensorF32 r;
  r.name = v.name;
  r.shape = v.value.shape();
  r.values.resize(v.value.size());
  for (std::size_t i = 0; i < r.values.size(); ++i)
    r.values[i] = static_cast<float>(v.value[i]);
  return r;
}

template <typename T>
void from_f32_record(const NamedTensorF32& r, Variable<T>& v) {
  if (r.shape != v.value.shape())
    raise<ShapeError>("checkpoint: tensor '", r.name, "' has shape ",
                      shape_str(r.shape), ", expected ",
                      shape_str(v.value.shape()));
  for (std::size_t i = 0; i < r.values.size(); ++i)
    v.value[i] = static_cast<T>(r.values[i]);
}

}  // namespace smipred
