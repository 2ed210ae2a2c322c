// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: an ordered list of named double matrices behind a
// versioned binary header, written atomically. Helpers pack parameter
// stores (values plus optimizer state) and RNG engine words into arrays.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "softrl/param_store.hpp"
#include "softrl/rng.hpp"
#include "softrl/tensor.hpp"

namespace softrl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'S', 'R', 'L', 'C',
                                             'K', 'P', 'T', '\n'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Archive {
  struct Item {
    std::string name;
    Tensor data;
  };
  std::vector<Item> items;

  void add(const std::string& name, const Tensor& data) {
    if (find(name) != nullptr)
      throw std::invalid_argument("archive: duplicate array " + name);
    items.push_back({name, data});
  }

  const Tensor* find(const std::string& name) const {
    for (const Item& it : items)
      if (it.name == name) return &it.data;
    return nullptr;
  }

  const Tensor& at(const std::string& name) const {
    const Tensor* t = find(name);
    if (t == nullptr) throw std::out_of_range("archive: missing array " + name);
    return *t;
  }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

inline std::uint32_t take_u32(const std::string& in, std::size_t& off) {
  if (off + 4 > in.size()) throw std::runtime_error("checkpoint: truncated");
  std::uint32_t v;
  std::memcpy(&v, in.data() + off, 4);
  off += 4;
  return v;
}

}  // namespace detail

inline std::string serialize_archive(const Archive& archive) {
  std::string out;
  out.append(kCheckpointMagic, 8);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(archive.items.size()));
  for (const Archive::Item& it : archive.items) {
    detail::put_u32(out, static_cast<std::uint32_t>(it.name.size()));
    out.append(it.name);
    detail::put_u32(out, static_cast<std::uint32_t>(it.data.rows));
    detail::put_u32(out, static_cast<std::uint32_t>(it.data.cols));
    const std::size_t bytes = static_cast<std::size_t>(it.data.size()) * 8;
    const std::size_t base = out.size();
    out.resize(base + bytes);
    std::memcpy(out.data() + base, it.data.data.data(), bytes);
  }
  return out;
}

inline Archive deserialize_archive(const std::string& in) {
  if (in.size() < 16 || std::memcmp(in.data(), kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  std::size_t off = 8;
  const std::uint32_t version = detail::take_u32(in, off);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  const std::uint32_t count = detail::take_u32(in, off);
  Archive archive;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = detail::take_u32(in, off);
    if (off + name_len > in.size())
      throw std::runtime_error("checkpoint: truncated");
    std::string name(in.data() + off, name_len);
    off += name_len;
    const std::uint32_t rows = detail::take_u32(in, off);
    const std::uint32_t cols = detail::take_u32(in, off);
    Tensor t(static_cast<int>(rows), static_cast<int>(cols));
    const std::size_t bytes = static_cast<std::size_t>(t.size()) * 8;
    if (off + bytes > in.size())
      throw std::runtime_error("checkpoint: truncated");
    std::memcpy(t.data.data(), in.data() + off, bytes);
    off += bytes;
    archive.add(name, t);
  }
  if (off != in.size()) throw std::runtime_error("checkpoint: trailing bytes");
  return archive;
}

inline void save_archive(const Archive& archive, const std::string& path) {
  const std::filesystem::path target(path);
  if (target.has_parent_path())
    std::filesystem::create_directories(target.parent_path());
  const std::filesystem::path tmp(path + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    const std::string data = serialize_archive(archive);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

inline Archive load_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return deserialize_archive(data);
}

// Parameter stores are packed as <prefix>.<param> for values plus
// <prefix>.adam.{m,v}.<param> and a <prefix>.adam.step scalar.
inline void store_to_archive(Archive& archive, const std::string& prefix,
                             const ParameterStore& store) {
  for (const ParameterStore::Entry& e : store.entries()) {
    archive.add(prefix + "." + e.name, e.value);
    archive.add(prefix + ".adam.m." + e.name, e.m);
    archive.add(prefix + ".adam.v." + e.name, e.v);
  }
  Tensor step(1, 1);
  step[0] = static_cast<double>(store.step_count());
  archive.add(prefix + ".adam.step", step);
}

inline void store_from_archive(const Archive& archive, const std::string& prefix,
                               ParameterStore& store) {
  for (ParameterStore::Entry& e : store.entries()) {
    const Tensor& value = archive.at(prefix + "." + e.name);
    const Tensor& m = archive.at(prefix + ".adam.m." + e.name);
    const Tensor& v = archive.at(prefix + ".adam.v." + e.name);
    if (!value.same_shape(e.value))
      throw std::runtime_error("checkpoint: shape mismatch for " + prefix +
                               "." + e.name);
    e.value = value;
    e.m = m;
    e.v = v;
    e.grad.fill(0.0);
  }
  store.set_step_count(
      static_cast<std::int64_t>(archive.at(prefix + ".adam.step")[0]));
}

// mt19937_64 state words are split into 32-bit halves, each exactly
// representable as a double.
inline Tensor rng_to_tensor(const RngStream& rng) {
  const std::vector<std::uint64_t> words = rng.state_words();
  Tensor t(1, static_cast<int>(words.size() * 2));
  for (std::size_t i = 0; i < words.size(); ++i) {
    t[static_cast<int>(2 * i)] = static_cast<double>(words[i] & 0xffffffffull);
    t[static_cast<int>(2 * i + 1)] = static_cast<double>(words[i] >> 32);
  }
  return t;
}

inline void rng_from_tensor(const Tensor& t, RngStream& rng) {
  if (t.size() % 2 != 0)
    throw std::runtime_error("checkpoint: odd RNG word payload");
  std::vector<std::uint64_t> words(t.size() / 2);
  for (std::size_t i = 0; i < words.size(); ++i) {
    const std::uint64_t lo =
        static_cast<std::uint64_t>(t[static_cast<int>(2 * i)]);
    const std::uint64_t hi =
        static_cast<std::uint64_t>(t[static_cast<int>(2 * i + 1)]);
    words[i] = (hi << 32) | lo;
  }
  rng.restore_state(words);
}

}  // namespace softrl
