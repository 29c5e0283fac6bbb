#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mtlswin/graph.hpp"
#include "mtlswin/tensor.hpp"

namespace mtlswin {

/// Flat binary parameter container. Layout after the one-line header
/// "MTLSWIN-CKPT v1\n":
///   u32   entry count
/// then per entry, all integers little-endian:
///   u32   name length, name bytes
///   u8    scalar width (4 = f32, 8 = f64)
///   u8    rank
///   u64   extents[rank]
///   raw   values, little-endian IEEE-754
inline constexpr const char* kCkptHeader = "MTLSWIN-CKPT v1\n";

namespace ckpt_detail {

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const unsigned char* p;
  const unsigned char* end;
  void need(size_t n) const {
    if (static_cast<size_t>(end - p) < n) throw std::runtime_error("checkpoint: truncated file");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    p += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    p += 8;
    return v;
  }
  uint8_t u8() {
    need(1);
    return *p++;
  }
  std::string str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    return s;
  }
};

template <typename S>
void put_values(std::string& out, const Tensor<S>& t) {
  for (int64_t i = 0; i < t.size(); ++i) {
    if constexpr (sizeof(S) == 4) {
      uint32_t bits;
      std::memcpy(&bits, &t.data()[i], 4);
      put_u32(out, bits);
    } else {
      uint64_t bits;
      std::memcpy(&bits, &t.data()[i], 8);
      put_u64(out, bits);
    }
  }
}

}  // namespace ckpt_detail

struct CheckpointEntry {
  Shape shape;
  int width = 4;                 // scalar byte width in the file
  std::vector<double> values;    // widened on read

  template <typename S>
  Tensor<S> as_tensor() const {
    Tensor<S> t(shape);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<S>(values[static_cast<size_t>(i)]);
    return t;
  }
};

template <typename S>
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Parameter<S>*>>& params) {
  std::string out(kCkptHeader);
  ckpt_detail::put_u32(out, static_cast<uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    ckpt_detail::put_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(sizeof(S)));
    out.push_back(static_cast<char>(p->value.rank()));
    for (int64_t d : p->value.shape()) ckpt_detail::put_u64(out, static_cast<uint64_t>(d));
    ckpt_detail::put_values(out, p->value);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("checkpoint: short write to " + path);
}

inline std::map<std::string, CheckpointEntry> read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const size_t hlen = std::strlen(kCkptHeader);
  if (bytes.size() < hlen || bytes.compare(0, hlen, kCkptHeader) != 0) {
    throw std::runtime_error("checkpoint: bad header in " + path);
  }
  ckpt_detail::Reader r{reinterpret_cast<const unsigned char*>(bytes.data()) + hlen,
                        reinterpret_cast<const unsigned char*>(bytes.data()) + bytes.size()};
  const uint32_t count = r.u32();
  std::map<std::string, CheckpointEntry> entries;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    CheckpointEntry e;
    e.width = r.u8();
    if (e.width != 4 && e.width != 8) throw std::runtime_error("checkpoint: bad scalar width");
    const int rank = r.u8();
    int64_t numel = 1;
    for (int d = 0; d < rank; ++d) {
      e.shape.push_back(static_cast<int64_t>(r.u64()));
      numel *= e.shape.back();
    }
    e.values.resize(static_cast<size_t>(numel));
    for (int64_t v = 0; v < numel; ++v) {
      if (e.width == 4) {
        uint32_t bits = r.u32();
        float fv;
        std::memcpy(&fv, &bits, 4);
        e.values[static_cast<size_t>(v)] = static_cast<double>(fv);
      } else {
        uint64_t bits = r.u64();
        double dv;
        std::memcpy(&dv, &bits, 8);
        e.values[static_cast<size_t>(v)] = dv;
      }
    }
    entries.emplace(std::move(name), std::move(e));
  }
  return entries;
}

/// Loads parameters by exact name match. When source_prefix/target_prefix are
/// given, a parameter named target_prefix + rest takes the file entry named
/// source_prefix + rest (used to mount a trained encoder under a new name).
/// Every listed parameter must resolve with a matching shape.
template <typename S>
void load_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Parameter<S>*>>& params,
                     const std::string& target_prefix = "", const std::string& source_prefix = "") {
  auto entries = read_checkpoint(path);
  for (const auto& [name, p] : params) {
    std::string key = name;
    if (!target_prefix.empty()) {
      if (name.rfind(target_prefix, 0) != 0) continue;  // outside the mounted subtree
      key = source_prefix + name.substr(target_prefix.size());
    }
    auto it = entries.find(key);
    if (it == entries.end()) {
      throw std::runtime_error("checkpoint: " + path + " has no entry '" + key +
                               "' (architecture mismatch?)");
    }
    if (it->second.shape != p->value.shape()) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + key + "': file " +
                               shape_str(it->second.shape) + " vs model " + shape_str(p->value.shape()));
    }
    p->value = it->second.as_tensor<S>();
    p->grad = Tensor<S>(p->value.shape(), S(0));
  }
}

}  // namespace mtlswin
