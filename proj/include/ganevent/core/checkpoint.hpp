#pragma once

// Parameter checkpoint file layout (all integers and floats little-endian):
//
//   magic    8 bytes  "GEVCKPT\0"
//   version  u32
//   count    u32                      number of named tensors
//   count x { name_len u32, name bytes, rank u32, dims u64[rank] }
//   payload  f64 values of every tensor, in manifest order

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ganevent/core/error.hpp"
#include "ganevent/core/tensor.hpp"

namespace ganevent::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'G', 'E', 'V', 'C', 'K', 'P', 'T', '\0'};

struct NamedTensor {
  std::string name;
  Tensor value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ParseError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_le(out, kCheckpointVersion);
  detail::put_le(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    detail::put_le(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    detail::put_le(out, static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t dim : t.value.shape()) detail::put_le(out, static_cast<std::uint64_t>(dim));
  }
  for (const auto& t : tensors)
    for (double v : t.value.values()) detail::put_f64(out, v);
  return out;
}

inline std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
  detail::Reader in(bytes);
  if (in.get_bytes(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic)))
    throw ParseError("not a checkpoint file (bad magic)");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>();
  std::vector<NamedTensor> out(count);
  for (auto& t : out) {
    t.name = in.get_bytes(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    if (rank > 2) throw ParseError("checkpoint tensor '" + t.name + "' has unsupported rank");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
    t.value = Tensor(shape);
  }
  for (auto& t : out)
    for (double& v : t.value.values()) v = in.get_f64();
  if (!in.done()) throw ParseError("trailing bytes after checkpoint payload");
  return out;
}

/// Writes via a temporary file and rename, so a failed write never leaves a partial checkpoint.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp + " into place: " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  write_file_atomic(path, encode_checkpoint(tensors));
}

inline std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

inline std::vector<NamedTensor> snapshot(const ParameterRefs& params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back({p->name, p->value});
  return out;
}

/// Copies tensors into parameters by name; every parameter must be present with its exact shape.
inline void restore(const ParameterRefs& params, const std::vector<NamedTensor>& tensors) {
  for (Parameter* p : params) {
    auto it = std::find_if(tensors.begin(), tensors.end(), [&](const NamedTensor& t) { return t.name == p->name; });
    if (it == tensors.end()) throw ParseError("checkpoint is missing parameter '" + p->name + "'");
    if (it->value.shape() != p->value.shape())
      throw DimensionError("checkpoint shape " + shape_string(it->value.shape()) + " for '" + p->name +
                           "' does not match model shape " + shape_string(p->value.shape()));
    p->value = it->value;
  }
}

}  // namespace ganevent::nn
