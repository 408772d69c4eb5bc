#ifndef SPANPSP_CHECKPOINT_HPP
#define SPANPSP_CHECKPOINT_HPP

// Binary container of named tensors plus a text manifest.
//
//   magic    8 bytes  "SPSPCKPT"
//   version  u32      1
//   manifest u32 length, UTF-8 bytes (`key = value` lines)
//   count    u32
//   tensor   u32 name length, name bytes, u8 trainable, u32 rank,
//            u64 dims[rank], f64 values[prod(dims)]
//
// All integers and floats are little-endian. save() also writes the
// manifest next to the container as `<path>.manifest` for inspection.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spanpsp/tensor.hpp"

namespace spanpsp {

inline constexpr char kCheckpointMagic[8] = {'S', 'P', 'S', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  ad::Tensor value;
  bool trainable = true;
};

struct Checkpoint {
  std::string manifest;
  std::vector<NamedTensor> tensors;
};

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  U bits;
  std::memcpy(&bits, &value, sizeof(T));
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    need(sizeof(T));
    U bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) bits |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + b])) << (8 * b);
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, &bits, sizeof(T));
    return value;
  }

  std::string bytes(std::size_t count) {
    need(count);
    std::string out = data_.substr(pos_, count);
    pos_ += count;
    return out;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t count) const {
    if (pos_ + count > data_.size()) throw Error("checkpoint truncated at byte " + std::to_string(pos_));
  }

  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.manifest.size()));
  out += ckpt.manifest;
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    detail::put_le<std::uint8_t>(out, t.trainable ? 1 : 0);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) detail::put_le<std::uint64_t>(out, d);
    for (double v : t.value.data()) detail::put_le<double>(out, v);
  }
  return out;
}

inline Checkpoint deserialize_checkpoint(std::string data) {
  detail::Reader in(std::move(data));
  if (in.bytes(sizeof kCheckpointMagic) != std::string(kCheckpointMagic, sizeof kCheckpointMagic)) {
    throw Error("not a checkpoint file (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.manifest = in.bytes(in.get<std::uint32_t>());
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t t = 0; t < count; ++t) {
    NamedTensor named;
    named.name = in.bytes(in.get<std::uint32_t>());
    named.trainable = in.get<std::uint8_t>() != 0;
    const auto rank = in.get<std::uint32_t>();
    if (rank > 8) throw Error("tensor '" + named.name + "' has implausible rank " + std::to_string(rank));
    ad::Shape shape(rank);
    std::size_t elements = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(in.get<std::uint64_t>());
      elements *= d;
    }
    std::vector<double> values(elements);
    for (double& v : values) v = in.get<double>();
    named.value = ad::Tensor(std::move(shape), std::move(values));
    ckpt.tensors.push_back(std::move(named));
  }
  if (!in.done()) throw Error("trailing bytes after checkpoint tensors");
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + path);
    const std::string bytes = serialize_checkpoint(ckpt);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing checkpoint " + path);
  }
  std::ofstream manifest(path + ".manifest", std::ios::binary | std::ios::trunc);
  if (!manifest) throw Error("cannot write manifest for " + path);
  manifest << ckpt.manifest;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize_checkpoint(buffer.str());
}

}  // namespace spanpsp

#endif  // SPANPSP_CHECKPOINT_HPP
