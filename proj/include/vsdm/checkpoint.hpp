#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vsdm/errors.hpp"

namespace vsdm {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

inline constexpr std::array<char, 4> kCheckpointMagic = {'V', 'S', 'D', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Little-endian byte sink for checkpoint payloads.
class ByteWriter {
 public:
  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    bytes_.append(buf, sizeof(T));
  }
  void put_doubles(std::span<const double> v) {
    put<std::uint64_t>(v.size());
    bytes_.append(reinterpret_cast<const char*>(v.data()), v.size_bytes());
  }
  void put_matrix(const Eigen::MatrixXd& m) {
    put<std::int32_t>(static_cast<std::int32_t>(m.rows()));
    put<std::int32_t>(static_cast<std::int32_t>(m.cols()));
    bytes_.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * m.size());
  }
  void put_string(std::string_view s) {
    put<std::uint64_t>(s.size());
    bytes_.append(s);
  }
  // Tag (4 chars), u64 payload length, payload.
  void put_section(std::string_view tag, const ByteWriter& payload) {
    if (tag.size() != 4) throw CheckpointError("section tags have 4 characters");
    bytes_.append(tag);
    put<std::uint64_t>(payload.bytes_.size());
    bytes_.append(payload.bytes_);
  }
  void put_raw(std::string_view s) { bytes_.append(s); }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)).data(), sizeof(T));
    return v;
  }
  std::vector<double> get_doubles() {
    const auto n = get<std::uint64_t>();
    if (n > remaining() / sizeof(double)) throw CheckpointError("checkpoint truncated");
    std::vector<double> v(n);
    std::memcpy(v.data(), take(n * sizeof(double)).data(), n * sizeof(double));
    return v;
  }
  Eigen::MatrixXd get_matrix() {
    const auto rows = get<std::int32_t>();
    const auto cols = get<std::int32_t>();
    if (rows < 0 || cols < 0) throw CheckpointError("checkpoint: negative matrix shape");
    const auto count = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    if (count > remaining() / sizeof(double)) throw CheckpointError("checkpoint truncated");
    Eigen::MatrixXd m(rows, cols);
    std::memcpy(m.data(), take(count * sizeof(double)).data(), count * sizeof(double));
    return m;
  }
  std::string get_string() {
    const auto n = get<std::uint64_t>();
    return std::string(take(n));
  }
  std::string_view take(std::size_t n) {
    if (n > remaining()) throw CheckpointError("checkpoint truncated");
    const auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace vsdm
