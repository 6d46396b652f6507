#pragma once

// Little-endian encode/decode shared by the binary file formats and the
// key fingerprint.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "speckle/error.hpp"

namespace speckle::detail {

template <typename T>
void put_le(std::vector<std::byte>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::byte>((bits >> (8 * i)) & 0xff));
  }
}

/// Cursor over an in-memory file image. Every read is bounds-checked and
/// throws FormatError on truncation.
class ByteReader {
 public:
  ByteReader(const std::vector<std::byte>& bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    require(sizeof(T));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  std::string magic() {
    require(4);
    std::string m(4, '\0');
    for (std::size_t i = 0; i < 4; ++i) m[i] = static_cast<char>(bytes_[pos_ + i]);
    pos_ += 4;
    return m;
  }

  void require(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError(what_ + ": truncated file");
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::byte>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline void put_magic(std::vector<std::byte>& out, const char (&magic)[5]) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>(magic[i]));
}

}  // namespace speckle::detail
