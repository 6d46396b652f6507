#include "speckle/formats.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "byte_order.hpp"
#include "speckle/error.hpp"

namespace speckle::io {

namespace {

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(raw.size());
  std::memcpy(bytes.data(), raw.data(), raw.size());
  return bytes;
}

void write_file(const std::vector<std::byte>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

void check_version(std::uint16_t version, std::uint16_t supported, const std::string& what) {
  if (version != supported) {
    throw UnsupportedVersion(what + ": unsupported format version " + std::to_string(version) +
                             " (this build reads version " + std::to_string(supported) + ")");
  }
}

}  // namespace

void save_key(const PhysicalKey& key, const std::filesystem::path& path) {
  std::vector<std::byte> out;
  out.reserve(30 + key.n_in * key.n_out * 16);
  detail::put_magic(out, "SPKY");
  detail::put_le(out, kKeyFormatVersion);
  detail::put_le(out, key.seed);
  detail::put_le(out, static_cast<std::uint32_t>(key.n_in));
  detail::put_le(out, static_cast<std::uint32_t>(key.n_out));
  for (Eigen::Index j = 0; j < key.matrix.rows(); ++j) {
    for (Eigen::Index k = 0; k < key.matrix.cols(); ++k) {
      detail::put_le(out, key.matrix(j, k).real());
      detail::put_le(out, key.matrix(j, k).imag());
    }
  }
  detail::put_le(out, key.fingerprint);
  write_file(out, path);
}

PhysicalKey load_key(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  detail::ByteReader in(bytes, path.string());
  if (in.magic() != "SPKY") throw FormatError(path.string() + ": not a key file (bad magic)");
  check_version(in.get<std::uint16_t>(), kKeyFormatVersion, path.string());

  PhysicalKey key;
  key.seed = in.get<std::uint64_t>();
  key.n_in = in.get<std::uint32_t>();
  key.n_out = in.get<std::uint32_t>();
  if (key.n_in == 0 || key.n_out == 0) throw FormatError(path.string() + ": zero key dimension");
  in.require(key.n_in * key.n_out * 16 + 8);
  key.matrix.resize(static_cast<Eigen::Index>(key.n_out), static_cast<Eigen::Index>(key.n_in));
  for (Eigen::Index j = 0; j < key.matrix.rows(); ++j) {
    for (Eigen::Index k = 0; k < key.matrix.cols(); ++k) {
      const double re = in.get<double>();
      const double im = in.get<double>();
      if (!std::isfinite(re) || !std::isfinite(im)) throw FormatError(path.string() + ": non-finite key entry");
      key.matrix(j, k) = {re, im};
    }
  }
  key.fingerprint = in.get<std::uint64_t>();
  if (!in.at_end()) throw FormatError(path.string() + ": trailing bytes after key");
  if (key_fingerprint(key.matrix) != key.fingerprint) {
    throw FormatError(path.string() + ": fingerprint does not match key matrix");
  }
  return key;
}

void save_speckle(const SpecklePattern& speckle, const std::filesystem::path& path) {
  validate(speckle);
  std::vector<std::byte> out;
  out.reserve(30 + speckle.data.size() * 4);
  detail::put_magic(out, "SPIM");
  detail::put_le(out, kImageFormatVersion);
  detail::put_le(out, static_cast<std::uint32_t>(speckle.height));
  detail::put_le(out, static_cast<std::uint32_t>(speckle.width));
  detail::put_le(out, speckle.raw_scale);
  detail::put_le(out, speckle.key_fingerprint);
  for (double v : speckle.data) detail::put_le(out, static_cast<float>(v));
  write_file(out, path);
}

SpecklePattern load_speckle(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  detail::ByteReader in(bytes, path.string());
  if (in.magic() != "SPIM") throw FormatError(path.string() + ": not an image file (bad magic)");
  check_version(in.get<std::uint16_t>(), kImageFormatVersion, path.string());

  SpecklePattern s;
  s.height = in.get<std::uint32_t>();
  s.width = in.get<std::uint32_t>();
  s.raw_scale = in.get<double>();
  s.key_fingerprint = in.get<std::uint64_t>();
  if (in.remaining() != s.height * s.width * 4) {
    throw FormatError(path.string() + ": payload size does not match " + std::to_string(s.height) +
                      "x" + std::to_string(s.width));
  }
  s.data.resize(s.height * s.width);
  for (double& v : s.data) v = static_cast<double>(in.get<float>());
  try {
    validate(s);
  } catch (const InvalidArgument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return s;
}

void save_plain(const PlainImage& image, const std::filesystem::path& path) {
  SpecklePattern s;
  s.height = image.height();
  s.width = image.width();
  s.data.assign(image.data().begin(), image.data().end());
  s.raw_scale = 1.0;
  s.key_fingerprint = 0;
  save_speckle(s, path);
}

PlainImage load_plain(const std::filesystem::path& path) {
  SpecklePattern s = load_speckle(path);
  try {
    return PlainImage(s.height, s.width, std::move(s.data));
  } catch (const InvalidArgument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_image_pgm(const PlainImage& image, const std::filesystem::path& path) {
  std::string header = "P5\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  std::vector<std::byte> out;
  out.reserve(header.size() + image.size());
  for (char c : header) out.push_back(static_cast<std::byte>(c));
  for (double v : image.data()) out.push_back(static_cast<std::byte>(std::lround(v * 255.0)));
  write_file(out, path);
}

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(const std::vector<std::byte>& bytes, std::size_t& pos, const std::string& what) {
  auto ch = [&](std::size_t i) { return static_cast<char>(bytes[i]); };
  while (pos < bytes.size()) {
    if (std::isspace(static_cast<unsigned char>(ch(pos)))) {
      ++pos;
    } else if (ch(pos) == '#') {
      while (pos < bytes.size() && ch(pos) != '\n') ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(ch(pos))) && ch(pos) != '#') {
    tok.push_back(ch(pos++));
  }
  if (tok.empty()) throw FormatError(what + ": truncated PGM header");
  return tok;
}

std::size_t pgm_number(const std::string& tok, const std::string& what) {
  if (tok.empty() || tok.size() > 9) throw FormatError(what + ": bad PGM header field '" + tok + "'");
  for (char c : tok) {
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      throw FormatError(what + ": bad PGM header field '" + tok + "'");
    }
  }
  return std::stoul(tok);
}

}  // namespace

PlainImage load_image_pgm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::string what = path.string();
  std::size_t pos = 0;
  const std::string magic = pgm_token(bytes, pos, what);
  if (magic != "P5") throw FormatError(what + ": expected binary PGM (P5), found '" + magic + "'");
  const std::size_t width = pgm_number(pgm_token(bytes, pos, what), what);
  const std::size_t height = pgm_number(pgm_token(bytes, pos, what), what);
  const std::size_t maxval = pgm_number(pgm_token(bytes, pos, what), what);
  if (maxval != 255) throw FormatError(what + ": only 8-bit PGM (maxval 255) is supported, got " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(static_cast<char>(bytes[pos])))) {
    throw FormatError(what + ": missing whitespace after PGM header");
  }
  ++pos;
  if (bytes.size() - pos != width * height) {
    throw FormatError(what + ": expected " + std::to_string(width * height) + " pixel bytes, found " +
                      std::to_string(bytes.size() - pos));
  }
  std::vector<double> data(width * height);
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<double>(std::to_integer<unsigned>(bytes[pos + i])) / 255.0;
  }
  try {
    return PlainImage(height, width, std::move(data));
  } catch (const InvalidArgument& e) {
    throw FormatError(what + ": " + e.what());
  }
}

PlainImage load_any_plain(const std::filesystem::path& path) {
  if (path.extension() == ".pgm") return load_image_pgm(path);
  return load_plain(path);
}

}  // namespace speckle::io
