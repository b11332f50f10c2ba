#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mrsir/errors.hpp"
#include "mrsir/io_util.hpp"

namespace mrsir {

namespace detail {

inline std::uint32_t crc32_update(std::uint32_t crc, const std::uint8_t* data,
                                  std::size_t len) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t n = 0; n < 256; ++n) {
      std::uint32_t c = n;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[n] = c;
    }
    return t;
  }();
  crc ^= 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i)
    crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

inline void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 24));
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

inline void png_chunk(std::vector<std::uint8_t>& out, const char type[5],
                      const std::vector<std::uint8_t>& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  std::vector<std::uint8_t> body;
  body.insert(body.end(), type, type + 4);
  body.insert(body.end(), data.begin(), data.end());
  out.insert(out.end(), body.begin(), body.end());
  put_be32(out, crc32_update(0, body.data(), body.size()));
}

// zlib stream with stored (uncompressed) deflate blocks; output bytes are a
// pure function of the input.
inline std::vector<std::uint8_t> zlib_stored(
    const std::vector<std::uint8_t>& raw) {
  std::vector<std::uint8_t> z;
  z.push_back(0x78);
  z.push_back(0x01);
  std::size_t pos = 0;
  do {
    const std::size_t chunk = std::min<std::size_t>(raw.size() - pos, 65535);
    const bool final = pos + chunk == raw.size();
    z.push_back(final ? 1 : 0);
    z.push_back(static_cast<std::uint8_t>(chunk & 0xff));
    z.push_back(static_cast<std::uint8_t>(chunk >> 8));
    z.push_back(static_cast<std::uint8_t>(~chunk & 0xff));
    z.push_back(static_cast<std::uint8_t>((~chunk >> 8) & 0xff));
    z.insert(z.end(), raw.begin() + static_cast<std::ptrdiff_t>(pos),
             raw.begin() + static_cast<std::ptrdiff_t>(pos + chunk));
    pos += chunk;
  } while (pos < raw.size());

  std::uint32_t a = 1, b = 0;
  for (std::uint8_t byte : raw) {
    a = (a + byte) % 65521;
    b = (b + a) % 65521;
  }
  put_be32(z, (b << 16) | a);
  return z;
}

} // namespace detail

// 8-bit grayscale PNG writer. Deterministic: identical pixels give
// byte-identical files.
inline void write_png_gray8(const std::string& path, std::size_t width,
                            std::size_t height,
                            const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != width * height)
    throw InvalidDims("png: pixel count must equal width * height");

  std::vector<std::uint8_t> out = {137, 80, 78, 71, 13, 10, 26, 10};

  std::vector<std::uint8_t> ihdr;
  detail::put_be32(ihdr, static_cast<std::uint32_t>(width));
  detail::put_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8); // bit depth
  ihdr.push_back(0); // grayscale
  ihdr.push_back(0); // compression
  ihdr.push_back(0); // filter
  ihdr.push_back(0); // no interlace
  detail::png_chunk(out, "IHDR", ihdr);

  std::vector<std::uint8_t> raw;
  raw.reserve(height * (width + 1));
  for (std::size_t y = 0; y < height; ++y) {
    raw.push_back(0); // filter: none
    raw.insert(raw.end(), pixels.begin() + static_cast<std::ptrdiff_t>(y * width),
               pixels.begin() + static_cast<std::ptrdiff_t>((y + 1) * width));
  }
  detail::png_chunk(out, "IDAT", detail::zlib_stored(raw));
  detail::png_chunk(out, "IEND", {});
  detail::write_file_bytes(path, out);
}

} // namespace mrsir
