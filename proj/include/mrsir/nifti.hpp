#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mrsir/errors.hpp"
#include "mrsir/io_util.hpp"
#include "mrsir/volume.hpp"

namespace mrsir {

// Minimal NIfTI-1 single-file (.nii) support: 348-byte header, magic
// "n+1\0", little-endian, scalar datatypes uint8/int16/float32/float64,
// no compression. Payload order is x-fastest, matching the (z, y, x)
// row-major layout of Volume.

enum class NiftiDtype : std::int16_t {
  u8 = 2,
  i16 = 4,
  f32 = 16,
  f64 = 64,
};

namespace detail {

constexpr std::size_t kNiftiHeaderSize = 348;
constexpr std::size_t kNiftiVoxOffset = 352; // header + 4-byte extension pad

inline int nifti_bitpix(NiftiDtype t) {
  switch (t) {
  case NiftiDtype::u8: return 8;
  case NiftiDtype::i16: return 16;
  case NiftiDtype::f32: return 32;
  case NiftiDtype::f64: return 64;
  }
  throw UnsupportedDatatype("nifti: unknown datatype");
}

} // namespace detail

inline Volume read_nifti(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  if (bytes.size() < detail::kNiftiHeaderSize)
    throw MalformedHeader("nifti: file shorter than the 348-byte header");

  const std::uint8_t* p = bytes.data();
  const auto sizeof_hdr = static_cast<std::int32_t>(detail::get_u32(p));
  if (sizeof_hdr != 348)
    throw MalformedHeader("nifti: sizeof_hdr must be 348");
  if (!(p[344] == 'n' && p[345] == '+' && p[346] == '1' && p[347] == '\0'))
    throw MalformedHeader("nifti: magic must be \"n+1\\0\"");

  const std::uint16_t ndim = detail::get_u16(p + 40);
  if (ndim < 1 || ndim > 7) throw MalformedHeader("nifti: dim[0] out of range");
  std::uint16_t dim[8] = {0};
  for (int i = 0; i <= 7; ++i)
    dim[i] = detail::get_u16(p + 40 + 2 * i);
  for (int i = static_cast<int>(ndim) + 1; i <= 7; ++i) dim[i] = 1;
  for (int i = 4; i <= 7; ++i)
    if (std::max<std::uint16_t>(dim[i], 1) > 1)
      throw UnsupportedDatatype("nifti: only scalar 1-3D images supported");

  const auto datatype = static_cast<std::int16_t>(detail::get_u16(p + 70));
  const auto bitpix = static_cast<std::int16_t>(detail::get_u16(p + 72));
  NiftiDtype dtype;
  switch (datatype) {
  case 2: dtype = NiftiDtype::u8; break;
  case 4: dtype = NiftiDtype::i16; break;
  case 16: dtype = NiftiDtype::f32; break;
  case 64: dtype = NiftiDtype::f64; break;
  default:
    throw UnsupportedDatatype("nifti: datatype " + std::to_string(datatype));
  }
  if (bitpix != detail::nifti_bitpix(dtype))
    throw MalformedHeader("nifti: bitpix inconsistent with datatype");

  const float vox_offset_f = detail::get_f32(p + 108);
  if (!(vox_offset_f >= 348.0f))
    throw MalformedHeader("nifti: vox_offset below header size");
  const auto vox_offset = static_cast<std::size_t>(vox_offset_f);
  float slope = detail::get_f32(p + 112);
  const float inter = detail::get_f32(p + 116);
  if (slope == 0.0f) slope = 1.0f;

  const std::size_t width = std::max<std::uint16_t>(dim[1], 1);
  const std::size_t height = ndim >= 2 ? std::max<std::uint16_t>(dim[2], 1) : 1;
  const std::size_t depth = ndim >= 3 ? std::max<std::uint16_t>(dim[3], 1) : 1;
  const std::size_t count = width * height * depth;
  const std::size_t elem = static_cast<std::size_t>(detail::nifti_bitpix(dtype)) / 8;
  if (bytes.size() < vox_offset + count * elem)
    throw TruncatedData("nifti: payload shorter than dims require");

  Volume v(Dims{depth, height, width});
  const std::uint8_t* q = p + vox_offset;
  for (std::size_t i = 0; i < count; ++i) {
    double raw;
    switch (dtype) {
    case NiftiDtype::u8: raw = q[i]; break;
    case NiftiDtype::i16:
      raw = static_cast<std::int16_t>(detail::get_u16(q + 2 * i));
      break;
    case NiftiDtype::f32: raw = detail::get_f32(q + 4 * i); break;
    case NiftiDtype::f64: raw = detail::get_f64(q + 8 * i); break;
    default: raw = 0; break;
    }
    v[i] = static_cast<double>(slope) * raw + static_cast<double>(inter);
  }
  return v;
}

inline void write_nifti(const Volume& v, const std::string& path,
                        NiftiDtype dtype = NiftiDtype::f32) {
  const Dims d = v.dims();
  std::vector<std::uint8_t> hdr(detail::kNiftiHeaderSize, 0);
  std::vector<std::uint8_t> out;
  out.reserve(detail::kNiftiVoxOffset +
              v.size() * static_cast<std::size_t>(detail::nifti_bitpix(dtype)) / 8);

  // Fixed header fields; everything unused stays zero.
  std::vector<std::uint8_t> tmp;
  detail::put_u32(tmp, 348);
  std::copy(tmp.begin(), tmp.end(), hdr.begin());

  auto put_u16_at = [&](std::size_t off, std::uint16_t val) {
    hdr[off] = static_cast<std::uint8_t>(val & 0xff);
    hdr[off + 1] = static_cast<std::uint8_t>(val >> 8);
  };
  auto put_f32_at = [&](std::size_t off, float val) {
    const auto u = std::bit_cast<std::uint32_t>(val);
    for (int i = 0; i < 4; ++i)
      hdr[off + static_cast<std::size_t>(i)] =
          static_cast<std::uint8_t>((u >> (8 * i)) & 0xff);
  };

  put_u16_at(40, 3); // dim[0]: always 3 spatial dims; 2D encodes dim[3] = 1
  put_u16_at(42, static_cast<std::uint16_t>(d.width));
  put_u16_at(44, static_cast<std::uint16_t>(d.height));
  put_u16_at(46, static_cast<std::uint16_t>(d.depth));
  for (std::size_t i = 4; i <= 7; ++i) put_u16_at(40 + 2 * i, 1);

  put_u16_at(70, static_cast<std::uint16_t>(dtype));
  put_u16_at(72, static_cast<std::uint16_t>(detail::nifti_bitpix(dtype)));
  for (std::size_t i = 0; i <= 7; ++i)
    put_f32_at(76 + 4 * i, 1.0f); // pixdim: qfac 1, unit voxels
  put_f32_at(108, static_cast<float>(detail::kNiftiVoxOffset));
  put_f32_at(112, 1.0f); // scl_slope
  put_f32_at(116, 0.0f); // scl_inter
  hdr[344] = 'n';
  hdr[345] = '+';
  hdr[346] = '1';
  hdr[347] = '\0';

  out.insert(out.end(), hdr.begin(), hdr.end());
  detail::put_u32(out, 0); // empty extension flag pads to vox_offset 352

  for (std::size_t i = 0; i < v.size(); ++i) {
    switch (dtype) {
    case NiftiDtype::u8:
      out.push_back(static_cast<std::uint8_t>(
          std::lround(std::clamp(v[i], 0.0, 1.0) * 255.0)));
      break;
    case NiftiDtype::i16:
      detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(
                               std::lround(std::clamp(v[i], -1.0, 1.0) * 32767.0))));
      break;
    case NiftiDtype::f32:
      detail::put_f32(out, static_cast<float>(v[i]));
      break;
    case NiftiDtype::f64:
      detail::put_f64(out, v[i]);
      break;
    }
  }
  detail::write_file_bytes(path, out);
}

} // namespace mrsir
