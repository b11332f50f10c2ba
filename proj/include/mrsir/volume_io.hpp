#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrsir/errors.hpp"
#include "mrsir/io_util.hpp"
#include "mrsir/nifti.hpp"
#include "mrsir/volume.hpp"

namespace mrsir {

// Native fast-path container: magic "MRSV", u32 dims (depth, height, width),
// u8 dtype code, little-endian payload. float64 round-trips any Volume
// bit-exactly; float32 is the compact interchange form.
enum class VolumeDtype : std::uint8_t { f32 = 0, f64 = 1 };

inline void write_volume(const Volume& v, const std::string& path,
                         VolumeDtype dtype = VolumeDtype::f64) {
  std::vector<std::uint8_t> out;
  const std::size_t elem = dtype == VolumeDtype::f32 ? 4 : 8;
  out.reserve(17 + v.size() * elem);
  out.push_back('M');
  out.push_back('R');
  out.push_back('S');
  out.push_back('V');
  detail::put_u32(out, static_cast<std::uint32_t>(v.dims().depth));
  detail::put_u32(out, static_cast<std::uint32_t>(v.dims().height));
  detail::put_u32(out, static_cast<std::uint32_t>(v.dims().width));
  out.push_back(static_cast<std::uint8_t>(dtype));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (dtype == VolumeDtype::f32)
      detail::put_f32(out, static_cast<float>(v[i]));
    else
      detail::put_f64(out, v[i]);
  }
  detail::write_file_bytes(path, out);
}

inline Volume read_volume(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  if (bytes.size() < 17) throw MalformedHeader("mrsv: header truncated");
  if (!(bytes[0] == 'M' && bytes[1] == 'R' && bytes[2] == 'S' &&
        bytes[3] == 'V'))
    throw MalformedHeader("mrsv: bad magic");
  const Dims dims{detail::get_u32(bytes.data() + 4),
                  detail::get_u32(bytes.data() + 8),
                  detail::get_u32(bytes.data() + 12)};
  if (dims.total() == 0) throw MalformedHeader("mrsv: zero dims");
  const std::uint8_t code = bytes[16];
  if (code > 1) throw UnsupportedDatatype("mrsv: unknown dtype code");
  const auto dtype = static_cast<VolumeDtype>(code);
  const std::size_t elem = dtype == VolumeDtype::f32 ? 4 : 8;
  if (bytes.size() < 17 + dims.total() * elem)
    throw TruncatedData("mrsv: payload shorter than dims require");

  Volume v(dims);
  const std::uint8_t* q = bytes.data() + 17;
  for (std::size_t i = 0; i < dims.total(); ++i)
    v[i] = dtype == VolumeDtype::f32
               ? static_cast<double>(detail::get_f32(q + 4 * i))
               : detail::get_f64(q + 8 * i);
  return v;
}

// Extension-dispatched reader: .nii goes through the NIfTI path, everything
// else through the native container.
inline Volume read_any_volume(const std::string& path) {
  if (path.size() >= 4 && path.rfind(".nii") == path.size() - 4)
    return read_nifti(path);
  return read_volume(path);
}

inline void write_any_volume(const Volume& v, const std::string& path) {
  if (path.size() >= 4 && path.rfind(".nii") == path.size() - 4)
    write_nifti(v, path);
  else
    write_volume(v, path);
}

} // namespace mrsir
