#include <catch2/catch.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "mrsir/montage.hpp"
#include "mrsir/nifti.hpp"
#include "mrsir/png.hpp"
#include "mrsir/report.hpp"
#include "mrsir/rng.hpp"
#include "mrsir/volume_io.hpp"

using namespace mrsir;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

void poke_u16(std::vector<std::uint8_t>& b, std::size_t off, std::uint16_t v) {
  b[off] = static_cast<std::uint8_t>(v & 0xff);
  b[off + 1] = static_cast<std::uint8_t>(v >> 8);
}

void poke_f32(std::vector<std::uint8_t>& b, std::size_t off, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  for (int i = 0; i < 4; ++i)
    b[off + static_cast<std::size_t>(i)] =
        static_cast<std::uint8_t>((u >> (8 * i)) & 0xff);
}

// Hand-assembled NIfTI-1 bytes, independent of the library writer.
std::vector<std::uint8_t> golden_nifti(std::uint16_t nx, std::uint16_t ny,
                                       std::uint16_t nz, float slope,
                                       float inter) {
  std::vector<std::uint8_t> b(352, 0);
  b[0] = 92; b[1] = 1; // sizeof_hdr = 348 LE
  poke_u16(b, 40, 3);
  poke_u16(b, 42, nx);
  poke_u16(b, 44, ny);
  poke_u16(b, 46, nz);
  for (std::size_t i = 4; i <= 7; ++i) poke_u16(b, 40 + 2 * i, 1);
  poke_u16(b, 70, 16); // float32
  poke_u16(b, 72, 32);
  poke_f32(b, 108, 352.0f);
  poke_f32(b, 112, slope);
  poke_f32(b, 116, inter);
  b[344] = 'n'; b[345] = '+'; b[346] = '1'; b[347] = 0;
  const std::size_t count =
      static_cast<std::size_t>(nx) * ny * nz;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<std::uint8_t> f(4);
    poke_f32(f, 0, static_cast<float>(i));
    b.insert(b.end(), f.begin(), f.end());
  }
  return b;
}

void dump(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

// Minimal PNG consumer for the writer's output: walks chunks, inflates the
// stored-deflate IDAT stream, strips filter bytes.
struct DecodedPng {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;
};

DecodedPng decode_png_gray8(const std::vector<std::uint8_t>& b) {
  DecodedPng out;
  REQUIRE(b.size() > 8);
  auto be32 = [&](std::size_t off) {
    return (static_cast<std::uint32_t>(b[off]) << 24) |
           (static_cast<std::uint32_t>(b[off + 1]) << 16) |
           (static_cast<std::uint32_t>(b[off + 2]) << 8) | b[off + 3];
  };
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  while (pos + 8 <= b.size()) {
    const std::uint32_t len = be32(pos);
    const std::string type(b.begin() + static_cast<std::ptrdiff_t>(pos) + 4,
                           b.begin() + static_cast<std::ptrdiff_t>(pos) + 8);
    const std::size_t data = pos + 8;
    if (type == "IHDR") {
      out.width = be32(data);
      out.height = be32(data + 4);
      REQUIRE(b[data + 8] == 8); // bit depth
      REQUIRE(b[data + 9] == 0); // grayscale
    } else if (type == "IDAT") {
      idat.insert(idat.end(), b.begin() + static_cast<std::ptrdiff_t>(data),
                  b.begin() + static_cast<std::ptrdiff_t>(data + len));
    }
    pos = data + len + 4;
  }
  // zlib header + stored blocks.
  REQUIRE(idat.size() > 2);
  std::size_t p = 2;
  std::vector<std::uint8_t> raw;
  bool final = false;
  while (!final) {
    final = idat[p] & 1;
    REQUIRE((idat[p] >> 1) == 0); // stored
    const std::size_t len = idat[p + 1] | (idat[p + 2] << 8);
    p += 5;
    raw.insert(raw.end(), idat.begin() + static_cast<std::ptrdiff_t>(p),
               idat.begin() + static_cast<std::ptrdiff_t>(p + len));
    p += len;
  }
  REQUIRE(raw.size() == out.height * (out.width + 1));
  for (std::size_t y = 0; y < out.height; ++y) {
    REQUIRE(raw[y * (out.width + 1)] == 0); // filter none
    out.pixels.insert(
        out.pixels.end(),
        raw.begin() + static_cast<std::ptrdiff_t>(y * (out.width + 1) + 1),
        raw.begin() + static_cast<std::ptrdiff_t>((y + 1) * (out.width + 1)));
  }
  return out;
}

} // namespace

TEST_CASE("read_nifti parses a golden file") {
  const auto path = tmp_path("golden_4x4x4.nii");
  dump(path, golden_nifti(4, 4, 4, 1.0f, 0.0f));
  const Volume v = read_nifti(path);
  REQUIRE(v.dims() == Dims{4, 4, 4});
  for (std::size_t i = 0; i < 64; ++i)
    CHECK(v[i] == static_cast<double>(i)); // (z, y, x) order, x fastest
}

TEST_CASE("read_nifti applies slope and intercept") {
  const auto path = tmp_path("golden_scaled.nii");
  dump(path, golden_nifti(2, 2, 2, 2.0f, 0.5f));
  const Volume v = read_nifti(path);
  for (std::size_t i = 0; i < 8; ++i)
    CHECK(v[i] == Approx(2.0 * static_cast<double>(i) + 0.5).margin(1e-6));
}

TEST_CASE("read_nifti rejects malformed input") {
  SECTION("wrong sizeof_hdr") {
    auto bytes = golden_nifti(2, 2, 2, 1.0f, 0.0f);
    bytes[0] = 93;
    const auto path = tmp_path("bad_sizeof.nii");
    dump(path, bytes);
    CHECK_THROWS_AS(read_nifti(path), MalformedHeader);
  }
  SECTION("wrong magic") {
    auto bytes = golden_nifti(2, 2, 2, 1.0f, 0.0f);
    bytes[344] = 'x';
    const auto path = tmp_path("bad_magic.nii");
    dump(path, bytes);
    CHECK_THROWS_AS(read_nifti(path), MalformedHeader);
  }
  SECTION("unsupported datatype") {
    auto bytes = golden_nifti(2, 2, 2, 1.0f, 0.0f);
    poke_u16(bytes, 70, 8); // int32: not supported
    poke_u16(bytes, 72, 32);
    const auto path = tmp_path("bad_dtype.nii");
    dump(path, bytes);
    CHECK_THROWS_AS(read_nifti(path), UnsupportedDatatype);
  }
  SECTION("truncated payload") {
    auto bytes = golden_nifti(2, 2, 2, 1.0f, 0.0f);
    bytes.resize(bytes.size() - 8);
    const auto path = tmp_path("truncated.nii");
    dump(path, bytes);
    CHECK_THROWS_AS(read_nifti(path), TruncatedData);
  }
  SECTION("missing file") {
    CHECK_THROWS_AS(read_nifti(tmp_path("nope_does_not_exist.nii")),
                    MissingArtifacts);
  }
}

TEST_CASE("write_nifti emits the documented layout") {
  Volume v(Dims{64, 64, 64});
  Rng rng(1);
  for (auto& x : v.values()) x = rng.unit();
  const auto path = tmp_path("vol64.nii");
  write_nifti(v, path); // float32 default
  CHECK(std::filesystem::file_size(path) == 352 + 4 * 64 * 64 * 64);

  SECTION("deterministic bytes") {
    const auto first = slurp(path);
    write_nifti(v, path);
    CHECK(slurp(path) == first);
  }
}

TEST_CASE("write_nifti encodes 2D slices with dim[3] = 1") {
  Volume s(Dims{1, 8, 16}, 0.25);
  const auto path = tmp_path("slice.nii");
  write_nifti(s, path);
  const auto bytes = slurp(path);
  CHECK((bytes[40] | (bytes[41] << 8)) == 3);  // dim[0]
  CHECK((bytes[42] | (bytes[43] << 8)) == 16); // dim[1] = width
  CHECK((bytes[44] | (bytes[45] << 8)) == 8);  // dim[2] = height
  CHECK((bytes[46] | (bytes[47] << 8)) == 1);  // dim[3] = depth
  const Volume back = read_nifti(path);
  CHECK(back.dims() == s.dims());
  CHECK(back == s);
}

TEST_CASE("nifti round-trips") {
  SECTION("float32 values round-trip bit-exactly at float32") {
    Volume v(Dims{3, 5, 4});
    Rng rng(2);
    for (auto& x : v.values())
      x = static_cast<double>(static_cast<float>(rng.unit()));
    const auto path = tmp_path("rt32.nii");
    write_nifti(v, path, NiftiDtype::f32);
    CHECK(read_nifti(path) == v);
  }
  SECTION("any volume round-trips bit-exactly at float64") {
    Volume v(Dims{3, 5, 4});
    Rng rng(3);
    for (auto& x : v.values()) x = rng.unit();
    const auto path = tmp_path("rt64.nii");
    write_nifti(v, path, NiftiDtype::f64);
    CHECK(read_nifti(path) == v);
  }
}

TEST_CASE("native container round-trips any volume") {
  Volume v(Dims{5, 7, 6});
  Rng rng(4);
  for (auto& x : v.values()) x = rng.uniform(-1.0, 2.0);
  const auto path = tmp_path("vol.mrsv");
  write_volume(v, path);
  CHECK(read_volume(path) == v);
  CHECK(read_any_volume(path) == v);

  SECTION("malformed inputs") {
    auto bytes = slurp(path);
    bytes[0] = 'X';
    dump(tmp_path("bad.mrsv"), bytes);
    CHECK_THROWS_AS(read_volume(tmp_path("bad.mrsv")), MalformedHeader);

    auto trunc = slurp(path);
    trunc.resize(trunc.size() - 4);
    dump(tmp_path("trunc.mrsv"), trunc);
    CHECK_THROWS_AS(read_volume(tmp_path("trunc.mrsv")), TruncatedData);

    auto badcode = slurp(path);
    badcode[16] = 9;
    dump(tmp_path("badcode.mrsv"), badcode);
    CHECK_THROWS_AS(read_volume(tmp_path("badcode.mrsv")),
                    UnsupportedDatatype);
  }
}

TEST_CASE("png writer produces decodable grayscale output") {
  const std::size_t w = 37, h = 23;
  std::vector<std::uint8_t> pixels(w * h);
  for (std::size_t i = 0; i < pixels.size(); ++i)
    pixels[i] = static_cast<std::uint8_t>((i * 7) & 0xff);
  const auto path = tmp_path("gradient.png");
  write_png_gray8(path, w, h, pixels);

  const auto decoded = decode_png_gray8(slurp(path));
  CHECK(decoded.width == w);
  CHECK(decoded.height == h);
  CHECK(decoded.pixels == pixels);

  write_png_gray8(path, w, h, pixels);
  CHECK(slurp(path) == slurp(path)); // deterministic artifact
}

TEST_CASE("montage layouts") {
  Volume v(Dims{64, 64, 64}, 0.5);
  SECTION("one volume, three views: 1x3 grid") {
    const auto path = tmp_path("mont13.png");
    write_montage({v}, MontageLayout::three_view, path);
    const auto decoded = decode_png_gray8(slurp(path));
    CHECK(decoded.width == 3 * 64 + 2 * 2);
    CHECK(decoded.height == 64);
  }
  SECTION("input/prediction/truth triplet: 3x3 grid") {
    const auto path = tmp_path("mont33.png");
    write_montage({v, v, v}, MontageLayout::three_view, path);
    const auto decoded = decode_png_gray8(slurp(path));
    CHECK(decoded.width == 3 * 64 + 2 * 2);
    CHECK(decoded.height == 3 * 64 + 2 * 2);
  }
  SECTION("constant-zero volume renders black tiles") {
    Volume z(Dims{8, 8, 8});
    const auto path = tmp_path("montblack.png");
    write_montage({z}, MontageLayout::three_view, path);
    const auto decoded = decode_png_gray8(slurp(path));
    for (auto p : decoded.pixels) CHECK(p == 0);
  }
  SECTION("mismatched dims are rejected") {
    Volume small(Dims{8, 8, 8});
    CHECK_THROWS_AS(
        write_montage({v, small}, MontageLayout::three_view, tmp_path("x.png")),
        DimMismatch);
  }
}

TEST_CASE("report writers") {
  EvalReport report;
  report.rows.push_back({"ours-progressive", "test", 0.20, 0.002, 0.97});

  SECTION("csv formatting is deterministic and exact") {
    CHECK(report_csv(report) ==
          "method,split,missing_fraction,mse,ssim\n"
          "ours-progressive,test,0.20,0.002000,0.9700\n");
  }
  SECTION("empty report is header-only") {
    CHECK(report_csv(EvalReport{}) == "method,split,missing_fraction,mse,ssim\n");
  }
  SECTION("json round-trip preserves the report") {
    report.rows.push_back({"linear", "train", 0.05, 0.0041237, 0.9512345});
    const auto path = tmp_path("report.json");
    write_report(report, path, ReportFormat::json);
    CHECK(read_report_json(path) == report);
  }
  SECTION("csv file write") {
    const auto path = tmp_path("report.csv");
    write_report(report, path, ReportFormat::csv);
    const auto bytes = slurp(path);
    CHECK(std::string(bytes.begin(), bytes.end()) == report_csv(report));
  }
}
