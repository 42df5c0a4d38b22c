#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <random>

#include "ics/volume_io.hpp"
#include "oracles.hpp"

using namespace ics;

namespace {

// Hand-assembled NIfTI-1 file, independent of the encoder under test.
struct RawNifti {
  std::vector<std::uint8_t> bytes = std::vector<std::uint8_t>(352, 0);
  bool big_endian = false;

  template <class T>
  void put(std::size_t off, T v) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    if (big_endian) std::reverse(raw, raw + sizeof(T));
    if (bytes.size() < off + sizeof(T)) bytes.resize(off + sizeof(T));
    std::memcpy(bytes.data() + off, raw, sizeof(T));
  }

  RawNifti(std::vector<int> dims, std::int16_t datatype, std::int16_t bitpix, bool be = false) : big_endian(be) {
    put<std::int32_t>(0, 348);
    put<std::int16_t>(40, static_cast<std::int16_t>(dims.size()));
    for (std::size_t i = 0; i < dims.size(); ++i) put<std::int16_t>(42 + 2 * i, static_cast<std::int16_t>(dims[i]));
    put<std::int16_t>(70, datatype);
    put<std::int16_t>(72, bitpix);
    for (int i = 0; i < 4; ++i) put<float>(76 + 4 * i, 1.0f);
    put<float>(108, 352.0f);
    std::memcpy(bytes.data() + 344, "n+1\0", 4);
  }

  template <class T>
  void append(T v) {
    put<T>(bytes.size(), v);
  }

  void save(const std::filesystem::path& p) const {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
};

void expect_code(ErrorCode code, const std::function<void()>& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

Volume random_volume(std::mt19937_64& rng, int w, int h, int n) {
  std::uniform_real_distribution<float> u(-1000.0f, 1000.0f);
  Volume v;
  for (int k = 1; k <= n; ++k) {
    Slice s{Grid<float>(w, h), k};
    for (auto& x : s.pixels.values()) x = u(rng);
    v.slices.push_back(std::move(s));
  }
  v.spacing = {0.5, 0.75, 2.0};
  return v;
}

}  // namespace

TEST(Nifti, MinimalFloatFile) {
  fixture::TempDir dir("nifti");
  RawNifti raw({4, 4, 2}, 16, 32);
  for (int i = 0; i < 32; ++i) raw.append<float>(static_cast<float>(i));
  raw.save(dir / "a.nii");
  const Volume v = read_nifti(dir / "a.nii");
  ASSERT_EQ(v.count(), 2);
  EXPECT_EQ(v.slice_size(), (Size2{4, 4}));
  EXPECT_EQ(v.at(1).pixels(1, 0), 1.0f);
  EXPECT_EQ(v.at(1).pixels(0, 1), 4.0f);
  EXPECT_EQ(v.at(2).pixels(0, 0), 16.0f);
  EXPECT_EQ(v.at(2).index, 2);
}

TEST(Nifti, IntegerTypesAndSlope) {
  fixture::TempDir dir("nifti");
  RawNifti u8({2, 2, 1}, 2, 8);
  for (std::uint8_t i : {0, 1, 2, 255}) u8.append(i);
  u8.put<float>(112, 2.0f);
  u8.put<float>(116, 1.0f);
  u8.save(dir / "u8.nii");
  const Volume a = read_nifti(dir / "u8.nii");
  EXPECT_EQ(a.at(1).pixels(1, 1), 511.0f);
  EXPECT_EQ(a.at(1).pixels(0, 0), 1.0f);

  RawNifti i16({2, 1}, 4, 16);
  i16.append<std::int16_t>(-3);
  i16.append<std::int16_t>(7);
  i16.save(dir / "i16.nii");
  const Volume b = read_nifti(dir / "i16.nii");
  EXPECT_EQ(b.count(), 1);
  EXPECT_EQ(b.at(1).pixels(0, 0), -3.0f);
}

TEST(Nifti, BigEndianFile) {
  fixture::TempDir dir("nifti");
  RawNifti raw({2, 1, 1}, 64, 64, true);
  raw.append<double>(1.5);
  raw.append<double>(-2.25);
  raw.save(dir / "be.nii");
  const Volume v = read_nifti(dir / "be.nii");
  EXPECT_EQ(v.at(1).pixels(0, 0), 1.5f);
  EXPECT_EQ(v.at(1).pixels(1, 0), -2.25f);
}

TEST(Nifti, DualFileMagicRejected) {
  fixture::TempDir dir("nifti");
  RawNifti raw({2, 2, 1}, 16, 32);
  for (int i = 0; i < 4; ++i) raw.append<float>(0.0f);
  std::memcpy(raw.bytes.data() + 344, "ni1\0", 4);
  raw.save(dir / "pair.nii");
  expect_code(ErrorCode::BadMagic, [&] { read_nifti(dir / "pair.nii"); });
}

TEST(Nifti, TruncatedPayload) {
  fixture::TempDir dir("nifti");
  RawNifti raw({2, 2, 1}, 16, 32);
  for (int i = 0; i < 3; ++i) raw.append<float>(0.0f);
  raw.save(dir / "short.nii");
  expect_code(ErrorCode::TruncatedFile, [&] { read_nifti(dir / "short.nii"); });

  RawNifti header_only({2, 2, 1}, 16, 32);
  header_only.bytes.resize(200);
  header_only.save(dir / "stub.nii");
  expect_code(ErrorCode::TruncatedFile, [&] { read_nifti(dir / "stub.nii"); });
}

TEST(Nifti, UnsupportedDatatype) {
  fixture::TempDir dir("nifti");
  RawNifti raw({2, 2, 1}, 32, 64);  // complex64
  for (int i = 0; i < 8; ++i) raw.append<float>(0.0f);
  raw.save(dir / "c.nii");
  expect_code(ErrorCode::UnsupportedDatatype, [&] { read_nifti(dir / "c.nii"); });
}

TEST(Nifti, MissingFile) {
  expect_code(ErrorCode::IoFailure, [] { read_nifti("/nonexistent/dir/x.nii"); });
}

TEST(Nifti, WriteSizeArithmetic) {
  fixture::TempDir dir("nifti");
  Volume v;
  v.slices.push_back({Grid<float>(2, 2, 1.0f), 1});
  write_nifti(v, dir / "tiny.nii");
  EXPECT_EQ(std::filesystem::file_size(dir / "tiny.nii"), 352u + 16u);
}

TEST(Nifti, WriteEmptyVolume) {
  fixture::TempDir dir("nifti");
  expect_code(ErrorCode::InvalidVolume, [&] { write_nifti(Volume{}, dir / "e.nii"); });
}

TEST(Nifti, RoundTripPlainAndGzip) {
  fixture::TempDir dir("nifti");
  std::mt19937_64 rng(7);
  for (const char* name : {"r.nii", "r.nii.gz"}) {
    const Volume v = random_volume(rng, 5, 3, 4);
    write_nifti(v, dir / name);
    const Volume back = read_nifti(dir / name);
    EXPECT_EQ(back.slices, v.slices) << name;
    EXPECT_FLOAT_EQ(static_cast<float>(back.spacing.dz), 2.0f);
  }
  // The .gz file really is compressed: gzip magic bytes.
  std::ifstream in(dir / "r.nii.gz", std::ios::binary);
  unsigned char magic[2] = {};
  in.read(reinterpret_cast<char*>(magic), 2);
  EXPECT_EQ(magic[0], 0x1f);
  EXPECT_EQ(magic[1], 0x8b);
}

TEST(Nifti, AxisReslicing) {
  fixture::TempDir dir("nifti");
  RawNifti raw({2, 3, 4}, 16, 32);
  for (int i = 0; i < 24; ++i) raw.append<float>(static_cast<float>(i));
  raw.save(dir / "a.nii");
  // value = x + 2y + 6z
  const Volume z = read_nifti(dir / "a.nii", 2);
  EXPECT_EQ(z.count(), 4);
  EXPECT_EQ(z.slice_size(), (Size2{2, 3}));
  const Volume y = read_nifti(dir / "a.nii", 1);
  EXPECT_EQ(y.count(), 3);
  EXPECT_EQ(y.slice_size(), (Size2{2, 4}));
  EXPECT_EQ(y.at(2).pixels(1, 3), 1.0f + 2.0f + 18.0f);
  const Volume x = read_nifti(dir / "a.nii", 0);
  EXPECT_EQ(x.count(), 2);
  EXPECT_EQ(x.slice_size(), (Size2{3, 4}));
  EXPECT_EQ(x.at(2).pixels(2, 1), 1.0f + 4.0f + 6.0f);
  expect_code(ErrorCode::InvalidValue, [&] { read_nifti(dir / "a.nii", 3); });
}

TEST(CaseBundle, MatchingPair) {
  fixture::TempDir dir("bundle");
  Volume img;
  Volume lab;
  for (int k = 1; k <= 2; ++k) {
    img.slices.push_back({Grid<float>(4, 4, 1.0f), k});
    lab.slices.push_back({Grid<float>(4, 4, 0.0f), k});
  }
  lab.slices[0].pixels(1, 1) = 3.0f;
  write_nifti(img, dir / "img.nii.gz");
  write_nifti(lab, dir / "lab.nii.gz");
  const CaseBundle b = load_case(dir / "img.nii.gz", dir / "lab.nii.gz", "LV");
  EXPECT_EQ(b.count(), 2);
  EXPECT_EQ(b.region, "LV");
  EXPECT_EQ(b.image.id, "img");
  EXPECT_EQ(b.label_at(1)(1, 1), 1);
  EXPECT_EQ(b.label_at(1)(0, 0), 0);
}

TEST(CaseBundle, BinarizesLabels) {
  Grid<float> g(2, 1, std::vector<float>{0.0f, 3.0f});
  EXPECT_EQ(binarize(g), Mask(2, 1, std::vector<std::uint8_t>{0, 1}));
}

TEST(CaseBundle, ShapeMismatch) {
  Volume img;
  Volume lab;
  for (int k = 1; k <= 2; ++k) img.slices.push_back({Grid<float>(4, 4), k});
  for (int k = 1; k <= 3; ++k) lab.slices.push_back({Grid<float>(4, 4), k});
  expect_code(ErrorCode::ShapeMismatch, [&] { make_bundle(img, lab, "r"); });
}
