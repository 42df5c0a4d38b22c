#pragma once

// Single-file NIfTI-1 (.nii / .nii.gz) reading and writing, plus labeled case
// loading. Only the subset needed for slice stacks is handled: no affine or
// orientation processing beyond pixdim.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ics/error.hpp"
#include "ics/image.hpp"

namespace ics {

namespace nifti {

inline constexpr int kHeaderSize = 348;
inline constexpr int kDefaultVoxOffset = 352;

enum Datatype : int {
  kUInt8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
};

inline int bits_per_voxel(int datatype) {
  switch (datatype) {
    case kUInt8: return 8;
    case kInt16: return 16;
    case kInt32: return 32;
    case kFloat32: return 32;
    case kFloat64: return 64;
    default: return 0;
  }
}

}  // namespace nifti

struct NiftiHeader {
  std::array<int, 8> dims{};  // dims[0] = rank
  int datatype_code = nifti::kFloat32;
  int bitpix = 32;
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  float vox_offset = static_cast<float>(nifti::kDefaultVoxOffset);
  std::array<float, 8> pixdim{};
  std::array<char, 4> magic{'n', '+', '1', '\0'};
  bool byte_swapped = false;

  std::size_t voxel_count() const noexcept {
    std::size_t n = 1;
    for (int d = 1; d <= dims[0] && d <= 3; ++d) n *= static_cast<std::size_t>(dims[d]);
    return n;
  }
};

namespace detail {

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <class T>
  T get(std::size_t offset) const {
    std::array<std::uint8_t, sizeof(T)> raw{};
    std::memcpy(raw.data(), bytes_.data() + offset, sizeof(T));
    if (needs_flip()) std::reverse(raw.begin(), raw.end());
    T value;
    std::memcpy(&value, raw.data(), sizeof(T));
    return value;
  }

 private:
  // Files are little-endian unless swapped.
  bool needs_flip() const noexcept {
    const bool file_little = !swap_;
    return file_little != (std::endian::native == std::endian::little);
  }

  std::span<const std::uint8_t> bytes_;
  bool swap_;
};

template <class T>
void put_le(std::vector<std::uint8_t>& out, std::size_t offset, T value) {
  std::array<std::uint8_t, sizeof(T)> raw{};
  std::memcpy(raw.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  std::memcpy(out.data() + offset, raw.data(), sizeof(T));
}

/// Reads a whole file, transparently inflating gzip streams (0x1f 0x8b).
inline std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  gzFile file = gzopen(path.string().c_str(), "rb");
  if (file == nullptr) fail(ErrorCode::IoFailure, "cannot open " + path.string());
  std::unique_ptr<gzFile_s, decltype(&gzclose)> guard(file, &gzclose);
  std::vector<std::uint8_t> bytes;
  std::array<std::uint8_t, 1 << 16> buffer{};
  for (;;) {
    const int n = gzread(file, buffer.data(), static_cast<unsigned>(buffer.size()));
    if (n < 0) {
      int errnum = 0;
      const char* msg = gzerror(file, &errnum);
      fail(ErrorCode::IoFailure, "read " + path.string() + ": " + (msg ? msg : "unknown"));
    }
    if (n == 0) break;
    bytes.insert(bytes.end(), buffer.begin(), buffer.begin() + n);
  }
  return bytes;
}

inline bool has_gz_suffix(const std::filesystem::path& path) { return path.extension() == ".gz"; }

inline void write_all(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (has_gz_suffix(path)) {
    gzFile file = gzopen(path.string().c_str(), "wb");
    if (file == nullptr) fail(ErrorCode::IoFailure, "cannot create " + path.string());
    std::unique_ptr<gzFile_s, decltype(&gzclose)> guard(file, &gzclose);
    std::size_t done = 0;
    while (done < bytes.size()) {
      const auto chunk = static_cast<unsigned>(std::min<std::size_t>(bytes.size() - done, 1u << 20));
      if (gzwrite(file, bytes.data() + done, chunk) != static_cast<int>(chunk)) {
        fail(ErrorCode::IoFailure, "write " + path.string());
      }
      done += chunk;
    }
    if (gzclose(guard.release()) != Z_OK) fail(ErrorCode::IoFailure, "close " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoFailure, "write " + path.string());
}

}  // namespace detail

/// Parses and validates the 348-byte header at the start of `bytes`.
inline NiftiHeader parse_nifti_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < static_cast<std::size_t>(nifti::kHeaderSize)) {
    fail(ErrorCode::TruncatedFile, "file shorter than NIfTI-1 header");
  }
  NiftiHeader h;
  {
    const detail::ByteReader le(bytes, false);
    const auto sizeof_hdr = le.get<std::int32_t>(0);
    if (sizeof_hdr == nifti::kHeaderSize) {
      h.byte_swapped = false;
    } else if (detail::ByteReader(bytes, true).get<std::int32_t>(0) == nifti::kHeaderSize) {
      h.byte_swapped = true;
    } else {
      fail(ErrorCode::BadMagic, "sizeof_hdr is not 348");
    }
  }
  const detail::ByteReader r(bytes, h.byte_swapped);

  std::memcpy(h.magic.data(), bytes.data() + 344, 4);
  if (h.magic != std::array<char, 4>{'n', '+', '1', '\0'}) {
    fail(ErrorCode::BadMagic, "expected single-file magic \"n+1\"");
  }
  for (int i = 0; i < 8; ++i) h.dims[i] = r.get<std::int16_t>(40 + 2 * i);
  h.datatype_code = r.get<std::int16_t>(70);
  h.bitpix = r.get<std::int16_t>(72);
  for (int i = 0; i < 8; ++i) h.pixdim[i] = r.get<float>(76 + 4 * i);
  h.vox_offset = r.get<float>(108);
  h.scl_slope = r.get<float>(112);
  h.scl_inter = r.get<float>(116);

  if (h.dims[0] != 2 && h.dims[0] != 3) {
    fail(ErrorCode::InvalidVolume, "dim[0] must be 2 or 3, got " + std::to_string(h.dims[0]));
  }
  for (int d = 1; d <= h.dims[0]; ++d) {
    if (h.dims[d] < 1) fail(ErrorCode::InvalidVolume, "non-positive dimension");
  }
  if (h.dims[0] == 2) h.dims[3] = 1;
  if (nifti::bits_per_voxel(h.datatype_code) == 0) {
    fail(ErrorCode::UnsupportedDatatype, "datatype code " + std::to_string(h.datatype_code));
  }
  if (h.vox_offset < 0) fail(ErrorCode::InvalidVolume, "negative vox_offset");
  return h;
}

/// A decoded NIfTI array with x fastest, then y, then z.
struct VoxelArray {
  NiftiHeader header;
  int nx = 0, ny = 0, nz = 0;
  std::vector<float> values;

  float at(int x, int y, int z) const noexcept {
    return values[(static_cast<std::size_t>(z) * ny + y) * nx + x];
  }
};

inline VoxelArray read_nifti_voxels(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = detail::read_all(path);
  VoxelArray out;
  out.header = parse_nifti_header(bytes);
  const NiftiHeader& h = out.header;
  out.nx = h.dims[1];
  out.ny = h.dims[2];
  out.nz = h.dims[3];

  const std::size_t count = h.voxel_count();
  const std::size_t width = static_cast<std::size_t>(nifti::bits_per_voxel(h.datatype_code) / 8);
  const auto offset = static_cast<std::size_t>(h.vox_offset);
  if (bytes.size() < offset + count * width) {
    fail(ErrorCode::TruncatedFile, path.string() + ": need " + std::to_string(offset + count * width) +
                                       " bytes, have " + std::to_string(bytes.size()));
  }
  const detail::ByteReader r(bytes, h.byte_swapped);
  const bool scale = h.scl_slope != 0.0f;
  out.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = offset + i * width;
    double raw = 0.0;
    switch (h.datatype_code) {
      case nifti::kUInt8: raw = bytes[at]; break;
      case nifti::kInt16: raw = r.get<std::int16_t>(at); break;
      case nifti::kInt32: raw = r.get<std::int32_t>(at); break;
      case nifti::kFloat32: raw = r.get<float>(at); break;
      case nifti::kFloat64: raw = r.get<double>(at); break;
    }
    const double value = scale ? raw * h.scl_slope + h.scl_inter : raw;
    if (!std::isfinite(value)) fail(ErrorCode::InvalidVolume, path.string() + ": non-finite voxel");
    out.values[i] = static_cast<float>(value);
  }
  return out;
}

/// Cuts a voxel array into slices along `axis` (0, 1 or 2). For axis 2 slice
/// k is plane z = k-1 with width nx and height ny.
inline Volume slice_voxels(const VoxelArray& voxels, int axis = 2) {
  if (axis < 0 || axis > 2) fail(ErrorCode::InvalidValue, "axis must be 0, 1 or 2");
  const auto& pd = voxels.header.pixdim;
  const auto spacing_of = [&](int d) { return pd[d + 1] > 0.0f ? static_cast<double>(pd[d + 1]) : 1.0; };

  int n = 0, w = 0, h = 0;
  Spacing spacing;
  switch (axis) {
    case 2: n = voxels.nz; w = voxels.nx; h = voxels.ny; spacing = {spacing_of(0), spacing_of(1), spacing_of(2)}; break;
    case 1: n = voxels.ny; w = voxels.nx; h = voxels.nz; spacing = {spacing_of(0), spacing_of(2), spacing_of(1)}; break;
    case 0: n = voxels.nx; w = voxels.ny; h = voxels.nz; spacing = {spacing_of(1), spacing_of(2), spacing_of(0)}; break;
  }
  Volume volume;
  volume.spacing = spacing;
  volume.slices.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    Slice slice{Grid<float>(w, h), k + 1};
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        float v = 0.0f;
        switch (axis) {
          case 2: v = voxels.at(x, y, k); break;
          case 1: v = voxels.at(x, k, y); break;
          case 0: v = voxels.at(k, x, y); break;
        }
        slice.pixels(x, y) = v;
      }
    }
    volume.slices.push_back(std::move(slice));
  }
  return volume;
}

inline Volume read_nifti(const std::filesystem::path& path, int axis = 2) {
  Volume volume = slice_voxels(read_nifti_voxels(path), axis);
  volume.id = path.filename().string();
  return volume;
}

/// Serializes a volume as a single-file f32 NIfTI-1 image (slices along the
/// third axis, vox_offset 352, slope 1, intercept 0).
inline std::vector<std::uint8_t> encode_nifti(const Volume& volume) {
  validate(volume);
  const Size2 size = volume.slice_size();
  const std::size_t count = size.area() * volume.slices.size();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(nifti::kDefaultVoxOffset) + count * 4, 0);

  using detail::put_le;
  put_le<std::int32_t>(out, 0, nifti::kHeaderSize);
  out[38] = 'r';  // regular
  const std::array<std::int16_t, 8> dims{3, static_cast<std::int16_t>(size.width),
                                         static_cast<std::int16_t>(size.height),
                                         static_cast<std::int16_t>(volume.count()), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put_le<std::int16_t>(out, 40 + 2 * i, dims[i]);
  put_le<std::int16_t>(out, 70, nifti::kFloat32);
  put_le<std::int16_t>(out, 72, 32);
  const std::array<float, 8> pixdim{1.0f,
                                    static_cast<float>(volume.spacing.dx),
                                    static_cast<float>(volume.spacing.dy),
                                    static_cast<float>(volume.spacing.dz),
                                    1.0f, 1.0f, 1.0f, 1.0f};
  for (int i = 0; i < 8; ++i) put_le<float>(out, 76 + 4 * i, pixdim[i]);
  put_le<float>(out, 108, static_cast<float>(nifti::kDefaultVoxOffset));
  put_le<float>(out, 112, 1.0f);
  put_le<float>(out, 116, 0.0f);
  out[123] = 2;  // xyzt_units: mm
  std::memcpy(out.data() + 344, "n+1\0", 4);

  std::size_t at = nifti::kDefaultVoxOffset;
  for (const Slice& s : volume.slices) {
    for (float v : s.pixels.values()) {
      put_le<float>(out, at, v);
      at += 4;
    }
  }
  return out;
}

inline void write_nifti(const Volume& volume, const std::filesystem::path& path) {
  if (volume.slices.empty()) fail(ErrorCode::InvalidVolume, "cannot write an empty volume");
  const auto bytes = encode_nifti(volume);
  detail::write_all(path, bytes);
}

/// Packs a mask stack into a float volume (0/1) for writing.
inline Volume masks_to_volume(const std::vector<Mask>& masks, Spacing spacing = {}) {
  Volume v;
  v.spacing = spacing;
  for (std::size_t k = 0; k < masks.size(); ++k) {
    const Mask& m = masks[k];
    Slice s{Grid<float>(m.width(), m.height()), static_cast<int>(k) + 1};
    auto dst = s.pixels.values();
    auto src = m.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]);
    v.slices.push_back(std::move(s));
  }
  return v;
}

/// Labels are binarized with value > 0 -> 1.
inline Mask binarize(const Grid<float>& labels) {
  Mask m(labels.width(), labels.height());
  auto src = labels.values();
  auto dst = m.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0f ? 1 : 0;
  return m;
}

/// One labeled volume for a single binary region.
struct CaseBundle {
  Volume image;
  std::vector<Mask> labels;
  std::string region;
  /// original_index[k-1] is the index slice k had in the file it came from.
  std::vector<int> original_index;

  int count() const noexcept { return image.count(); }
  const Mask& label_at(int index) const { return labels.at(static_cast<std::size_t>(index - 1)); }
};

inline void validate(const CaseBundle& bundle) {
  validate(bundle.image);
  if (bundle.labels.size() != bundle.image.slices.size()) {
    fail(ErrorCode::ShapeMismatch, "image and label slice counts differ");
  }
  for (const Mask& m : bundle.labels) {
    if (m.size() != bundle.image.slice_size()) fail(ErrorCode::ShapeMismatch, "label slice size differs from image");
    validate(m);
  }
}

inline CaseBundle make_bundle(Volume image, const Volume& label, std::string region) {
  if (image.count() != label.count() || image.slice_size() != label.slice_size()) {
    fail(ErrorCode::ShapeMismatch, "image " + to_string(image.slice_size()) + "x" + std::to_string(image.count()) +
                                       " vs label " + to_string(label.slice_size()) + "x" +
                                       std::to_string(label.count()));
  }
  CaseBundle bundle;
  bundle.image = std::move(image);
  bundle.region = std::move(region);
  bundle.labels.reserve(label.slices.size());
  for (const Slice& s : label.slices) bundle.labels.push_back(binarize(s.pixels));
  bundle.original_index.resize(bundle.labels.size());
  for (std::size_t i = 0; i < bundle.original_index.size(); ++i) bundle.original_index[i] = static_cast<int>(i) + 1;
  return bundle;
}

inline CaseBundle load_case(const std::filesystem::path& image_path, const std::filesystem::path& label_path,
                            std::string region, int axis = 2) {
  Volume image = read_nifti(image_path, axis);
  const Volume label = read_nifti(label_path, axis);
  CaseBundle bundle = make_bundle(std::move(image), label, std::move(region));
  bundle.image.id = image_path.filename().string();
  for (const std::string suffix : {".nii.gz", ".nii"}) {
    auto& id = bundle.image.id;
    if (id.size() > suffix.size() && id.ends_with(suffix)) {
      id.resize(id.size() - suffix.size());
      break;
    }
  }
  return bundle;
}

}  // namespace ics
