#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ics/error.hpp"

namespace ics {

struct Size2 {
  int width = 0;
  int height = 0;

  friend bool operator==(const Size2&, const Size2&) = default;
  bool is_square() const noexcept { return width == height; }
  std::size_t area() const noexcept {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
};

inline std::string to_string(Size2 s) {
  return std::to_string(s.width) + "x" + std::to_string(s.height);
}

/// Dense row-major 2-D array; (x, y) addresses column x of row y.
template <class T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : size_{width, height}, data_(checked_area(width, height), fill) {}
  Grid(int width, int height, std::vector<T> values) : size_{width, height}, data_(std::move(values)) {
    if (data_.size() != checked_area(width, height)) {
      fail(ErrorCode::DimMismatch, "grid " + to_string(size_) + " given " +
                                       std::to_string(data_.size()) + " values");
    }
  }

  int width() const noexcept { return size_.width; }
  int height() const noexcept { return size_.height; }
  Size2 size() const noexcept { return size_; }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const noexcept { return data_[index(x, y)]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::span<const T> row(int y) const noexcept {
    return std::span<const T>(data_).subspan(static_cast<std::size_t>(y) * size_.width, size_.width);
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  static std::size_t checked_area(int width, int height) {
    if (width < 1 || height < 1) {
      fail(ErrorCode::InvalidValue,
           "grid dimensions must be positive, got " + std::to_string(width) + "x" + std::to_string(height));
    }
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(size_.width) + static_cast<std::size_t>(x);
  }

  Size2 size_{};
  std::vector<T> data_;
};

/// Binary label image, values in {0,1}.
using Mask = Grid<std::uint8_t>;
/// Per-pixel foreground probability in [0,1].
using ProbMask = Grid<double>;

/// One cross-sectional image; index is its 1-based position in the volume.
struct Slice {
  Grid<float> pixels;
  int index = 0;

  int width() const noexcept { return pixels.width(); }
  int height() const noexcept { return pixels.height(); }
  Size2 size() const noexcept { return pixels.size(); }

  friend bool operator==(const Slice&, const Slice&) = default;
};

struct Spacing {
  double dx = 1.0;
  double dy = 1.0;
  double dz = 1.0;

  friend bool operator==(const Spacing&, const Spacing&) = default;
};

/// Ordered stack of equally sized slices indexed 1..n.
struct Volume {
  std::vector<Slice> slices;
  Spacing spacing;
  std::string id;

  int count() const noexcept { return static_cast<int>(slices.size()); }
  Size2 slice_size() const noexcept { return slices.empty() ? Size2{} : slices.front().size(); }
  /// 1-based access.
  const Slice& at(int index) const { return slices.at(static_cast<std::size_t>(index - 1)); }

  friend bool operator==(const Volume&, const Volume&) = default;
};

inline void validate(const Slice& s) {
  if (s.pixels.empty()) fail(ErrorCode::InvalidValue, "slice has no pixels");
  for (float v : s.pixels.values()) {
    if (!std::isfinite(v)) fail(ErrorCode::InvalidValue, "slice " + std::to_string(s.index) + " has non-finite value");
  }
}

inline void validate(const Mask& m) {
  if (m.empty()) fail(ErrorCode::InvalidValue, "mask has no pixels");
  for (auto v : m.values()) {
    if (v > 1) fail(ErrorCode::InvalidValue, "mask value " + std::to_string(v) + " is not binary");
  }
}

inline void validate(const ProbMask& p) {
  if (p.empty()) fail(ErrorCode::InvalidValue, "probability mask has no pixels");
  for (double v : p.values()) {
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::InvalidValue, "probability outside [0,1]");
  }
}

inline void validate(const Volume& v) {
  if (v.slices.empty()) fail(ErrorCode::InvalidVolume, "volume has no slices");
  const Size2 size = v.slice_size();
  for (std::size_t i = 0; i < v.slices.size(); ++i) {
    const Slice& s = v.slices[i];
    if (s.size() != size) fail(ErrorCode::InvalidVolume, "slice sizes differ within volume");
    if (s.index != static_cast<int>(i) + 1) {
      fail(ErrorCode::InvalidVolume, "slice indices must be 1..n without gaps");
    }
    validate(s);
  }
}

// ---------------------------------------------------------------------------
// Exact geometric transforms used by support augmentation.

/// Counter-clockwise quarter turn: out(x, y) = in(n-1-y, x) for an n x n grid.
/// Works on rectangular grids too (result is height x width).
template <class T>
Grid<T> rotate90(const Grid<T>& in) {
  const int w = in.width();
  const int h = in.height();
  Grid<T> out(h, w);
  for (int y = 0; y < w; ++y) {
    for (int x = 0; x < h; ++x) {
      out(x, y) = in(w - 1 - y, x);
    }
  }
  return out;
}

template <class T>
Grid<T> rotate(const Grid<T>& in, int quarter_turns) {
  Grid<T> out = in;
  for (int i = 0; i < ((quarter_turns % 4) + 4) % 4; ++i) out = rotate90(out);
  return out;
}

/// Offset of the original content inside its square-padded version.
inline std::pair<int, int> square_pad_offset(Size2 s) noexcept {
  const int side = std::max(s.width, s.height);
  return {(side - s.width) / 2, (side - s.height) / 2};
}

/// Zero-pads to a square, content centered (extra row/column goes after).
template <class T>
Grid<T> pad_to_square(const Grid<T>& in) {
  if (in.size().is_square()) return in;
  const int side = std::max(in.width(), in.height());
  const auto [ox, oy] = square_pad_offset(in.size());
  Grid<T> out(side, side, T{});
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) out(x + ox, y + oy) = in(x, y);
  }
  return out;
}

/// Inverse of pad_to_square for an original of size `original`.
template <class T>
Grid<T> crop_from_square(const Grid<T>& in, Size2 original) {
  if (in.size() == original) return in;
  const auto [ox, oy] = square_pad_offset(original);
  Grid<T> out(original.width, original.height);
  for (int y = 0; y < original.height; ++y) {
    for (int x = 0; x < original.width; ++x) out(x, y) = in(x + ox, y + oy);
  }
  return out;
}

}  // namespace ics
