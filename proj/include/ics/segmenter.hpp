#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <type_traits>

#include "ics/error.hpp"
#include "ics/image.hpp"
#include "ics/support_set.hpp"

namespace ics {

/// Few-shot segmenter: maps a query slice plus labeled support pairs to a
/// foreground probability per pixel. Output dimensions equal the query's as
/// presented. One call at a time per instance.
class SegmenterBackend {
 public:
  virtual ~SegmenterBackend() = default;

  virtual std::string id() const = 0;
  /// Fixed input size the backend expects, or nullopt for native size.
  virtual std::optional<Size2> required_size() const { return std::nullopt; }
  /// Largest support list accepted per call; 0 means unlimited.
  virtual std::size_t max_support() const { return 0; }

  virtual ProbMask segment(const Slice& query, std::span<const SupportEntry> support) = 0;
};

using BackendFactory = std::function<std::unique_ptr<SegmenterBackend>()>;

/// Min-max rescale to [0,1]; a constant slice maps to all zeros.
inline Slice normalize_slice(const Slice& slice) {
  Slice out = slice;
  const auto values = slice.pixels.values();
  if (values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double range = static_cast<double>(*hi_it) - lo;
  auto dst = out.pixels.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    dst[i] = range > 0.0 ? static_cast<float>((values[i] - lo) / range) : 0.0f;
  }
  return out;
}

enum class Interpolation { Bilinear, Nearest };

/// Resizes with the align-corners-false convention: source coordinate
/// (dst + 0.5) * scale - 0.5, clamped to the source bounds. Mask results are
/// re-thresholded at 0.5.
template <class T>
Grid<T> resample(const Grid<T>& in, Size2 target, Interpolation mode) {
  if (target.width < 1 || target.height < 1) fail(ErrorCode::InvalidValue, "resample target must be >= 1x1");
  if (in.size() == target) return in;

  const double sx = static_cast<double>(in.width()) / target.width;
  const double sy = static_cast<double>(in.height()) / target.height;
  const auto source = [](int dst, double scale, int extent) {
    return std::clamp((dst + 0.5) * scale - 0.5, 0.0, static_cast<double>(extent - 1));
  };

  Grid<T> out(target.width, target.height);
  for (int y = 0; y < target.height; ++y) {
    const double fy = source(y, sy, in.height());
    for (int x = 0; x < target.width; ++x) {
      const double fx = source(x, sx, in.width());
      double v = 0.0;
      if (mode == Interpolation::Nearest) {
        v = static_cast<double>(in(static_cast<int>(std::floor(fx + 0.5)), static_cast<int>(std::floor(fy + 0.5))));
      } else {
        const int x0 = static_cast<int>(std::floor(fx));
        const int y0 = static_cast<int>(std::floor(fy));
        const int x1 = std::min(x0 + 1, in.width() - 1);
        const int y1 = std::min(y0 + 1, in.height() - 1);
        const double ax = fx - x0;
        const double ay = fy - y0;
        const double top = (1.0 - ax) * in(x0, y0) + ax * in(x1, y0);
        const double bottom = (1.0 - ax) * in(x0, y1) + ax * in(x1, y1);
        v = (1.0 - ay) * top + ay * bottom;
      }
      if constexpr (std::is_same_v<T, std::uint8_t>) {
        out(x, y) = v >= 0.5 ? 1 : 0;
      } else {
        out(x, y) = static_cast<T>(v);
      }
    }
  }
  return out;
}

inline Slice resample(const Slice& in, Size2 target, Interpolation mode = Interpolation::Bilinear) {
  return Slice{resample(in.pixels, target, mode), in.index};
}

/// value >= t becomes foreground.
inline Mask threshold(const ProbMask& prob, double t) {
  if (!(t > 0.0 && t < 1.0)) fail(ErrorCode::InvalidValue, "threshold must lie in (0,1)");
  Mask out(prob.width(), prob.height());
  auto src = prob.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] >= t ? 1 : 0;
  return out;
}

}  // namespace ics
