#pragma once

// Reference few-shot backend: patch k-nearest-neighbour label transfer.
//
// Every query pixel is compared, by sum of squared differences over a p x p
// reflect-padded patch, with candidate patches centered within Chebyshev
// distance r in each support image. The k best candidates vote with weights
// exp(-ssd / (p^2 sigma^2)) for the label at their centers.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ics/error.hpp"
#include "ics/image.hpp"
#include "ics/segmenter.hpp"
#include "ics/support_set.hpp"

namespace ics {

struct RefSegParams {
  int patch_size = 5;
  int search_radius = 4;
  int k = 7;
  double bandwidth = 0.5;

  friend bool operator==(const RefSegParams&, const RefSegParams&) = default;
};

inline void validate(const RefSegParams& p) {
  if (p.patch_size < 3 || p.patch_size % 2 == 0) fail(ErrorCode::InvalidValue, "patch size must be odd and >= 3");
  if (p.search_radius < 0) fail(ErrorCode::InvalidValue, "search radius must be >= 0");
  if (p.k < 1) fail(ErrorCode::InvalidValue, "k must be >= 1");
  if (!(p.bandwidth > 0.0) || !std::isfinite(p.bandwidth)) fail(ErrorCode::InvalidValue, "bandwidth must be > 0");
}

namespace detail {

/// Mirror index without repeating the edge sample (d c b | a b c d | c b a).
inline int reflect_index(int i, int n) noexcept {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

class PaddedImage {
 public:
  PaddedImage(const Grid<float>& image, int pad)
      : pad_(pad), stride_(image.width() + 2 * pad), data_(static_cast<std::size_t>(stride_) * (image.height() + 2 * pad)) {
    const int rows = image.height() + 2 * pad;
    for (int py = 0; py < rows; ++py) {
      const int sy = reflect_index(py - pad, image.height());
      for (int px = 0; px < stride_; ++px) {
        data_[static_cast<std::size_t>(py) * stride_ + px] = image(reflect_index(px - pad, image.width()), sy);
      }
    }
  }

  /// Pointer to padded row `py` (padded coordinates).
  const double* row(int py) const noexcept { return data_.data() + static_cast<std::size_t>(py) * stride_; }

 private:
  int pad_;
  int stride_;
  std::vector<double> data_;
};

struct Candidate {
  double ssd;
  std::uint64_t seq;
  std::size_t position;
  int dy;
  int dx;
  std::uint8_t label;

  /// Total order: score, then entry seq, list position, dy, dx.
  bool before(const Candidate& o) const noexcept {
    if (ssd != o.ssd) return ssd < o.ssd;
    if (seq != o.seq) return seq < o.seq;
    if (position != o.position) return position < o.position;
    if (dy != o.dy) return dy < o.dy;
    return dx < o.dx;
  }
};

/// Keeps the k smallest candidates in ascending order.
class TopK {
 public:
  explicit TopK(int k) : k_(static_cast<std::size_t>(k)) { items_.reserve(k_ + 1); }

  void clear() noexcept { items_.clear(); }
  bool full() const noexcept { return items_.size() == k_; }
  double worst_ssd() const noexcept { return items_.back().ssd; }
  std::span<const Candidate> items() const noexcept { return items_; }

  void offer(const Candidate& c) {
    if (full() && !c.before(items_.back())) return;
    auto it = items_.end();
    while (it != items_.begin() && c.before(*(it - 1))) --it;
    items_.insert(it, c);
    if (items_.size() > k_) items_.pop_back();
  }

 private:
  std::size_t k_;
  std::vector<Candidate> items_;
};

}  // namespace detail

inline ProbMask ref_segment(const Slice& query, std::span<const SupportEntry> support, const RefSegParams& params) {
  validate(params);
  if (support.empty()) fail(ErrorCode::EmptySupport, "reference segmenter needs at least one support pair");
  const Size2 size = query.size();
  for (const auto& e : support) {
    if (e.image.size() != size || e.label.size() != size) {
      fail(ErrorCode::DimMismatch, "support entry " + to_string(e.image.size()) + " vs query " + to_string(size));
    }
  }

  const int p = params.patch_size;
  const int half = p / 2;
  const int r = params.search_radius;

  const detail::PaddedImage q(normalize_slice(query).pixels, half);
  std::vector<detail::PaddedImage> images;
  images.reserve(support.size());
  for (const auto& e : support) images.emplace_back(normalize_slice(e.image).pixels, half);

  const double scale = static_cast<double>(p) * p * params.bandwidth * params.bandwidth;
  ProbMask out(size.width, size.height);
  detail::TopK best(params.k);

  for (int y = 0; y < size.height; ++y) {
    for (int x = 0; x < size.width; ++x) {
      best.clear();
      for (std::size_t e = 0; e < support.size(); ++e) {
        const auto& img = images[e];
        const auto& entry = support[e];
        for (int dy = -r; dy <= r; ++dy) {
          const int cy = y + dy;
          if (cy < 0 || cy >= size.height) continue;
          for (int dx = -r; dx <= r; ++dx) {
            const int cx = x + dx;
            if (cx < 0 || cx >= size.width) continue;

            // Row-major accumulation; abandon once the partial sum can no
            // longer enter the top k (sums of non-negative terms only grow).
            double ssd = 0.0;
            bool abandoned = false;
            for (int j = 0; j < p; ++j) {
              const double* qa = q.row(y + j) + x;
              const double* sa = img.row(cy + j) + cx;
              for (int i = 0; i < p; ++i) {
                const double d = qa[i] - sa[i];
                ssd += d * d;
              }
              if (best.full() && ssd > best.worst_ssd()) {
                abandoned = true;
                break;
              }
            }
            if (abandoned) continue;
            best.offer({ssd, entry.seq, e, dy, dx, entry.label(cx, cy)});
          }
        }
      }

      // Weights are shifted by the best score; the ratio is unchanged and the
      // sum cannot underflow to zero.
      const auto items = best.items();
      const double base = items.front().ssd;
      double num = 0.0;
      double den = 0.0;
      for (const auto& c : items) {
        const double w = std::exp(-(c.ssd - base) / scale);
        num += w * c.label;
        den += w;
      }
      out(x, y) = std::clamp(num / den, 0.0, 1.0);
    }
  }
  return out;
}

/// SegmenterBackend wrapper around ref_segment.
class RefSegmenter final : public SegmenterBackend {
 public:
  explicit RefSegmenter(RefSegParams params = {}) : params_(params) { validate(params_); }

  std::string id() const override { return "ref"; }
  const RefSegParams& params() const noexcept { return params_; }

  ProbMask segment(const Slice& query, std::span<const SupportEntry> support) override {
    return ref_segment(query, support, params_);
  }

 private:
  RefSegParams params_;
};

}  // namespace ics
