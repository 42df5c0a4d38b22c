#pragma once

// Synthetic labeled volumes with analytically known ground truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "ics/error.hpp"
#include "ics/image.hpp"
#include "ics/volume_io.hpp"

namespace ics {

enum class PhantomShape { Disk, TubeWithBranch };

struct PhantomConfig {
  int n_slices = 40;
  int width = 64;
  int height = 64;
  PhantomShape shape = PhantomShape::Disk;
  double radius = 10.0;
  /// Shape center on slice 1, in pixel coordinates.
  double center_x = 32.0;
  double center_y = 32.0;
  double drift_x = 0.0;
  double drift_y = 0.0;
  double radius_growth = 0.0;
  double noise_std = 0.0;
  std::uint64_t rng_seed = 0;
  /// Slice k duplicates slice n+1-k (noise included) for k past the middle.
  bool mirrored = false;
  std::string id = "phantom";
  std::string region = "synthetic";
};

struct Circle {
  double cx = 0.0;
  double cy = 0.0;
  double r = 0.0;

  bool contains(int x, int y) const noexcept {
    const double dx = x - cx;
    const double dy = y - cy;
    return dx * dx + dy * dy <= r * r;
  }
};

/// Geometry of slice k (1-based): the main disk and, for the branching tube
/// from the middle slice on, a half-radius branch leaving along +y.
struct PhantomGeometry {
  Circle main;
  std::optional<Circle> branch;
};

inline PhantomGeometry phantom_geometry(const PhantomConfig& cfg, int k) {
  int step = k - 1;
  if (cfg.mirrored) step = std::min(k - 1, cfg.n_slices - k);
  PhantomGeometry g;
  g.main = {cfg.center_x + step * cfg.drift_x, cfg.center_y + step * cfg.drift_y,
            cfg.radius + step * cfg.radius_growth};
  if (cfg.shape == PhantomShape::TubeWithBranch) {
    const int branch_start = (cfg.n_slices + 1) / 2;
    const int along = cfg.mirrored ? std::min(k, cfg.n_slices + 1 - k) : k;
    if (along >= branch_start) {
      const double r = std::max(1.0, g.main.r / 2.0);
      g.branch = Circle{g.main.cx, g.main.cy + g.main.r + (along - branch_start), r};
    }
  }
  return g;
}

inline void validate(const PhantomConfig& cfg) {
  if (cfg.n_slices < 1 || cfg.width < 1 || cfg.height < 1) {
    fail(ErrorCode::InvalidValue, "phantom needs at least one slice of at least 1x1");
  }
  if (!(cfg.noise_std >= 0.0)) fail(ErrorCode::InvalidValue, "noise std must be >= 0");
  const auto inside = [&](const Circle& c) {
    return c.r >= 0.5 && c.cx >= 0.0 && c.cx <= cfg.width - 1 && c.cy >= 0.0 && c.cy <= cfg.height - 1;
  };
  for (int k = 1; k <= cfg.n_slices; ++k) {
    const PhantomGeometry g = phantom_geometry(cfg, k);
    if (!inside(g.main) || (g.branch && !inside(*g.branch))) {
      fail(ErrorCode::ShapeOutOfBounds, "shape center leaves the image or radius < 0.5 on slice " + std::to_string(k));
    }
  }
}

/// Foreground 1.0 on background 0.0 plus seeded Gaussian noise; the label is
/// the noiseless shape.
inline CaseBundle gen_phantom(const PhantomConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.rng_seed);
  std::normal_distribution<double> noise(0.0, cfg.noise_std > 0.0 ? cfg.noise_std : 1.0);

  CaseBundle bundle;
  bundle.region = cfg.region;
  bundle.image.id = cfg.id;
  const int generated = cfg.mirrored ? (cfg.n_slices + 1) / 2 : cfg.n_slices;
  for (int k = 1; k <= generated; ++k) {
    const PhantomGeometry g = phantom_geometry(cfg, k);
    Slice slice{Grid<float>(cfg.width, cfg.height), k};
    Mask label(cfg.width, cfg.height);
    for (int y = 0; y < cfg.height; ++y) {
      for (int x = 0; x < cfg.width; ++x) {
        const bool fg = g.main.contains(x, y) || (g.branch && g.branch->contains(x, y));
        label(x, y) = fg ? 1 : 0;
        double v = fg ? 1.0 : 0.0;
        if (cfg.noise_std > 0.0) v += noise(rng);
        slice.pixels(x, y) = static_cast<float>(v);
      }
    }
    bundle.image.slices.push_back(std::move(slice));
    bundle.labels.push_back(std::move(label));
  }
  for (int k = generated + 1; k <= cfg.n_slices; ++k) {
    const auto src = static_cast<std::size_t>(cfg.n_slices - k);
    Slice copy = bundle.image.slices[src];
    copy.index = k;
    bundle.image.slices.push_back(std::move(copy));
    bundle.labels.push_back(bundle.labels[src]);
  }
  bundle.original_index.resize(static_cast<std::size_t>(cfg.n_slices));
  for (int k = 1; k <= cfg.n_slices; ++k) bundle.original_index[static_cast<std::size_t>(k - 1)] = k;
  return bundle;
}

namespace phantom_presets {

/// 64x64x40 disk drifting 1 px per slice along x.
inline PhantomConfig drifting_disk(std::uint64_t seed = 1) {
  PhantomConfig c;
  c.n_slices = 40;
  c.width = 64;
  c.height = 64;
  c.radius = 10.0;
  c.center_x = 12.0;
  c.center_y = 32.0;
  c.drift_x = 1.0;
  c.noise_std = 0.05;
  c.rng_seed = seed;
  c.id = "drifting-disk";
  return c;
}

/// Identical noiseless slices.
inline PhantomConfig constant(std::uint64_t seed = 1) {
  PhantomConfig c;
  c.n_slices = 40;
  c.radius = 10.0;
  c.center_x = 32.0;
  c.center_y = 32.0;
  c.rng_seed = seed;
  c.id = "constant";
  return c;
}

/// 41 slices, slice k identical to slice 42-k; drifts toward the middle.
inline PhantomConfig mirrored(std::uint64_t seed = 1) {
  PhantomConfig c = drifting_disk(seed);
  c.n_slices = 41;
  c.mirrored = true;
  c.id = "mirrored";
  return c;
}

}  // namespace phantom_presets

inline std::optional<PhantomConfig> phantom_preset(const std::string& name, std::uint64_t seed) {
  if (name == "drifting-disk") return phantom_presets::drifting_disk(seed);
  if (name == "constant") return phantom_presets::constant(seed);
  if (name == "mirrored") return phantom_presets::mirrored(seed);
  return std::nullopt;
}

}  // namespace ics
