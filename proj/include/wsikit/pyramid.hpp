#pragma once

#include <cstdint>
#include <cstring>
#include <optional>
#include <vector>

#include "wsikit/core.hpp"
#include "wsikit/slide_io.hpp"

namespace wsikit {

// ---------------------------------------------------------------------------
// T-pyramid: a complete quadtree over the slide. Depth-d nodes partition the
// slide into a 2^d x 2^d grid. A depth-d quad views pyramid level
// (level_count - 1 - d), so the root sees the coarsest raster and leaves see
// full resolution.
// ---------------------------------------------------------------------------

enum class QuadQuality { Unknown, Tissue, Background };

struct RectD {
  double x = 0, y = 0, w = 0, h = 0;
  bool operator==(const RectD&) const = default;
};

struct Quad {
  int depth = 0;
  int grid_x = 0;
  int grid_y = 0;
  QuadQuality quality = QuadQuality::Unknown;
  double tissue_fraction = -1.0;
  std::optional<TumorClass> label;
  // Per-level class distributions recorded by the analysis pipeline,
  // ordered coarsest -> finest.
  std::optional<std::vector<std::vector<double>>> predictions;
};

// Level-0 pixel rectangle of a quad. Divisions by 2^d are exact in binary
// floating point, so sibling rects tile the parent bit-exactly.
inline RectD quad_rect(int slide_w, int slide_h, int depth, int gx, int gy) {
  double scale = static_cast<double>(1LL << depth);
  return RectD{gx * static_cast<double>(slide_w) / scale,
               gy * static_cast<double>(slide_h) / scale,
               static_cast<double>(slide_w) / scale,
               static_cast<double>(slide_h) / scale};
}

struct TPyramid {
  int depth = 0;  // number of quadtree levels, 1..slide.level_count
  int slide_width = 0;
  int slide_height = 0;
  std::vector<Quad> nodes;  // level-major: depth 0 first

  static std::size_t level_offset(int d) {
    // (4^d - 1) / 3
    return ((1ULL << (2 * d)) - 1) / 3;
  }
  static std::size_t level_count_at(int d) { return 1ULL << (2 * d); }

  std::size_t index_of(int d, int gx, int gy) const {
    return level_offset(d) + (static_cast<std::size_t>(gy) << d) + gx;
  }
  Quad& at(int d, int gx, int gy) { return nodes[index_of(d, gx, gy)]; }
  const Quad& at(int d, int gx, int gy) const {
    return nodes[index_of(d, gx, gy)];
  }

  RectD rect_of(const Quad& q) const {
    return quad_rect(slide_width, slide_height, q.depth, q.grid_x, q.grid_y);
  }

  int leaf_grid() const { return 1 << (depth - 1); }
};

inline TPyramid build_tpyramid(const SlideImage& slide, int depth) {
  if (depth < 1 || depth > slide.level_count)
    fail(ErrorKind::DepthExceedsLevels,
         "depth " + std::to_string(depth) + " on a " +
             std::to_string(slide.level_count) + "-level slide");
  TPyramid pyr;
  pyr.depth = depth;
  pyr.slide_width = slide.level0_width;
  pyr.slide_height = slide.level0_height;
  pyr.nodes.reserve(TPyramid::level_offset(depth));
  for (int d = 0; d < depth; ++d) {
    int n = 1 << d;
    for (int gy = 0; gy < n; ++gy)
      for (int gx = 0; gx < n; ++gx) {
        Quad q;
        q.depth = d;
        q.grid_x = gx;
        q.grid_y = gy;
        pyr.nodes.push_back(q);
      }
  }
  return pyr;
}

// ---------------------------------------------------------------------------
// Patch extraction
// ---------------------------------------------------------------------------

struct Patch {
  Raster pixels;       // tile x tile
  int source_depth = 0;
  int source_gx = 0;
  int source_gy = 0;
  int source_level = 0;  // pyramid level the pixels were read from
};

// Patches of one leaf's ancestor chain, ordered coarsest (root) -> finest.
using PatchStack = std::vector<Patch>;

// Reads the quad's window from pyramid level (level_count - 1 - depth). When
// the mapped region is not tile x tile it is resampled by nearest neighbor
// with the integer floor mapping src = begin + i * rw / tile, which reduces
// to a straight copy in the aligned case.
inline Patch extract_patch(const SlideImage& slide, const Quad& quad) {
  if (quad.depth < 0 || quad.depth >= slide.level_count)
    fail(ErrorKind::OutOfBounds, "quad depth " + std::to_string(quad.depth));
  int n = 1 << quad.depth;
  if (quad.grid_x < 0 || quad.grid_x >= n || quad.grid_y < 0 || quad.grid_y >= n)
    fail(ErrorKind::OutOfBounds, "quad grid position outside the slide");
  int level = slide.level_count - 1 - quad.depth;
  const Raster& src = slide.levels[level];
  int tile = slide.tile;

  auto span_begin = [&](std::int64_t g, std::int64_t dim) {
    return static_cast<int>((g * dim) >> quad.depth);
  };
  int sx0 = span_begin(quad.grid_x, src.width);
  int sx1 = span_begin(quad.grid_x + 1, src.width);
  int sy0 = span_begin(quad.grid_y, src.height);
  int sy1 = span_begin(quad.grid_y + 1, src.height);
  int rw = sx1 - sx0, rh = sy1 - sy0;
  if (rw <= 0 || rh <= 0)
    fail(ErrorKind::OutOfBounds, "quad maps to an empty region");

  Patch patch;
  patch.pixels = Raster(tile, tile);
  patch.source_depth = quad.depth;
  patch.source_gx = quad.grid_x;
  patch.source_gy = quad.grid_y;
  patch.source_level = level;

  if (rw == tile && rh == tile) {
    for (int y = 0; y < tile; ++y)
      std::memcpy(patch.pixels.pixel(0, y), src.pixel(sx0, sy0 + y),
                  static_cast<std::size_t>(tile) * 3);
  } else {
    for (int y = 0; y < tile; ++y) {
      int sy = sy0 + static_cast<int>((static_cast<std::int64_t>(y) * rh) / tile);
      for (int x = 0; x < tile; ++x) {
        int sx = sx0 + static_cast<int>((static_cast<std::int64_t>(x) * rw) / tile);
        const std::uint8_t* p = src.pixel(sx, sy);
        patch.pixels.set_pixel(x, y, p[0], p[1], p[2]);
      }
    }
  }
  return patch;
}

inline PatchStack context_stack(const SlideImage& slide, const TPyramid& pyr,
                                const Quad& leaf) {
  if (leaf.depth != pyr.depth - 1)
    fail(ErrorKind::NotALeaf,
         "context stacks are built from depth-" + std::to_string(pyr.depth - 1) +
             " leaves");
  PatchStack stack;
  stack.reserve(pyr.depth);
  for (int d = 0; d < pyr.depth; ++d) {
    int shift = leaf.depth - d;
    Quad ancestor;
    ancestor.depth = d;
    ancestor.grid_x = leaf.grid_x >> shift;
    ancestor.grid_y = leaf.grid_y >> shift;
    stack.push_back(extract_patch(slide, ancestor));
  }
  return stack;
}

// ---------------------------------------------------------------------------
// Window quality
// ---------------------------------------------------------------------------

struct QualityThresholds {
  int brightness = 220;      // background iff min(R,G,B) > brightness
  double min_tissue = 0.10;  // Tissue iff tissue_fraction >= min_tissue
};

struct QualityResult {
  QuadQuality quality = QuadQuality::Unknown;
  double tissue_fraction = 0.0;
};

// H&E background is near-white; a pixel counts as background when its
// darkest channel still exceeds the brightness threshold.
inline QualityResult assess_quality(const Patch& patch,
                                    const QualityThresholds& thresholds = {}) {
  const Raster& img = patch.pixels;
  std::size_t total = static_cast<std::size_t>(img.width) * img.height;
  std::size_t background = 0;
  const std::uint8_t* p = img.data.data();
  for (std::size_t i = 0; i < total; ++i, p += 3) {
    std::uint8_t lo = std::min(p[0], std::min(p[1], p[2]));
    if (lo > thresholds.brightness) ++background;
  }
  QualityResult r;
  r.tissue_fraction =
      1.0 - static_cast<double>(background) / static_cast<double>(total);
  r.quality = r.tissue_fraction >= thresholds.min_tissue
                  ? QuadQuality::Tissue
                  : QuadQuality::Background;
  return r;
}

// Runs quality assessment for every quad in the pyramid.
inline void assess_pyramid(const SlideImage& slide, TPyramid& pyr,
                           const QualityThresholds& thresholds = {}) {
  for (Quad& q : pyr.nodes) {
    QualityResult r = assess_quality(extract_patch(slide, q), thresholds);
    q.quality = r.quality;
    q.tissue_fraction = r.tissue_fraction;
  }
}

}  // namespace wsikit
