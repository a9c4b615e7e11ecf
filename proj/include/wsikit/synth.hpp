#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wsikit/annotation_index.hpp"
#include "wsikit/core.hpp"
#include "wsikit/pyramid.hpp"
#include "wsikit/raster.hpp"
#include "wsikit/slide_io.hpp"

namespace wsikit {

// ---------------------------------------------------------------------------
// Synthetic slides. Two generators share the output shape: a painted pyramid,
// the annotation polygons that exactly bound the painted regions, and a fully
// labeled quadtree (labels assigned by the same area rule the analysis uses).
// ---------------------------------------------------------------------------

struct SynthSlide {
  SlideImage slide;
  AnnotationSet annotations;
  // Full-depth pyramid (depth = slide.level_count) with every quad labeled.
  TPyramid labeled;
};

// 2x2 box filter with round-half-up; odd edges average the pixels that
// exist. Integer arithmetic keeps repeated downsampling bit-reproducible.
inline Raster downsample_box(const Raster& src) {
  int w = (src.width + 1) / 2;
  int h = (src.height + 1) / 2;
  Raster out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int sum[3] = {0, 0, 0};
      int cnt = 0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          int sx = 2 * x + dx, sy = 2 * y + dy;
          if (sx >= src.width || sy >= src.height) continue;
          const std::uint8_t* p = src.pixel(sx, sy);
          sum[0] += p[0];
          sum[1] += p[1];
          sum[2] += p[2];
          ++cnt;
        }
      out.set_pixel(x, y,
                    static_cast<std::uint8_t>((sum[0] + cnt / 2) / cnt),
                    static_cast<std::uint8_t>((sum[1] + cnt / 2) / cnt),
                    static_cast<std::uint8_t>((sum[2] + cnt / 2) / cnt));
    }
  return out;
}

inline SlideImage pyramid_from_level0(Raster level0, int levels, int tile) {
  SlideImage slide;
  slide.level0_width = level0.width;
  slide.level0_height = level0.height;
  slide.level_count = levels;
  slide.tile = tile;
  slide.levels.reserve(levels);
  slide.levels.push_back(std::move(level0));
  for (int l = 1; l < levels; ++l)
    slide.levels.push_back(downsample_box(slide.levels.back()));
  slide.validate();
  return slide;
}

inline bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

// ---------------------------------------------------------------------------
// Contrast-ladder slide: the controlled-discriminability task.
//
// The three tumor classes share one base color and render as a two-valued
// stripe pattern whose contrast halves at every coarser level. Each class has
// a transition level t: at levels <= t the texture shows the two values
// base +- (amplitude >> level) in an exact 50/50 split, at levels > t it
// collapses to the solid base color. Because the split and the amplitudes
// are identical across classes, a histogram classifier at one level can only
// tell "striped" from "solid"; which classes those appearances map to
// changes per level, so no single level separates all three. Combining
// levels does.
//
// The pattern is built so that the 2x2 box filter reproduces it exactly one
// level up: a checkerboard at level t (averages to base), and below t each
// parent cell expands into three children of its own sign plus one opposite
// child in the corner (average = parent, exactly, for even amplitudes).
// ---------------------------------------------------------------------------

struct LadderSpec {
  int width = 4096;
  int height = 4096;
  int levels = 6;
  int tile = 128;
  std::array<std::uint8_t, 3> base_color{170, 150, 160};
  int amplitude = 64;  // stripe contrast at level 0; halves per level
  // Coarsest striped level per class, order Benign, InSitu, Invasive.
  std::array<int, 3> transitions{2, 3, 4};
  std::array<std::uint8_t, 3> normal_color{235, 205, 215};

  void validate() const {
    if (width != height || !is_power_of_two(width))
      fail(ErrorKind::InvalidSpec, "ladder slides are square powers of two");
    if (levels < 2 || (width >> (levels - 1)) != tile)
      fail(ErrorKind::InvalidSpec,
           "coarsest level must be exactly one tile (" + std::to_string(tile) +
               ")");
    if (!is_power_of_two(tile) || tile < 8)
      fail(ErrorKind::InvalidSpec, "tile must be a power of two >= 8");
    int max_t = *std::max_element(transitions.begin(), transitions.end());
    int min_t = *std::min_element(transitions.begin(), transitions.end());
    if (min_t < 0 || max_t >= levels)
      fail(ErrorKind::InvalidSpec, "transition level outside the pyramid");
    if (!is_power_of_two(amplitude) || (amplitude >> max_t) < 1)
      fail(ErrorKind::InvalidSpec,
           "amplitude must be a power of two with at least 1 left at the "
           "deepest transition");
    for (int c = 0; c < 3; ++c) {
      int v = base_color[c];
      if (v - amplitude < 0 || v + amplitude > 255)
        fail(ErrorKind::InvalidSpec, "base color +- amplitude leaves [0,255]");
    }
  }
};

// Stripe sign at (x, y) of the level-`level` raster for a class whose
// checkerboard lives at `transition`. Walking up one level halves the
// coordinates; the corner child of every cell carries the opposite sign.
inline int ladder_sign(int x, int y, int level, int transition) {
  int sign = 1;
  for (int k = level; k < transition; ++k) {
    if ((x & 1) && (y & 1)) sign = -sign;
    x >>= 1;
    y >>= 1;
  }
  if (((x + y) & 1) != 0) sign = -sign;
  return sign;
}

// Closed-form texture pixel at any level; the painted pyramid matches this
// exactly because the construction commutes with the box filter.
inline std::array<std::uint8_t, 3> ladder_texture(const LadderSpec& spec,
                                                  int transition, int level,
                                                  int x, int y) {
  std::array<std::uint8_t, 3> px = spec.base_color;
  if (level > transition) return px;
  int delta = (spec.amplitude >> level) * ladder_sign(x, y, level, transition);
  for (int c = 0; c < 3; ++c)
    px[c] = static_cast<std::uint8_t>(px[c] + delta);
  return px;
}

// Quadrant layout: Benign top-left, InSitu top-right, Invasive bottom-left,
// healthy tissue bottom-right.
inline std::array<std::uint8_t, 3> ladder_pixel(const LadderSpec& spec,
                                                int level, int x, int y) {
  int half_w = (spec.width >> level) / 2;
  int half_h = (spec.height >> level) / 2;
  bool right = x >= half_w;
  bool bottom = y >= half_h;
  if (right && bottom) return spec.normal_color;
  int cls = right ? 1 : (bottom ? 2 : 0);
  return ladder_texture(spec, spec.transitions[cls], level, x, y);
}

inline Polygon rect_outline(double x0, double y0, double x1, double y1) {
  return Polygon{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

// Assigns every quad of `pyr` the majority label of its window.
inline void label_pyramid(const RegionIndex& index, TPyramid& pyr,
                          double threshold = 0.5) {
  for (Quad& q : pyr.nodes) {
    RectD r = pyr.rect_of(q);
    Rect window{r.x, r.y, r.x + r.w, r.y + r.h};
    q.label = label_from_fractions(index.query_fractions(window), threshold);
  }
}

inline SynthSlide make_ladder_slide(const LadderSpec& spec) {
  spec.validate();
  Raster level0(spec.width, spec.height);
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      auto px = ladder_pixel(spec, 0, x, y);
      level0.set_pixel(x, y, px[0], px[1], px[2]);
    }

  SynthSlide out;
  out.slide = pyramid_from_level0(std::move(level0), spec.levels, spec.tile);

  double hw = spec.width / 2.0, hh = spec.height / 2.0;
  out.annotations.slide_width = spec.width;
  out.annotations.slide_height = spec.height;
  out.annotations.regions = {
      {TumorClass::Benign, rect_outline(0, 0, hw, hh)},
      {TumorClass::InSitu, rect_outline(hw, 0, spec.width, hh)},
      {TumorClass::Invasive, rect_outline(0, hh, hw, spec.height)},
  };

  out.labeled = build_tpyramid(out.slide, spec.levels);
  RegionIndex index(out.annotations);
  label_pyramid(index, out.labeled);
  return out;
}

// ---------------------------------------------------------------------------
// Block slide: solid-color regions on healthy tissue. The workhorse for
// round-trip, labeling, batching, and expert tests; regions can be supplied
// explicitly (exact geometry) or generated from a seed.
// ---------------------------------------------------------------------------

enum class RegionShape { Aligned, Rotated, Convex, Mixed };

struct BlockSpec {
  int width = 1024;
  int height = 1024;
  int levels = 5;
  int tile = 64;
  int region_count = 6;
  double min_size = 0.08;  // region extent as a fraction of slide width
  double max_size = 0.22;
  int align = 0;  // snap generated rectangle corners to this grid
  RegionShape shapes = RegionShape::Aligned;
  bool disjoint = true;  // reject overlapping generated regions
  int white_border = 0;  // bare-glass frame width in level-0 pixels
  int noise = 0;         // per-pixel seeded jitter amplitude
  std::array<std::array<std::uint8_t, 3>, 3> class_colors{{
      {150, 110, 170},  // Benign
      {90, 150, 200},   // InSitu
      {200, 90, 90},    // Invasive
  }};
  std::array<std::uint8_t, 3> tissue_color{235, 205, 215};
  std::uint64_t seed = 1;

  void validate() const {
    if (width != height)
      fail(ErrorKind::InvalidSpec, "block slides are square");
    if (levels < 1 || (width >> (levels - 1)) != tile ||
        (tile << (levels - 1)) != width)
      fail(ErrorKind::InvalidSpec,
           "coarsest level must be exactly one tile (" + std::to_string(tile) +
               ")");
    if (region_count < 0 || min_size <= 0 || max_size > 0.5 ||
        min_size > max_size)
      fail(ErrorKind::InvalidSpec, "bad region layout parameters");
    if (white_border < 0 || 2 * white_border >= width)
      fail(ErrorKind::InvalidSpec, "white border swallows the slide");
  }
};

namespace detail {

inline void paint_polygon(Raster& img, const Polygon& poly,
                          const std::array<std::uint8_t, 3>& color) {
  Rect b = polygon_bounds(poly);
  int x0 = std::max(0, static_cast<int>(std::floor(b.min_x)));
  int y0 = std::max(0, static_cast<int>(std::floor(b.min_y)));
  int x1 = std::min(img.width, static_cast<int>(std::ceil(b.max_x)));
  int y1 = std::min(img.height, static_cast<int>(std::ceil(b.max_y)));
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      if (point_in_polygon(poly, x + 0.5, y + 0.5))
        img.set_pixel(x, y, color[0], color[1], color[2]);
}

inline bool bounds_overlap(const Rect& a, const Rect& b) {
  return a.intersects(b);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Random region generation (shared by the block generator and index tests).
// ---------------------------------------------------------------------------

struct RegionGenParams {
  int count = 8;
  double min_size = 0.05;
  double max_size = 0.30;
  int align = 0;
  RegionShape shapes = RegionShape::Aligned;
  bool disjoint = false;  // keep bounding boxes of all regions disjoint
};

namespace detail {

inline double snap(double v, int align) {
  if (align <= 0) return v;
  return std::floor(v / align + 0.5) * align;
}

inline Polygon random_region_outline(int width, int height,
                                     const RegionGenParams& p, RegionShape shape,
                                     Rng& rng) {
  double span = width;
  for (int attempt = 0; attempt < 64; ++attempt) {
    double sx = rng.next_double(p.min_size, p.max_size) * span;
    double sy = rng.next_double(p.min_size, p.max_size) * span;
    if (shape == RegionShape::Aligned) {
      double x0 = detail::snap(rng.next_double() * (width - sx), p.align);
      double y0 = detail::snap(rng.next_double() * (height - sy), p.align);
      double x1 = detail::snap(x0 + sx, p.align);
      double y1 = detail::snap(y0 + sy, p.align);
      if (x1 <= x0 || y1 <= y0 || x1 > width || y1 > height) continue;
      return rect_outline(x0, y0, x1, y1);
    }
    double cx = rng.next_double() * width;
    double cy = rng.next_double() * height;
    double angle = rng.next_double() * 6.283185307179586;
    Polygon poly;
    if (shape == RegionShape::Rotated) {
      double ca = std::cos(angle), sa = std::sin(angle);
      double hx = sx / 2, hy = sy / 2;
      constexpr double corners[4][2] = {
          {-1.0, -1.0}, {1.0, -1.0}, {1.0, 1.0}, {-1.0, 1.0}};
      for (const auto& c : corners)
        poly.push_back({cx + ca * c[0] * hx - sa * c[1] * hy,
                        cy + sa * c[0] * hx + ca * c[1] * hy});
    } else {
      // Convex: a k-gon inscribed in a rotated ellipse.
      int k = static_cast<int>(rng.next_int(3, 8));
      double ca = std::cos(angle), sa = std::sin(angle);
      for (int i = 0; i < k; ++i) {
        double phi = 6.283185307179586 * i / k;
        double ex = std::cos(phi) * sx / 2, ey = std::sin(phi) * sy / 2;
        poly.push_back({cx + ca * ex - sa * ey, cy + sa * ex + ca * ey});
      }
    }
    bool inside = true;
    for (const Vec2& v : poly)
      if (v.x < 0 || v.x > width || v.y < 0 || v.y > height) inside = false;
    if (inside) return poly;
  }
  // Fall back to a centered box that always fits.
  double s = p.min_size * span;
  return rect_outline(width / 2.0 - s / 2, height / 2.0 - s / 2,
                      width / 2.0 + s / 2, height / 2.0 + s / 2);
}

}  // namespace detail

inline AnnotationSet random_annotations(int width, int height,
                                        const RegionGenParams& params,
                                        Rng& rng) {
  AnnotationSet set;
  set.slide_width = width;
  set.slide_height = height;
  std::vector<Rect> taken;
  for (int i = 0; i < params.count; ++i) {
    RegionShape shape = params.shapes;
    if (shape == RegionShape::Mixed) {
      switch (i % 3) {
        case 0: shape = RegionShape::Aligned; break;
        case 1: shape = RegionShape::Rotated; break;
        default: shape = RegionShape::Convex; break;
      }
    }
    // First three regions cycle the classes so every class appears.
    TumorClass label =
        static_cast<TumorClass>(i < 3 ? i + 1 : 1 + rng.next_below(3));
    Polygon poly;
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      poly = detail::random_region_outline(width, height, params, shape, rng);
      if (!params.disjoint) {
        placed = true;
        break;
      }
      Rect b = polygon_bounds(poly);
      placed = true;
      for (const Rect& t : taken)
        if (detail::bounds_overlap(b, t)) {
          placed = false;
          break;
        }
    }
    if (!placed) continue;  // crowded slide: drop rather than overlap
    taken.push_back(polygon_bounds(poly));
    set.regions.push_back({label, std::move(poly)});
  }
  return set;
}

// Paints the given annotation onto a fresh slide and derives quad labels
// from it, so the pixels, the polygons, and the labels describe the same
// geometry by construction.
inline SynthSlide make_slide_from_regions(const BlockSpec& spec,
                                          AnnotationSet annotations) {
  spec.validate();
  Raster level0(spec.width, spec.height);
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      bool border = x < spec.white_border || y < spec.white_border ||
                    x >= spec.width - spec.white_border ||
                    y >= spec.height - spec.white_border;
      if (border)
        level0.set_pixel(x, y, 255, 255, 255);
      else
        level0.set_pixel(x, y, spec.tissue_color[0], spec.tissue_color[1],
                         spec.tissue_color[2]);
    }
  for (const AnnotationRegion& region : annotations.regions)
    detail::paint_polygon(
        level0, region.polygon,
        spec.class_colors[static_cast<int>(region.class_id) - 1]);

  if (spec.noise > 0) {
    int n = spec.noise;
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        std::uint64_t h = hash_coords(spec.seed, x, y);
        std::uint8_t* px = level0.pixel(x, y);
        for (int c = 0; c < 3; ++c) {
          int jitter = static_cast<int>((h >> (8 * c)) % (2 * n + 1)) - n;
          px[c] = static_cast<std::uint8_t>(
              std::clamp(px[c] + jitter, 0, 255));
        }
      }
  }

  SynthSlide out;
  out.slide = pyramid_from_level0(std::move(level0), spec.levels, spec.tile);
  out.annotations = std::move(annotations);
  out.annotations.slide_width = spec.width;
  out.annotations.slide_height = spec.height;
  out.labeled = build_tpyramid(out.slide, spec.levels);
  RegionIndex index(out.annotations);
  label_pyramid(index, out.labeled);
  return out;
}

inline SynthSlide make_block_slide(const BlockSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  RegionGenParams params;
  params.count = spec.region_count;
  params.min_size = spec.min_size;
  params.max_size = spec.max_size;
  params.align = spec.align;
  params.shapes = spec.shapes;
  params.disjoint = spec.disjoint;
  return make_slide_from_regions(
      spec, random_annotations(spec.width, spec.height, params, rng));
}

// Random full-range pixels; for geometry and round-trip tests on slides of
// arbitrary (non-power-of-two) sizes.
inline SlideImage make_noise_slide(int width, int height, int levels, int tile,
                                   std::uint64_t seed) {
  Raster level0(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      std::uint64_t h = hash_coords(seed, x, y);
      level0.set_pixel(x, y, static_cast<std::uint8_t>(h),
                       static_cast<std::uint8_t>(h >> 8),
                       static_cast<std::uint8_t>(h >> 16));
    }
  return pyramid_from_level0(std::move(level0), levels, tile);
}

}  // namespace wsikit
