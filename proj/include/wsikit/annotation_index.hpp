#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "wsikit/core.hpp"
#include "wsikit/rtree.hpp"
#include "wsikit/slide_io.hpp"

namespace wsikit {

// Even-odd rule: count edge crossings of a rightward ray. Vertices exactly
// on an edge are resolved by the half-open y test, which keeps shared
// polygon borders from double counting.
inline bool point_in_polygon(const Polygon& poly, double x, double y) {
  bool inside = false;
  std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y > y) != (b.y > y)) {
      double cross_x = a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x);
      if (x < cross_x) inside = !inside;
    }
  }
  return inside;
}

inline Rect polygon_bounds(const Polygon& poly) {
  Rect b{poly[0].x, poly[0].y, poly[0].x, poly[0].y};
  for (const Vec2& v : poly) {
    b.min_x = std::min(b.min_x, v.x);
    b.min_y = std::min(b.min_y, v.y);
    b.max_x = std::max(b.max_x, v.x);
    b.max_y = std::max(b.max_y, v.y);
  }
  return b;
}

// Per-class area fractions of a query window. Indexed by TumorClass; entry 0
// is the normal (uncovered) remainder.
struct FractionReport {
  std::array<double, kTumorClassCount> fractions{};

  double operator[](TumorClass c) const {
    return fractions[static_cast<std::size_t>(c)];
  }
  double tumor_total() const { return 1.0 - fractions[0]; }
};

// ---------------------------------------------------------------------------
// Spatial index over an annotation set. The R-tree prunes by bounding box;
// exact containment is settled per sample point against the polygons.
// ---------------------------------------------------------------------------

class RegionIndex {
 public:
  static constexpr int kSampleGrid = 64;

  explicit RegionIndex(AnnotationSet annotations)
      : annotations_(std::move(annotations)) {
    annotations_.validate();
    for (std::size_t i = 0; i < annotations_.regions.size(); ++i)
      tree_.insert(polygon_bounds(annotations_.regions[i].polygon), i);
  }

  const AnnotationSet& annotations() const { return annotations_; }

  // Indices of regions whose bounding box touches `window`. A superset of
  // the regions that actually intersect it.
  std::vector<std::size_t> candidates(const Rect& window) const {
    return tree_.search(window);
  }

  // Estimates coverage from a kSampleGrid x kSampleGrid lattice of cell
  // centers. A sample inside any region of a class counts once for that
  // class regardless of overlaps; the normal fraction is the remainder not
  // covered by any region.
  FractionReport query_fractions(const Rect& window) const {
    FractionReport report;
    std::vector<std::size_t> hits = candidates(window);
    if (hits.empty()) {
      report.fractions[0] = 1.0;
      return report;
    }
    constexpr int s = kSampleGrid;
    double cell_w = (window.max_x - window.min_x) / s;
    double cell_h = (window.max_y - window.min_y) / s;
    std::array<std::int64_t, kTumorClassCount> counts{};
    std::int64_t covered = 0;
    for (int iy = 0; iy < s; ++iy) {
      double py = window.min_y + (iy + 0.5) * cell_h;
      for (int ix = 0; ix < s; ++ix) {
        double px = window.min_x + (ix + 0.5) * cell_w;
        std::array<bool, kTumorClassCount> in_class{};
        for (std::size_t ri : hits) {
          const AnnotationRegion& region = annotations_.regions[ri];
          auto ci = static_cast<std::size_t>(region.class_id);
          if (in_class[ci]) continue;
          if (point_in_polygon(region.polygon, px, py)) in_class[ci] = true;
        }
        bool any = false;
        for (int c = 1; c < kTumorClassCount; ++c) {
          if (!in_class[c]) continue;
          ++counts[c];
          any = true;
        }
        if (any) ++covered;
      }
    }
    constexpr double total = static_cast<double>(s) * s;
    for (int c = 1; c < kTumorClassCount; ++c)
      report.fractions[c] = counts[c] / total;
    report.fractions[0] = 1.0 - covered / total;
    return report;
  }

 private:
  AnnotationSet annotations_;
  RTree tree_;
};

// Majority label for a window: the dominant tumor class if it covers at
// least `threshold` of the window, otherwise Normal. Ties go to the more
// severe class.
inline TumorClass label_from_fractions(const FractionReport& report,
                                       double threshold = 0.5) {
  TumorClass best = TumorClass::Normal;
  double best_fraction = 0.0;
  for (TumorClass c : {TumorClass::Benign, TumorClass::InSitu,
                       TumorClass::Invasive}) {
    if (report[c] >= best_fraction && report[c] > 0.0) {
      best = c;
      best_fraction = report[c];
    }
  }
  if (best_fraction >= threshold) return best;
  return TumorClass::Normal;
}

}  // namespace wsikit
