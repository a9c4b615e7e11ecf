#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wsikit/core.hpp"
#include "wsikit/raster.hpp"

namespace wsikit {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// Multi-level raster pyramid standing in for a vendor WSI container.
// levels[0] is full resolution; level l+1 has ceil-halved dimensions.
struct SlideImage {
  int level_count = 0;
  std::vector<Raster> levels;
  int level0_width = 0;
  int level0_height = 0;
  int tile = 256;  // patch edge recorded alongside the pyramid

  void validate() const {
    if (level_count < 1 || static_cast<int>(levels.size()) != level_count)
      fail(ErrorKind::DimensionMismatch, "level_count does not match levels");
    if (levels[0].width != level0_width || levels[0].height != level0_height)
      fail(ErrorKind::DimensionMismatch, "level 0 dims do not match meta");
    int w = level0_width, h = level0_height;
    for (int l = 0; l < level_count; ++l) {
      if (levels[l].width != w || levels[l].height != h)
        fail(ErrorKind::DimensionMismatch,
             "level " + std::to_string(l) + " is " +
                 std::to_string(levels[l].width) + "x" +
                 std::to_string(levels[l].height) + ", expected " +
                 std::to_string(w) + "x" + std::to_string(h));
      w = (w + 1) / 2;
      h = (h + 1) / 2;
    }
  }
};

struct Vec2 {
  double x = 0;
  double y = 0;
  bool operator==(const Vec2&) const = default;
};

using Polygon = std::vector<Vec2>;

// Shoelace area; sign depends on winding.
inline double polygon_area(const Polygon& poly) {
  double a = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return a / 2;
}

struct AnnotationRegion {
  TumorClass class_id = TumorClass::Benign;
  Polygon polygon;  // level-0 pixel coordinates, fractional vertices allowed
};

struct AnnotationSet {
  int slide_width = 0;
  int slide_height = 0;
  std::vector<AnnotationRegion> regions;

  void validate() const {
    for (const AnnotationRegion& r : regions) {
      if (r.class_id != TumorClass::Benign && r.class_id != TumorClass::InSitu &&
          r.class_id != TumorClass::Invasive)
        fail(ErrorKind::UnknownClass, "annotation region with non-tumor class");
      if (r.polygon.size() < 3 || polygon_area(r.polygon) == 0.0)
        fail(ErrorKind::DegeneratePolygon,
             "region with " + std::to_string(r.polygon.size()) + " vertices");
      for (const Vec2& v : r.polygon) {
        if (v.x < 0 || v.x > slide_width || v.y < 0 || v.y > slide_height)
          fail(ErrorKind::ParseError, "vertex outside slide bounds");
      }
    }
  }
};

// Per-quad class-confidence grid rendered to raster output. Cell vectors are
// ordered (Benign, InSitu, Invasive); binary maps use only the first entry.
struct AnalysisMap {
  int grid_width = 0;
  int grid_height = 0;
  std::vector<std::vector<double>> cells;  // grid_width * grid_height entries

  std::vector<double>& cell(int x, int y) {
    return cells[static_cast<std::size_t>(y) * grid_width + x];
  }
  const std::vector<double>& cell(int x, int y) const {
    return cells[static_cast<std::size_t>(y) * grid_width + x];
  }
};

enum class MapMode { Binary, MultiClass };

// ---------------------------------------------------------------------------
// Number formatting: %.17g round-trips IEEE doubles exactly.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::ParseError, "bad number '" + s + "'");
  }
}

inline long parse_long(const std::string& s) {
  try {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::ParseError, "bad integer '" + s + "'");
  }
}

// ---------------------------------------------------------------------------
// Line-oriented `key value` files (synth specs, pipeline configs). '#' starts
// a comment; the value is everything after the first whitespace run.
// ---------------------------------------------------------------------------

struct KeyValues {
  std::vector<std::pair<std::string, std::string>> entries;

  const std::string* find(const std::string& key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return &v;
    return nullptr;
  }
  std::string get(const std::string& key, const std::string& fallback) const {
    const std::string* v = find(key);
    return v ? *v : fallback;
  }
  std::string require(const std::string& key) const {
    const std::string* v = find(key);
    if (!v) fail(ErrorKind::ParseError, "missing key '" + key + "'");
    return *v;
  }
  long get_long(const std::string& key, long fallback) const {
    const std::string* v = find(key);
    return v ? parse_long(*v) : fallback;
  }
  double get_double(const std::string& key, double fallback) const {
    const std::string* v = find(key);
    return v ? parse_double(*v) : fallback;
  }
};

inline KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoFailure, "cannot read " + path.string());
  KeyValues kv;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    std::size_t split = line.find_first_of(" \t", start);
    if (split == std::string::npos) {
      kv.entries.emplace_back(line.substr(start), "");
      continue;
    }
    std::size_t vstart = line.find_first_not_of(" \t", split);
    std::size_t vend = line.find_last_not_of(" \t");
    kv.entries.emplace_back(
        line.substr(start, split - start),
        vstart == std::string::npos ? ""
                                    : line.substr(vstart, vend - vstart + 1));
  }
  return kv;
}

// ---------------------------------------------------------------------------
// Slide directory format: meta.txt + level_0.ppm .. level_{L-1}.ppm
// ---------------------------------------------------------------------------

inline void write_slide(const SlideImage& slide,
                        const std::filesystem::path& dir) {
  slide.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream meta(dir / "meta.txt");
  if (!meta) fail(ErrorKind::IoFailure, "cannot open " + (dir / "meta.txt").string());
  meta << "width " << slide.level0_width << "\n";
  meta << "height " << slide.level0_height << "\n";
  meta << "levels " << slide.level_count << "\n";
  meta << "tile " << slide.tile << "\n";
  if (!meta) fail(ErrorKind::IoFailure, "write failed " + (dir / "meta.txt").string());
  meta.close();
  for (int l = 0; l < slide.level_count; ++l)
    write_ppm(slide.levels[l], dir / ("level_" + std::to_string(l) + ".ppm"));
}

inline SlideImage read_slide(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "meta.txt");
  if (!meta) fail(ErrorKind::IoFailure, "cannot open " + (dir / "meta.txt").string());
  SlideImage slide;
  slide.tile = 256;
  std::string key;
  long value;
  bool have_w = false, have_h = false, have_l = false;
  std::string line;
  while (std::getline(meta, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (!(ls >> key >> value))
      fail(ErrorKind::ParseError, "bad meta line '" + line + "'");
    if (key == "width") { slide.level0_width = static_cast<int>(value); have_w = true; }
    else if (key == "height") { slide.level0_height = static_cast<int>(value); have_h = true; }
    else if (key == "levels") { slide.level_count = static_cast<int>(value); have_l = true; }
    else if (key == "tile") { slide.tile = static_cast<int>(value); }
    else fail(ErrorKind::ParseError, "unknown meta key '" + key + "'");
  }
  if (!have_w || !have_h || !have_l)
    fail(ErrorKind::ParseError, "meta.txt missing width/height/levels");
  if (slide.level_count < 1)
    fail(ErrorKind::ParseError, "levels must be >= 1");
  for (int l = 0; l < slide.level_count; ++l) {
    std::filesystem::path p = dir / ("level_" + std::to_string(l) + ".ppm");
    if (!std::filesystem::exists(p))
      fail(ErrorKind::MissingLevel, p.string());
    slide.levels.push_back(read_ppm(p));
  }
  slide.validate();
  return slide;
}

// ---------------------------------------------------------------------------
// Annotation format:
//   slide <width> <height>
//   region <class> x1,y1 x2,y2 ...        (>= 3 vertex pairs)
// ---------------------------------------------------------------------------

inline AnnotationSet read_annotation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoFailure, "cannot open " + path.string());
  AnnotationSet set;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "slide") {
      if (!(ls >> set.slide_width >> set.slide_height))
        fail(ErrorKind::ParseError, "bad slide line '" + line + "'");
      have_header = true;
    } else if (tag == "region") {
      if (!have_header)
        fail(ErrorKind::ParseError, "region before slide header");
      AnnotationRegion region;
      std::string cls;
      if (!(ls >> cls)) fail(ErrorKind::ParseError, "region missing class");
      region.class_id = class_from_token(cls);
      if (region.class_id == TumorClass::Normal)
        fail(ErrorKind::UnknownClass, "normal is not an annotation class");
      std::string pair;
      while (ls >> pair) {
        std::size_t comma = pair.find(',');
        if (comma == std::string::npos)
          fail(ErrorKind::ParseError, "bad vertex '" + pair + "'");
        Vec2 v;
        v.x = parse_double(pair.substr(0, comma));
        v.y = parse_double(pair.substr(comma + 1));
        if (v.x < 0 || v.x > set.slide_width || v.y < 0 || v.y > set.slide_height)
          fail(ErrorKind::ParseError, "vertex outside slide bounds: " + pair);
        region.polygon.push_back(v);
      }
      if (region.polygon.size() < 3 || polygon_area(region.polygon) == 0.0)
        fail(ErrorKind::DegeneratePolygon, "region '" + line + "'");
      set.regions.push_back(std::move(region));
    } else {
      fail(ErrorKind::ParseError, "unknown line '" + line + "'");
    }
  }
  if (!have_header) fail(ErrorKind::ParseError, "missing slide header");
  return set;
}

inline void write_annotation(const AnnotationSet& set,
                             const std::filesystem::path& path) {
  set.validate();
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoFailure, "cannot open " + path.string());
  out << "slide " << set.slide_width << " " << set.slide_height << "\n";
  for (const AnnotationRegion& r : set.regions) {
    out << "region " << class_token(r.class_id);
    for (const Vec2& v : r.polygon)
      out << " " << format_double(v.x) << "," << format_double(v.y);
    out << "\n";
  }
  if (!out) fail(ErrorKind::IoFailure, "write failed " + path.string());
}

// ---------------------------------------------------------------------------
// Analysis map output
// ---------------------------------------------------------------------------

inline std::uint8_t confidence_byte(double confidence) {
  if (confidence < 0) confidence = 0;
  if (confidence > 1) confidence = 1;
  return static_cast<std::uint8_t>(std::floor(confidence * 255.0 + 0.5));
}

// Binary mode -> PGM intensity = confidence * 255 (rounded half-up).
// Multiclass mode -> PPM with R=Benign, G=InSitu, B=Invasive.
inline void write_analysis_map(const AnalysisMap& map,
                               const std::filesystem::path& path,
                               MapMode mode) {
  if (mode == MapMode::Binary) {
    GrayRaster img(map.grid_width, map.grid_height);
    for (int y = 0; y < map.grid_height; ++y)
      for (int x = 0; x < map.grid_width; ++x) {
        const std::vector<double>& c = map.cell(x, y);
        img.data[static_cast<std::size_t>(y) * map.grid_width + x] =
            confidence_byte(c.empty() ? 0.0 : c[0]);
      }
    write_pgm(img, path);
  } else {
    Raster img(map.grid_width, map.grid_height);
    for (int y = 0; y < map.grid_height; ++y)
      for (int x = 0; x < map.grid_width; ++x) {
        const std::vector<double>& c = map.cell(x, y);
        img.set_pixel(x, y, confidence_byte(c.size() > 0 ? c[0] : 0.0),
                      confidence_byte(c.size() > 1 ? c[1] : 0.0),
                      confidence_byte(c.size() > 2 ? c[2] : 0.0));
      }
    write_ppm(img, path);
  }
}

}  // namespace wsikit
