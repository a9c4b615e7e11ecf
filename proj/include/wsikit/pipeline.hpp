#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "wsikit/annotation_index.hpp"
#include "wsikit/core.hpp"
#include "wsikit/experts.hpp"
#include "wsikit/fusion.hpp"
#include "wsikit/metrics.hpp"
#include "wsikit/pyramid.hpp"
#include "wsikit/slide_io.hpp"

namespace wsikit {

// ---------------------------------------------------------------------------
// End-to-end slide analysis: propose tumor quads with a binary expert,
// classify proposals at every magnification with the multi-class expert,
// optionally fuse the per-level answers with learned weights, and keep a
// per-quad record log from which maps and reports can be regenerated.
// ---------------------------------------------------------------------------

enum class Strategy { MulticlassOnly, MulticlassPipeline, WeighingPipeline };

inline const char* strategy_token(Strategy s) {
  switch (s) {
    case Strategy::MulticlassOnly: return "multiclass_only";
    case Strategy::MulticlassPipeline: return "multiclass_pipeline";
    case Strategy::WeighingPipeline: return "weighing_pipeline";
  }
  return "?";
}

inline Strategy strategy_from_token(const std::string& token) {
  if (token == "multiclass_only") return Strategy::MulticlassOnly;
  if (token == "multiclass_pipeline") return Strategy::MulticlassPipeline;
  if (token == "weighing_pipeline") return Strategy::WeighingPipeline;
  fail(ErrorKind::ParseError, "unknown strategy '" + token + "'");
}

struct PipelineConfig {
  int depth = 6;                 // T-pyramid level count; leaves at depth - 1
  QualityThresholds quality;
  double gate = 0.3;             // binary confidence admitting a quad
  Strategy strategy = Strategy::WeighingPipeline;
  std::uint64_t seed = 0;

  void validate() const {
    if (depth < 1) fail(ErrorKind::InvalidSpec, "pyramid needs depth >= 1");
    if (gate < 0.0 || gate > 1.0)
      fail(ErrorKind::InvalidSpec, "proposal gate outside [0,1]");
  }
};

struct PipelineExperts {
  const Expert* binary = nullptr;      // scores (normal, tumor); gated strategies
  const Expert* multiclass = nullptr;  // scores the three tumor classes
  const WeightModel* weigher = nullptr;
};

// One row per leaf quad, in row-major leaf order.
struct QuadRecord {
  std::size_t id = 0;       // flat T-pyramid node index
  int depth = 0;            // leaf depth (pyramid level count - 1)
  int gx = 0, gy = 0;
  std::string status;                         // background | gated | analyzed
  std::optional<double> gate;                 // binary tumor confidence
  std::vector<std::vector<double>> level_dists;  // coarse -> fine, analyzed only
  std::vector<double> weights;                // weighing only
  std::vector<double> fused;                  // weighing only
  TumorClass label = TumorClass::Normal;      // final map label
};

struct RecordLog {
  int slide_width = 0, slide_height = 0;
  int depth = 0;  // leaf depth
  Strategy strategy = Strategy::MulticlassOnly;
  double gate = 0.0;
  std::vector<std::string> class_names;  // multi-class expert order
  std::vector<QuadRecord> records;
};

struct AnalysisResult {
  std::optional<AnalysisMap> binary_map;  // gate scores; absent without a gate
  AnalysisMap multiclass_map;             // per-cell tumor-class distribution
  RecordLog log;
};

inline TumorClass tumor_class_at(std::size_t index) {
  return static_cast<TumorClass>(static_cast<int>(index) + 1);
}

inline std::size_t argmax_index(const std::vector<double>& v) {
  return static_cast<std::size_t>(
      std::max_element(v.begin(), v.end()) - v.begin());
}

inline AnalysisResult analyze_slide(const SlideImage& slide,
                                    const PipelineConfig& config,
                                    const PipelineExperts& experts) {
  config.validate();
  bool gated = config.strategy != Strategy::MulticlassOnly;
  bool weighing = config.strategy == Strategy::WeighingPipeline;
  if (!experts.multiclass)
    fail(ErrorKind::InvalidSpec, "analysis needs a multi-class expert");
  if (gated && !experts.binary)
    fail(ErrorKind::InvalidSpec, "gated strategies need a binary expert");
  if (weighing && !experts.weigher)
    fail(ErrorKind::InvalidSpec, "weighing needs a weight model");
  if (weighing && experts.weigher->spec.branch_count != config.depth)
    fail(ErrorKind::ShapeMismatch, "weight model branch count != stack height");

  TPyramid pyramid = build_tpyramid(slide, config.depth);
  assess_pyramid(slide, pyramid, config.quality);

  int leaf_depth = config.depth - 1;
  int side = 1 << leaf_depth;
  AnalysisResult result;
  result.multiclass_map.grid_width = side;
  result.multiclass_map.grid_height = side;
  result.multiclass_map.cells.assign(
      static_cast<std::size_t>(side) * side, std::vector<double>(3, 0.0));
  if (gated) {
    AnalysisMap bmap;
    bmap.grid_width = side;
    bmap.grid_height = side;
    bmap.cells.assign(static_cast<std::size_t>(side) * side,
                      std::vector<double>(1, 0.0));
    result.binary_map = std::move(bmap);
  }
  RecordLog& log = result.log;
  log.slide_width = slide.level0_width;
  log.slide_height = slide.level0_height;
  log.depth = leaf_depth;
  log.strategy = config.strategy;
  log.gate = config.gate;
  for (int c = 0; c < experts.multiclass->class_count(); ++c)
    log.class_names.push_back(class_token(tumor_class_at(c)));

  for (int gy = 0; gy < side; ++gy)
    for (int gx = 0; gx < side; ++gx) {
      const Quad& leaf = pyramid.at(leaf_depth, gx, gy);
      QuadRecord rec;
      rec.id = pyramid.index_of(leaf_depth, gx, gy);
      rec.depth = leaf_depth;
      rec.gx = gx;
      rec.gy = gy;
      if (leaf.quality == QuadQuality::Background) {
        rec.status = "background";
        log.records.push_back(std::move(rec));
        continue;
      }
      if (gated) {
        Patch leaf_patch = extract_patch(slide, leaf);
        rec.gate = experts.binary->classify(leaf_patch)[1];
        result.binary_map->cell(gx, gy)[0] = *rec.gate;
        if (*rec.gate < config.gate) {
          rec.status = "gated";
          log.records.push_back(std::move(rec));
          continue;
        }
      }
      rec.status = "analyzed";
      PatchStack stack = context_stack(slide, pyramid, leaf);
      rec.level_dists.reserve(stack.size());
      for (const Patch& p : stack)
        rec.level_dists.push_back(experts.multiclass->classify(p));
      std::vector<double> final_dist;
      if (weighing) {
        rec.weights = predict_weights(*experts.weigher, stack);
        rec.fused = weighted_fuse(rec.weights, rec.level_dists).w_softmax;
        final_dist = rec.fused;
      } else {
        final_dist = rec.level_dists.back();
      }
      rec.label = tumor_class_at(argmax_index(final_dist));
      result.multiclass_map.cell(gx, gy) = final_dist;
      log.records.push_back(std::move(rec));
    }
  return result;
}

// ---------------------------------------------------------------------------
// Record log file: header lines, then one tab-separated row per leaf.
// Distributions are comma-joined; stack levels are semicolon-joined;
// absent fields are "-".
// ---------------------------------------------------------------------------

namespace detail {

inline std::string join_dist(const std::vector<double>& v) {
  if (v.empty()) return "-";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s;
}

inline std::string join_levels(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return "-";
  std::string s;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i) s += ';';
    s += join_dist(rows[i]);
  }
  return s;
}

inline std::vector<double> split_dist(const std::string& s) {
  std::vector<double> v;
  if (s == "-") return v;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t stop = s.find(',', start);
    if (stop == std::string::npos) stop = s.size();
    v.push_back(parse_double(s.substr(start, stop - start)));
    start = stop + 1;
  }
  return v;
}

inline std::vector<std::vector<double>> split_levels(const std::string& s) {
  std::vector<std::vector<double>> rows;
  if (s == "-") return rows;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t stop = s.find(';', start);
    if (stop == std::string::npos) stop = s.size();
    rows.push_back(split_dist(s.substr(start, stop - start)));
    start = stop + 1;
  }
  return rows;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (start <= line.size()) {
    std::size_t stop = line.find('\t', start);
    if (stop == std::string::npos) stop = line.size();
    fields.push_back(line.substr(start, stop - start));
    start = stop + 1;
  }
  return fields;
}

}  // namespace detail

inline void write_log(const RecordLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoFailure, "cannot write " + path.string());
  out << "wsikit-log 1\n";
  out << "slide " << log.slide_width << ' ' << log.slide_height << '\n';
  out << "depth " << log.depth << '\n';
  out << "strategy " << strategy_token(log.strategy) << '\n';
  out << "gate " << format_double(log.gate) << '\n';
  out << "classes " << log.class_names.size();
  for (const std::string& n : log.class_names) out << ' ' << n;
  out << '\n';
  out << "columns\tid\tdepth\tgx\tgy\tstatus\tgate\tdists\tweights\tfused\t"
         "label\n";
  for (const QuadRecord& r : log.records) {
    out << r.id << '\t' << r.depth << '\t' << r.gx << '\t' << r.gy << '\t'
        << r.status << '\t'
        << (r.gate ? format_double(*r.gate) : std::string("-")) << '\t'
        << detail::join_levels(r.level_dists) << '\t'
        << detail::join_dist(r.weights) << '\t' << detail::join_dist(r.fused)
        << '\t' << class_token(r.label) << '\n';
  }
  if (!out) fail(ErrorKind::IoFailure, "short write to " + path.string());
}

inline RecordLog read_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoFailure, "cannot read " + path.string());
  RecordLog log;
  std::string line;
  auto next_line = [&]() {
    if (!std::getline(in, line))
      fail(ErrorKind::ParseError, path.string() + ": truncated header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };
  next_line();
  if (line != "wsikit-log 1")
    fail(ErrorKind::ParseError, path.string() + ": not a record log");
  {
    next_line();
    std::istringstream hs(line);
    std::string word;
    hs >> word >> log.slide_width >> log.slide_height;
    if (word != "slide" || !hs)
      fail(ErrorKind::ParseError, path.string() + ": bad slide line");
    next_line();
    std::istringstream ds(line);
    ds >> word >> log.depth;
    if (word != "depth" || !ds)
      fail(ErrorKind::ParseError, path.string() + ": bad depth line");
    next_line();
    std::istringstream ss(line);
    std::string token;
    ss >> word >> token;
    if (word != "strategy" || !ss)
      fail(ErrorKind::ParseError, path.string() + ": bad strategy line");
    log.strategy = strategy_from_token(token);
    next_line();
    std::istringstream gs(line);
    gs >> word >> token;
    if (word != "gate" || !gs)
      fail(ErrorKind::ParseError, path.string() + ": bad gate line");
    log.gate = parse_double(token);
    next_line();
    std::istringstream cs(line);
    std::size_t n = 0;
    cs >> word >> n;
    if (word != "classes" || !cs)
      fail(ErrorKind::ParseError, path.string() + ": bad classes line");
    for (std::size_t i = 0; i < n; ++i) {
      cs >> token;
      log.class_names.push_back(token);
    }
    next_line();  // columns header
  }
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f = detail::split_tabs(line);
    if (f.size() != 10)
      fail(ErrorKind::ParseError, path.string() + ": bad record row");
    QuadRecord r;
    r.id = static_cast<std::size_t>(parse_long(f[0]));
    r.depth = static_cast<int>(parse_long(f[1]));
    r.gx = static_cast<int>(parse_long(f[2]));
    r.gy = static_cast<int>(parse_long(f[3]));
    r.status = f[4];
    if (f[5] != "-") r.gate = parse_double(f[5]);
    r.level_dists = detail::split_levels(f[6]);
    r.weights = detail::split_dist(f[7]);
    r.fused = detail::split_dist(f[8]);
    r.label = class_from_token(f[9]);
    log.records.push_back(std::move(r));
  }
  return log;
}

// Rebuilds the analysis maps from a log alone.
inline AnalysisResult render_maps(const RecordLog& log) {
  AnalysisResult result;
  result.log = log;
  int side = 1 << log.depth;
  result.multiclass_map.grid_width = side;
  result.multiclass_map.grid_height = side;
  result.multiclass_map.cells.assign(
      static_cast<std::size_t>(side) * side, std::vector<double>(3, 0.0));
  bool gated = log.strategy != Strategy::MulticlassOnly;
  if (gated) {
    AnalysisMap bmap;
    bmap.grid_width = side;
    bmap.grid_height = side;
    bmap.cells.assign(static_cast<std::size_t>(side) * side,
                      std::vector<double>(1, 0.0));
    result.binary_map = std::move(bmap);
  }
  for (const QuadRecord& r : log.records) {
    if (r.gate && result.binary_map)
      result.binary_map->cell(r.gx, r.gy)[0] = *r.gate;
    if (r.status != "analyzed") continue;
    const std::vector<double>& dist =
        r.fused.empty() ? r.level_dists.back() : r.fused;
    result.multiclass_map.cell(r.gx, r.gy) = dist;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation: ground truth from the annotations, metric lines per strategy.
// A weighing log carries both the pre-fusion (finest-level argmax) and the
// fused decision, so it yields the plain pipeline metrics, the weighing
// metrics, and the flip accounting between them in one pass.
// ---------------------------------------------------------------------------

struct EvaluationReport {
  std::vector<std::pair<std::string, double>> lines;

  void add(const std::string& name, double value) {
    lines.emplace_back(name, value);
  }
  const double* find(const std::string& name) const {
    for (const auto& [k, v] : lines)
      if (k == name) return &v;
    return nullptr;
  }
};

inline void write_report(const EvaluationReport& report,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoFailure, "cannot write " + path.string());
  for (const auto& [name, value] : report.lines)
    out << name << '\t' << format_double(value) << '\n';
  if (!out) fail(ErrorKind::IoFailure, "short write to " + path.string());
}

namespace detail {

inline void add_label_metrics(EvaluationReport& report,
                              const std::string& prefix,
                              const std::vector<TumorClass>& pred,
                              const std::vector<TumorClass>& gt) {
  ConfusionMatrix cm(kTumorClassCount);
  for (std::size_t i = 0; i < pred.size(); ++i)
    cm.add(static_cast<int>(gt[i]), static_cast<int>(pred[i]));
  ClassificationReport cr = classification_metrics(cm);
  report.add(prefix + ".accuracy", cr.accuracy);
  report.add(prefix + ".precision", cr.precision);
  report.add(prefix + ".recall", cr.recall);
  report.add(prefix + ".specificity", cr.specificity);
  std::vector<TumorClass> classes = {TumorClass::Normal, TumorClass::Benign,
                                     TumorClass::InSitu, TumorClass::Invasive};
  IoUReport ir = iou(pred, gt, classes);
  report.add(prefix + ".iou_micro", ir.micro);
  report.add(prefix + ".iou_macro", ir.macro);
  for (const auto& [cls, value] : ir.per_class)
    if (value)
      report.add(prefix + ".iou_" + class_token(cls), *value);
}

}  // namespace detail

inline EvaluationReport evaluate_log(const RecordLog& log,
                                     const AnnotationSet& annotations) {
  if (annotations.slide_width != log.slide_width ||
      annotations.slide_height != log.slide_height)
    fail(ErrorKind::ShapeMismatch, "annotation and log slide sizes differ");
  RegionIndex index(annotations);

  std::vector<TumorClass> gt, final_labels, base_labels;
  std::vector<double> gate_scores;
  std::vector<int> gate_truth;
  bool any_weighted = false;
  for (const QuadRecord& r : log.records) {
    RectD rect = quad_rect(log.slide_width, log.slide_height, r.depth, r.gx,
                           r.gy);
    FractionReport fr = index.query_fractions(
        Rect{rect.x, rect.y, rect.x + rect.w, rect.y + rect.h});
    TumorClass truth = label_from_fractions(fr);
    gt.push_back(truth);
    final_labels.push_back(r.status == "analyzed" ? r.label
                                                  : TumorClass::Normal);
    TumorClass base = TumorClass::Normal;
    if (r.status == "analyzed" && !r.level_dists.empty())
      base = tumor_class_at(argmax_index(r.level_dists.back()));
    base_labels.push_back(base);
    if (!r.fused.empty()) any_weighted = true;
    if (r.gate) {
      gate_scores.push_back(*r.gate);
      gate_truth.push_back(truth != TumorClass::Normal ? 1 : 0);
    }
  }

  EvaluationReport report;
  report.add("quads.total", static_cast<double>(log.records.size()));
  if (log.strategy == Strategy::MulticlassOnly) {
    detail::add_label_metrics(report, "multiclass_only", final_labels, gt);
  } else if (!any_weighted) {
    detail::add_label_metrics(report, "multiclass_pipeline", final_labels, gt);
  } else {
    detail::add_label_metrics(report, "multiclass_pipeline", base_labels, gt);
    detail::add_label_metrics(report, "weighing_pipeline", final_labels, gt);
    FlipCounts fc = flip_accounting(base_labels, final_labels, gt);
    report.add("flips.correct", static_cast<double>(fc.correct_flips));
    report.add("flips.incorrect", static_cast<double>(fc.incorrect_flips));
    report.add("flips.correct_no", static_cast<double>(fc.correct_no_flips));
    report.add("flips.incorrect_no",
               static_cast<double>(fc.incorrect_no_flips));
    ClassificationReport fm = flip_metrics(fc);
    report.add("flips.accuracy", fm.accuracy);
    report.add("flips.precision", fm.precision);
    report.add("flips.recall", fm.recall);
    report.add("flips.specificity", fm.specificity);
  }
  if (!gate_scores.empty()) {
    bool has_pos = false, has_neg = false;
    for (int t : gate_truth) (t ? has_pos : has_neg) = true;
    // An all-normal or all-tumor slide has no ROC; omit the line rather
    // than fail the whole report.
    if (has_pos && has_neg) {
      RocResult roc = roc_auc(gate_scores, gate_truth);
      report.add("binary.auc", roc.auc);
      report.add("binary.thresholds",
                 static_cast<double>(roc.points.size()));
    }
  }
  return report;
}

}  // namespace wsikit
