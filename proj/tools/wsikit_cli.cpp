// Command-line front end: generate synthetic slides, build and inspect
// pyramids, train the experts and the weigher, analyze slides, and evaluate
// analysis logs against annotations.
//
// Every subcommand reads its parameters from a line-oriented `key value`
// config file (--config); --seed overrides the config seed and --out picks
// the output directory. Exit codes: 0 success, 2 validation error, 3 I/O
// error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wsikit/wsikit.hpp"

namespace fs = std::filesystem;
using namespace wsikit;

namespace {

std::vector<std::string> split_tokens(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> tokens;
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

std::vector<int> int_list(const KeyValues& kv, const std::string& key,
                          std::vector<int> fallback) {
  const std::string* v = kv.find(key);
  if (!v) return fallback;
  std::vector<int> out;
  for (const std::string& tok : split_tokens(*v))
    out.push_back(static_cast<int>(parse_long(tok)));
  return out;
}

struct SlideRef {
  fs::path slide_dir;
  fs::path annotations;
};

// Every `slide <dir> [annotations]` line names one input slide.
std::vector<SlideRef> slide_refs(const KeyValues& kv) {
  std::vector<SlideRef> refs;
  for (const auto& [key, value] : kv.entries) {
    if (key != "slide") continue;
    std::vector<std::string> tokens = split_tokens(value);
    if (tokens.empty())
      fail(ErrorKind::InvalidSpec, "slide line needs a directory");
    SlideRef ref;
    ref.slide_dir = tokens[0];
    if (tokens.size() > 1) ref.annotations = tokens[1];
    refs.push_back(ref);
  }
  if (refs.empty()) fail(ErrorKind::InvalidSpec, "config names no slide");
  return refs;
}

struct LabeledSlide {
  SlideImage slide;
  TPyramid pyramid;
};

// Loads a slide, builds its full-depth pyramid, and labels it from the
// annotation file. Quality is assessed so tissue filters work.
LabeledSlide load_labeled(const SlideRef& ref, int depth,
                          const QualityThresholds& thresholds) {
  LabeledSlide ls;
  ls.slide = read_slide(ref.slide_dir);
  ls.pyramid = build_tpyramid(ls.slide, depth);
  assess_pyramid(ls.slide, ls.pyramid, thresholds);
  if (!ref.annotations.empty()) {
    AnnotationSet set = read_annotation(ref.annotations);
    if (set.slide_width != ls.slide.level0_width ||
        set.slide_height != ls.slide.level0_height)
      fail(ErrorKind::DimensionMismatch,
           ref.annotations.string() + " annotates a different slide size");
    RegionIndex index(set);
    label_pyramid(index, ls.pyramid);
  }
  return ls;
}

QualityThresholds thresholds_from(const KeyValues& kv) {
  QualityThresholds t;
  t.brightness = static_cast<int>(kv.get_long("brightness", t.brightness));
  t.min_tissue = kv.get_double("min_tissue", t.min_tissue);
  return t;
}

int run_synth(const KeyValues& kv, const fs::path& out, std::uint64_t seed) {
  std::string kind = kv.get("kind", "blocks");
  fs::create_directories(out);
  if (kind == "ladder") {
    LadderSpec spec;
    spec.width = static_cast<int>(kv.get_long("width", spec.width));
    spec.height = static_cast<int>(kv.get_long("height", spec.height));
    spec.levels = static_cast<int>(kv.get_long("levels", spec.levels));
    spec.tile = static_cast<int>(kv.get_long("tile", spec.tile));
    spec.amplitude = static_cast<int>(kv.get_long("amplitude", spec.amplitude));
    spec.transitions[0] = static_cast<int>(
        kv.get_long("transition_benign", spec.transitions[0]));
    spec.transitions[1] = static_cast<int>(
        kv.get_long("transition_insitu", spec.transitions[1]));
    spec.transitions[2] = static_cast<int>(
        kv.get_long("transition_invasive", spec.transitions[2]));
    SynthSlide synth = make_ladder_slide(spec);
    write_slide(synth.slide, out / "slide");
    write_annotation(synth.annotations, out / "annotations.txt");
  } else if (kind == "blocks") {
    BlockSpec spec;
    spec.width = static_cast<int>(kv.get_long("width", spec.width));
    spec.height = static_cast<int>(kv.get_long("height", spec.height));
    spec.levels = static_cast<int>(kv.get_long("levels", spec.levels));
    spec.tile = static_cast<int>(kv.get_long("tile", spec.tile));
    spec.region_count = static_cast<int>(kv.get_long("regions", spec.region_count));
    spec.min_size = kv.get_double("min_size", spec.min_size);
    spec.max_size = kv.get_double("max_size", spec.max_size);
    spec.align = static_cast<int>(kv.get_long("align", spec.align));
    spec.white_border = static_cast<int>(kv.get_long("border", spec.white_border));
    spec.noise = static_cast<int>(kv.get_long("noise", spec.noise));
    spec.disjoint = kv.get_long("disjoint", spec.disjoint ? 1 : 0) != 0;
    std::string shapes = kv.get("shapes", "aligned");
    if (shapes == "aligned") spec.shapes = RegionShape::Aligned;
    else if (shapes == "rotated") spec.shapes = RegionShape::Rotated;
    else if (shapes == "convex") spec.shapes = RegionShape::Convex;
    else if (shapes == "mixed") spec.shapes = RegionShape::Mixed;
    else fail(ErrorKind::InvalidSpec, "unknown shapes '" + shapes + "'");
    spec.seed = seed;
    SynthSlide synth = make_block_slide(spec);
    write_slide(synth.slide, out / "slide");
    write_annotation(synth.annotations, out / "annotations.txt");
  } else if (kind == "noise") {
    SlideImage slide = make_noise_slide(
        static_cast<int>(kv.get_long("width", 512)),
        static_cast<int>(kv.get_long("height", 512)),
        static_cast<int>(kv.get_long("levels", 4)),
        static_cast<int>(kv.get_long("tile", 64)), seed);
    write_slide(slide, out / "slide");
    AnnotationSet empty;
    empty.slide_width = slide.level0_width;
    empty.slide_height = slide.level0_height;
    write_annotation(empty, out / "annotations.txt");
  } else {
    fail(ErrorKind::InvalidSpec, "unknown synth kind '" + kind + "'");
  }
  return 0;
}

int run_pyramid(const KeyValues& kv, const fs::path& out) {
  std::vector<SlideRef> refs = slide_refs(kv);
  SlideImage slide = read_slide(refs.front().slide_dir);
  int depth = static_cast<int>(kv.get_long("depth", slide.level_count));
  QualityThresholds thresholds = thresholds_from(kv);
  TPyramid pyr = build_tpyramid(slide, depth);
  assess_pyramid(slide, pyr, thresholds);
  fs::create_directories(out);
  std::ofstream report(out / "pyramid.tsv", std::ios::binary);
  if (!report) fail(ErrorKind::IoFailure, "cannot write pyramid.tsv");
  report << "depth\tgx\tgy\tquality\ttissue_fraction\n";
  for (const Quad& q : pyr.nodes)
    report << q.depth << '\t' << q.grid_x << '\t' << q.grid_y << '\t'
           << (q.quality == QuadQuality::Tissue ? "tissue" : "background")
           << '\t' << format_double(q.tissue_fraction) << '\n';
  return 0;
}

int run_train_expert(const KeyValues& kv, const fs::path& out,
                     std::uint64_t seed) {
  QualityThresholds thresholds = thresholds_from(kv);
  std::string mode = kv.get("mode", "multiclass");
  ProducerParams params;
  if (mode == "binary") {
    params.classes = {{TumorClass::Normal},
                      {TumorClass::Benign, TumorClass::InSitu,
                       TumorClass::Invasive}};
  } else if (mode == "multiclass") {
    params.classes = {{TumorClass::Benign},
                      {TumorClass::InSitu},
                      {TumorClass::Invasive}};
  } else {
    fail(ErrorKind::InvalidSpec, "unknown mode '" + mode + "'");
  }
  int group_count = static_cast<int>(params.classes.size());

  std::vector<SlideRef> refs = slide_refs(kv);
  int depth = static_cast<int>(kv.get_long("depth", 0));
  std::vector<LabeledSlide> loaded;
  for (const SlideRef& ref : refs) {
    if (ref.annotations.empty())
      fail(ErrorKind::InvalidSpec, "training slides need annotations");
    int d = depth > 0 ? depth
                      : read_slide(ref.slide_dir).level_count;
    loaded.push_back(load_labeled(ref, d, thresholds));
  }
  std::vector<BatchSource> sources;
  for (const LabeledSlide& ls : loaded)
    sources.push_back({&ls.slide, &ls.pyramid});

  params.depths = int_list(kv, "depths", {loaded.front().pyramid.depth - 1});
  params.batch_size =
      static_cast<int>(kv.get_long("batch", 6 * group_count));
  params.require_tissue = kv.get_long("require_tissue", 1) != 0;
  params.seed = seed;

  ExpertTrainConfig config;
  config.learning_rate = kv.get_double("lr", config.learning_rate);
  config.epochs = static_cast<int>(kv.get_long("epochs", config.epochs));
  config.steps_per_epoch =
      static_cast<int>(kv.get_long("steps", config.steps_per_epoch));
  config.seed = seed;

  BatchGenerator generator(std::move(sources), std::move(params));
  FeatureExpert expert = train_feature_expert(generator, config);
  fs::create_directories(out);
  write_expert(expert, (out / kv.get("name", "expert.txt")).string());
  return 0;
}

int run_train_weigher(const KeyValues& kv, const fs::path& out,
                      std::uint64_t seed) {
  QualityThresholds thresholds = thresholds_from(kv);
  FeatureExpert expert = read_expert(kv.require("expert"));
  int classes = expert.class_count();

  WeightModelSpec spec;
  spec.input_size = static_cast<int>(kv.get_long("input", spec.input_size));
  spec.conv_widths = int_list(kv, "widths", spec.conv_widths);
  spec.seed = seed;

  WeigherTrainConfig config;
  config.learning_rate = kv.get_double("lr", config.learning_rate);
  config.batch_size = static_cast<int>(kv.get_long("batch", config.batch_size));
  config.max_epochs = static_cast<int>(kv.get_long("epochs", config.max_epochs));
  config.patience = static_cast<int>(kv.get_long("patience", config.patience));
  config.validation_fraction =
      kv.get_double("val_fraction", config.validation_fraction);
  config.seed = seed;

  std::vector<SlideRef> refs = slide_refs(kv);
  int depth = static_cast<int>(kv.get_long("depth", 0));
  long max_samples = kv.get_long("max_samples", 4096);

  std::vector<WeigherSample> dataset;
  int stack_height = 0;
  for (const SlideRef& ref : refs) {
    if (ref.annotations.empty())
      fail(ErrorKind::InvalidSpec, "training slides need annotations");
    int d = depth > 0 ? depth : read_slide(ref.slide_dir).level_count;
    LabeledSlide ls = load_labeled(ref, d, thresholds);
    stack_height = ls.pyramid.depth;
    int leaf_depth = ls.pyramid.depth - 1;
    int side = 1 << leaf_depth;
    for (int gy = 0; gy < side; ++gy)
      for (int gx = 0; gx < side; ++gx) {
        const Quad& leaf = ls.pyramid.at(leaf_depth, gx, gy);
        if (leaf.quality != QuadQuality::Tissue) continue;
        if (!leaf.label || *leaf.label == TumorClass::Normal) continue;
        std::vector<double> gt(classes, 0.0);
        int rank = static_cast<int>(*leaf.label) - 1;
        if (rank < 0 || rank >= classes) continue;
        gt[rank] = 1.0;
        dataset.push_back(make_weigher_sample(
            context_stack(ls.slide, ls.pyramid, leaf), expert, std::move(gt),
            spec.input_size));
      }
  }
  spec.branch_count = stack_height;
  if (max_samples > 0 &&
      dataset.size() > static_cast<std::size_t>(max_samples)) {
    std::vector<std::size_t> keep(dataset.size());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
    Rng(seed).fork(99).shuffle(keep);
    keep.resize(static_cast<std::size_t>(max_samples));
    std::sort(keep.begin(), keep.end());
    std::vector<WeigherSample> trimmed;
    trimmed.reserve(keep.size());
    for (std::size_t i : keep) trimmed.push_back(std::move(dataset[i]));
    dataset.swap(trimmed);
  }

  WeightModel model = train_weigher(dataset, spec, config);
  fs::create_directories(out);
  write_weigher(model, (out / kv.get("name", "weigher.txt")).string());
  return 0;
}

int run_analyze(const KeyValues& kv, const fs::path& out) {
  std::vector<SlideRef> refs = slide_refs(kv);
  SlideImage slide = read_slide(refs.front().slide_dir);

  PipelineConfig config;
  config.depth = static_cast<int>(kv.get_long("depth", slide.level_count));
  config.gate = kv.get_double("gate", config.gate);
  config.strategy = strategy_from_token(
      kv.get("strategy", strategy_token(config.strategy)));
  config.quality = thresholds_from(kv);

  PipelineExperts experts;
  FeatureExpert binary, multiclass;
  WeightModel weigher;
  multiclass = read_expert(kv.require("multiclass"));
  experts.multiclass = &multiclass;
  if (config.strategy != Strategy::MulticlassOnly) {
    binary = read_expert(kv.require("binary"));
    experts.binary = &binary;
  }
  if (config.strategy == Strategy::WeighingPipeline) {
    weigher = read_weigher(kv.require("weigher"));
    experts.weigher = &weigher;
  }

  AnalysisResult result = analyze_slide(slide, config, experts);
  fs::create_directories(out);
  write_log(result.log, out / "log.tsv");
  if (result.binary_map)
    write_analysis_map(*result.binary_map, out / "binary_map.pgm",
                       MapMode::Binary);
  write_analysis_map(result.multiclass_map, out / "multiclass_map.ppm",
                     MapMode::MultiClass);
  return 0;
}

int run_evaluate(const KeyValues& kv, const fs::path& out) {
  RecordLog log = read_log(kv.require("log"));
  AnnotationSet annotations = read_annotation(kv.require("annotations"));
  EvaluationReport report = evaluate_log(log, annotations);
  fs::create_directories(out);
  write_report(report, out / "report.tsv");
  return 0;
}

int run_render(const KeyValues& kv, const fs::path& out) {
  RecordLog log = read_log(kv.require("log"));
  AnalysisResult result = render_maps(log);
  fs::create_directories(out);
  if (result.binary_map)
    write_analysis_map(*result.binary_map, out / "binary_map.pgm",
                       MapMode::Binary);
  write_analysis_map(result.multiclass_map, out / "multiclass_map.ppm",
                     MapMode::MultiClass);
  return 0;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::IoFailure:
    case ErrorKind::CorruptRaster:
      return 3;
    default:
      return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-magnification whole-slide analysis toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t cli_seed = 0;
  std::string config_path;
  std::string out_dir = ".";
  CLI::Option* seed_opt =
      app.add_option("--seed", cli_seed, "override the config seed");
  app.add_option("--config", config_path, "key/value parameter file");
  app.add_option("--out", out_dir, "output directory");

  const char* names[] = {"synth",   "pyramid",       "train-expert",
                         "train-weigher", "analyze", "evaluate",
                         "render"};
  for (const char* name : names) app.add_subcommand(name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    KeyValues kv;
    if (!config_path.empty()) kv = read_key_values(config_path);
    std::uint64_t seed = seed_opt->count() > 0
                             ? cli_seed
                             : static_cast<std::uint64_t>(
                                   kv.get_long("seed", 0));
    fs::path out = out_dir;
    if (app.got_subcommand("synth")) return run_synth(kv, out, seed);
    if (app.got_subcommand("pyramid")) return run_pyramid(kv, out);
    if (app.got_subcommand("train-expert"))
      return run_train_expert(kv, out, seed);
    if (app.got_subcommand("train-weigher"))
      return run_train_weigher(kv, out, seed);
    if (app.got_subcommand("analyze")) return run_analyze(kv, out);
    if (app.got_subcommand("evaluate")) return run_evaluate(kv, out);
    if (app.got_subcommand("render")) return run_render(kv, out);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
