#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "wsikit/batch.hpp"
#include "wsikit/core.hpp"
#include "wsikit/pyramid.hpp"
#include "wsikit/raster.hpp"
#include "wsikit/slide_io.hpp"

namespace wsikit {

// ---------------------------------------------------------------------------
// Shared probability helpers
// ---------------------------------------------------------------------------

inline constexpr double kLogClamp = 1e-12;

inline std::vector<double> softmax(const std::vector<double>& scores) {
  double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - top);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

inline double cross_entropy(const std::vector<double>& probs,
                            const std::vector<double>& onehot) {
  if (probs.size() != onehot.size())
    fail(ErrorKind::ShapeMismatch, "distribution and label length differ");
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    loss -= onehot[i] * std::log(std::max(probs[i], kLogClamp));
  return loss;
}

// ---------------------------------------------------------------------------
// Patch features: per-channel intensity histograms plus first two moments.
// 8 bins x 3 channels + 3 means + 3 standard deviations = 30 values, each
// in [0,1].
// ---------------------------------------------------------------------------

inline constexpr int kHistogramBins = 8;
inline constexpr int kFeatureDim = 3 * kHistogramBins + 6;

inline std::vector<double> extract_features(const Raster& img) {
  std::vector<double> f(kFeatureDim, 0.0);
  std::size_t total = static_cast<std::size_t>(img.width) * img.height;
  double sum[3] = {0, 0, 0}, sum_sq[3] = {0, 0, 0};
  const std::uint8_t* p = img.data.data();
  for (std::size_t i = 0; i < total; ++i, p += 3)
    for (int c = 0; c < 3; ++c) {
      int v = p[c];
      f[c * kHistogramBins + (v >> 5)] += 1.0;
      sum[c] += v;
      sum_sq[c] += static_cast<double>(v) * v;
    }
  double n = static_cast<double>(total);
  for (int i = 0; i < 3 * kHistogramBins; ++i) f[i] /= n;
  for (int c = 0; c < 3; ++c) {
    double mean = sum[c] / n;
    double var = std::max(0.0, sum_sq[c] / n - mean * mean);
    f[3 * kHistogramBins + c] = mean / 255.0;
    f[3 * kHistogramBins + 3 + c] = std::sqrt(var) / 255.0;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Expert interface: anything that turns a patch into a class distribution.
// ---------------------------------------------------------------------------

class Expert {
 public:
  virtual ~Expert() = default;
  virtual int class_count() const = 0;
  virtual std::vector<double> classify(const Patch& patch) const = 0;
};

// ---------------------------------------------------------------------------
// FeatureExpert: linear softmax over the 30-dim features, trained by
// mini-batch gradient descent on categorical cross-entropy.
// ---------------------------------------------------------------------------

struct ExpertTrainConfig {
  double learning_rate = 0.05;
  int epochs = 30;
  int steps_per_epoch = 50;
  std::uint64_t seed = 0;  // recorded in the checkpoint; training itself is
                           // deterministic given the generator stream
};

class FeatureExpert : public Expert {
 public:
  FeatureExpert() = default;

  FeatureExpert(std::vector<std::string> class_names, ExpertTrainConfig config)
      : class_names_(std::move(class_names)),
        config_(config),
        weights_(class_names_.size() * kFeatureDim, 0.0),
        bias_(class_names_.size(), 0.0) {}

  int class_count() const override {
    return static_cast<int>(class_names_.size());
  }
  const std::vector<std::string>& class_names() const { return class_names_; }
  const ExpertTrainConfig& config() const { return config_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& bias() const { return bias_; }
  const std::vector<double>& epoch_loss() const { return epoch_loss_; }

  std::vector<double>& mutable_weights() { return weights_; }
  std::vector<double>& mutable_bias() { return bias_; }
  std::vector<double>& mutable_epoch_loss() { return epoch_loss_; }

  std::vector<double> classify_features(const std::vector<double>& f) const {
    if (class_names_.empty())
      fail(ErrorKind::UntrainedExpert, "expert has no classes");
    if (f.size() != kFeatureDim)
      fail(ErrorKind::ShapeMismatch, "feature vector has wrong length");
    std::vector<double> scores(class_names_.size());
    for (std::size_t c = 0; c < class_names_.size(); ++c) {
      double z = bias_[c];
      const double* row = &weights_[c * kFeatureDim];
      for (int d = 0; d < kFeatureDim; ++d) z += row[d] * f[d];
      scores[c] = z;
    }
    return softmax(scores);
  }

  std::vector<double> classify(const Patch& patch) const override {
    return classify_features(extract_features(patch.pixels));
  }

 private:
  std::vector<std::string> class_names_;
  ExpertTrainConfig config_;
  std::vector<double> weights_;  // class-major, class_count x kFeatureDim
  std::vector<double> bias_;
  std::vector<double> epoch_loss_;
};

inline FeatureExpert train_feature_expert(BatchGenerator& generator,
                                          const ExpertTrainConfig& config) {
  FeatureExpert expert(generator.class_names(), config);
  int classes = expert.class_count();
  std::vector<double>& w = expert.mutable_weights();
  std::vector<double>& b = expert.mutable_bias();
  std::vector<double> grad_w(w.size()), grad_b(b.size());

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (int step = 0; step < config.steps_per_epoch; ++step) {
      LabeledBatch batch = generator.next_batch();
      std::fill(grad_w.begin(), grad_w.end(), 0.0);
      std::fill(grad_b.begin(), grad_b.end(), 0.0);
      double batch_loss = 0.0;
      for (const LabeledSample& sample : batch.samples) {
        std::vector<double> f = extract_features(sample.patch.pixels);
        std::vector<double> p = expert.classify_features(f);
        batch_loss += cross_entropy(p, sample.label);
        for (int c = 0; c < classes; ++c) {
          double dz = p[c] - sample.label[c];
          grad_b[c] += dz;
          double* row = &grad_w[c * kFeatureDim];
          for (int d = 0; d < kFeatureDim; ++d) row[d] += dz * f[d];
        }
      }
      double inv = 1.0 / batch.samples.size();
      for (std::size_t i = 0; i < w.size(); ++i)
        w[i] -= config.learning_rate * grad_w[i] * inv;
      for (std::size_t i = 0; i < b.size(); ++i)
        b[i] -= config.learning_rate * grad_b[i] * inv;
      epoch_loss += batch_loss * inv;
    }
    expert.mutable_epoch_loss().push_back(epoch_loss / config.steps_per_epoch);
  }
  return expert;
}

// ---------------------------------------------------------------------------
// OracleExpert: answers from the ground-truth labels of a pyramid, keyed by
// the patch's source quad. Test and pipeline plumbing, not a model.
// ---------------------------------------------------------------------------

class OracleExpert : public Expert {
 public:
  // rank(label) gives the output index for a quad label, or -1 for "no
  // opinion" (uniform output).
  template <typename RankFn>
  OracleExpert(const TPyramid& pyramid, int class_count, RankFn rank)
      : depth_(pyramid.depth), classes_(class_count) {
    node_class_.assign(pyramid.nodes.size(), -1);
    for (std::size_t i = 0; i < pyramid.nodes.size(); ++i)
      if (pyramid.nodes[i].label)
        node_class_[i] = rank(*pyramid.nodes[i].label);
  }

  int class_count() const override { return classes_; }

  std::vector<double> classify(const Patch& patch) const override {
    std::vector<double> out(classes_, 1.0 / classes_);
    if (patch.source_depth < 0 || patch.source_depth >= depth_) return out;
    std::size_t idx = TPyramid::level_offset(patch.source_depth) +
                      (static_cast<std::size_t>(patch.source_gy)
                       << patch.source_depth) +
                      patch.source_gx;
    int cls = node_class_[idx];
    if (cls < 0) return out;
    std::fill(out.begin(), out.end(), 0.0);
    out[cls] = 1.0;
    return out;
  }

 private:
  int depth_;
  int classes_;
  std::vector<int> node_class_;
};

inline OracleExpert multiclass_oracle(const TPyramid& pyramid) {
  return OracleExpert(pyramid, 3, [](TumorClass c) {
    return c == TumorClass::Normal ? -1 : static_cast<int>(c) - 1;
  });
}

inline OracleExpert binary_oracle(const TPyramid& pyramid) {
  return OracleExpert(pyramid, 2, [](TumorClass c) {
    return c == TumorClass::Normal ? 0 : 1;
  });
}

// ---------------------------------------------------------------------------
// Checkpoints: ASCII, %.17g decimals, exact round-trip.
// ---------------------------------------------------------------------------

inline void write_expert(const FeatureExpert& expert, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoFailure, "cannot write " + path);
  out << "wsikit-expert 1\n";
  out << "classes " << expert.class_count();
  for (const std::string& name : expert.class_names()) out << ' ' << name;
  out << "\nbins " << kHistogramBins << "\ndim " << kFeatureDim << '\n';
  const ExpertTrainConfig& c = expert.config();
  out << "hyper " << format_double(c.learning_rate) << ' ' << c.epochs << ' '
      << c.steps_per_epoch << ' ' << c.seed << '\n';
  out << "loss " << expert.epoch_loss().size();
  for (double v : expert.epoch_loss()) out << ' ' << format_double(v);
  out << "\nbias";
  for (double v : expert.bias()) out << ' ' << format_double(v);
  out << '\n';
  for (int cls = 0; cls < expert.class_count(); ++cls) {
    out << "row";
    for (int d = 0; d < kFeatureDim; ++d)
      out << ' ' << format_double(expert.weights()[cls * kFeatureDim + d]);
    out << '\n';
  }
  if (!out) fail(ErrorKind::IoFailure, "short write to " + path);
}

inline FeatureExpert read_expert(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoFailure, "cannot read " + path);
  auto expect = [&](const std::string& word) {
    std::string tok;
    if (!(in >> tok) || tok != word)
      fail(ErrorKind::ParseError, path + ": expected '" + word + "'");
  };
  expect("wsikit-expert");
  int version, count, bins, dim;
  if (!(in >> version) || version != 1)
    fail(ErrorKind::ParseError, path + ": unsupported version");
  expect("classes");
  if (!(in >> count) || count <= 0)
    fail(ErrorKind::ParseError, path + ": bad class count");
  std::vector<std::string> names(count);
  for (std::string& name : names)
    if (!(in >> name)) fail(ErrorKind::ParseError, path + ": missing class");
  expect("bins");
  in >> bins;
  expect("dim");
  in >> dim;
  if (!in || bins != kHistogramBins || dim != kFeatureDim)
    fail(ErrorKind::ParseError, path + ": feature spec mismatch");
  expect("hyper");
  std::string lr_text;
  ExpertTrainConfig config;
  in >> lr_text >> config.epochs >> config.steps_per_epoch >> config.seed;
  if (!in) fail(ErrorKind::ParseError, path + ": bad hyperparameters");
  config.learning_rate = parse_double(lr_text);
  expect("loss");
  std::size_t loss_count;
  in >> loss_count;
  FeatureExpert expert(std::move(names), config);
  for (std::size_t i = 0; i < loss_count; ++i) {
    std::string v;
    in >> v;
    expert.mutable_epoch_loss().push_back(parse_double(v));
  }
  expect("bias");
  for (int c = 0; c < count; ++c) {
    std::string v;
    if (!(in >> v)) fail(ErrorKind::ParseError, path + ": truncated bias");
    expert.mutable_bias()[c] = parse_double(v);
  }
  for (int c = 0; c < count; ++c) {
    expect("row");
    for (int d = 0; d < kFeatureDim; ++d) {
      std::string v;
      if (!(in >> v)) fail(ErrorKind::ParseError, path + ": truncated row");
      expert.mutable_weights()[c * kFeatureDim + d] = parse_double(v);
    }
  }
  return expert;
}

}  // namespace wsikit
