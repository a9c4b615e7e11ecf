#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "wsikit/core.hpp"
#include "wsikit/experts.hpp"
#include "wsikit/pyramid.hpp"
#include "wsikit/raster.hpp"

namespace wsikit {

// ---------------------------------------------------------------------------
// Weighted prediction fusion. A weight model looks at the context stack of a
// leaf, produces one scalar per magnification level, and softmaxes them into
// a weight vector. The weights scale the per-level class distributions, the
// scaled rows are summed, and a final softmax gives the fused distribution.
// Gradients for every step are hand-derived; no autodiff.
// ---------------------------------------------------------------------------

using PredictionStack = std::vector<std::vector<double>>;  // L rows x N classes
using WeightVector = std::vector<double>;

struct FusedResult {
  std::vector<std::vector<double>> w_pred;  // L x N, weights applied per row
  std::vector<double> w_sum;                // column sums, one per class
  std::vector<double> w_softmax;            // softmax of w_sum
};

inline void check_prediction_stack(const PredictionStack& p) {
  if (p.empty() || p.front().empty())
    fail(ErrorKind::ShapeMismatch, "empty prediction stack");
  for (const auto& row : p)
    if (row.size() != p.front().size())
      fail(ErrorKind::ShapeMismatch, "ragged prediction stack");
}

inline FusedResult weighted_fuse(const WeightVector& w,
                                 const PredictionStack& p) {
  check_prediction_stack(p);
  if (w.size() != p.size())
    fail(ErrorKind::ShapeMismatch, "weight count differs from stack height");
  std::size_t levels = p.size(), classes = p.front().size();
  FusedResult r;
  r.w_pred.assign(levels, std::vector<double>(classes, 0.0));
  r.w_sum.assign(classes, 0.0);
  for (std::size_t l = 0; l < levels; ++l)
    for (std::size_t i = 0; i < classes; ++i) {
      r.w_pred[l][i] = w[l] * p[l][i];
      r.w_sum[i] += r.w_pred[l][i];
    }
  r.w_softmax = softmax(r.w_sum);
  return r;
}

inline double fusion_loss(const std::vector<double>& w_softmax,
                          const std::vector<double>& gt) {
  return cross_entropy(w_softmax, gt);
}

// ---------------------------------------------------------------------------
// Minimal dense tensor (channels x height x width of doubles).
// ---------------------------------------------------------------------------

struct Tensor {
  int channels = 0, height = 0, width = 0;
  std::vector<double> values;

  Tensor() = default;
  Tensor(int c, int h, int w)
      : channels(c),
        height(h),
        width(w),
        values(static_cast<std::size_t>(c) * h * w, 0.0) {}

  double& at(int c, int y, int x) {
    return values[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return values[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

// Nearest-neighbor subsample to the model input size, scaled to [0,1].
// Nearest (not averaging) keeps fine stripe patterns detectable as aliased
// constants instead of blurring them into the base color.
inline Tensor branch_input(const Raster& img, int input_size) {
  Tensor t(3, input_size, input_size);
  for (int y = 0; y < input_size; ++y) {
    int sy = static_cast<int>(static_cast<std::int64_t>(y) * img.height /
                              input_size);
    for (int x = 0; x < input_size; ++x) {
      int sx = static_cast<int>(static_cast<std::int64_t>(x) * img.width /
                                input_size);
      const std::uint8_t* px = img.pixel(sx, sy);
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = px[c] / 255.0;
    }
  }
  return t;
}

inline Raster subsample_raster(const Raster& img, int size) {
  Raster out(size, size);
  for (int y = 0; y < size; ++y) {
    int sy = static_cast<int>(static_cast<std::int64_t>(y) * img.height / size);
    for (int x = 0; x < size; ++x) {
      int sx = static_cast<int>(static_cast<std::int64_t>(x) * img.width / size);
      const std::uint8_t* px = img.pixel(sx, sy);
      out.set_pixel(x, y, px[0], px[1], px[2]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weight model: L unshared branches of stride-2 valid 3x3 convolutions with
// ReLU, global average pooling, and an affine head to one scalar each.
// ---------------------------------------------------------------------------

struct ConvLayer {
  static constexpr int kKernel = 3;
  static constexpr int kStride = 2;
  int in_channels = 0, out_channels = 0;
  std::vector<double> weights;  // out x in x 3 x 3
  std::vector<double> bias;     // out

  ConvLayer() = default;
  ConvLayer(int in, int out)
      : in_channels(in),
        out_channels(out),
        weights(static_cast<std::size_t>(out) * in * kKernel * kKernel, 0.0),
        bias(out, 0.0) {}

  double& w(int oc, int ic, int ky, int kx) {
    return weights[((static_cast<std::size_t>(oc) * in_channels + ic) *
                        kKernel +
                    ky) *
                       kKernel +
                   kx];
  }
  double w(int oc, int ic, int ky, int kx) const {
    return weights[((static_cast<std::size_t>(oc) * in_channels + ic) *
                        kKernel +
                    ky) *
                       kKernel +
                   kx];
  }

  static int out_extent(int in_extent) {
    return (in_extent - kKernel) / kStride + 1;
  }
};

struct Branch {
  std::vector<ConvLayer> convs;
  std::vector<double> head_weights;
  double head_bias = 0.0;
};

struct WeightModelSpec {
  int branch_count = 6;
  int input_size = 64;
  std::vector<int> conv_widths = {8, 16, 32, 64};
  std::uint64_t seed = 0;
};

struct WeightModel {
  WeightModelSpec spec;
  std::vector<Branch> branches;
  std::vector<double> train_loss;  // per-epoch history from the trainer
  std::vector<double> val_loss;
};

// Conv kernels start from a seeded uniform(-0.05, 0.05); heads start at
// zero so an untrained model weighs all levels equally.
inline WeightModel make_weight_model(const WeightModelSpec& spec) {
  if (spec.branch_count < 1 || spec.input_size < 1)
    fail(ErrorKind::InvalidSpec, "weight model needs branches and an input");
  int extent = spec.input_size;
  for (std::size_t i = 0; i < spec.conv_widths.size(); ++i) {
    if (extent < ConvLayer::kKernel)
      fail(ErrorKind::InvalidSpec,
           "input too small for conv layer " + std::to_string(i));
    extent = ConvLayer::out_extent(extent);
  }
  WeightModel model;
  model.spec = spec;
  Rng rng(spec.seed);
  for (int b = 0; b < spec.branch_count; ++b) {
    Branch branch;
    int in_ch = 3;
    for (int width : spec.conv_widths) {
      ConvLayer layer(in_ch, width);
      for (double& v : layer.weights) v = rng.next_double(-0.05, 0.05);
      branch.convs.push_back(std::move(layer));
      in_ch = width;
    }
    branch.head_weights.assign(in_ch, 0.0);
    branch.head_bias = 0.0;
    model.branches.push_back(std::move(branch));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

struct BranchActivations {
  Tensor input;
  std::vector<Tensor> conv_out;  // post-ReLU
  std::vector<double> gap;
  double scalar = 0.0;
};

inline Tensor conv_forward(const ConvLayer& layer, const Tensor& in) {
  if (in.channels != layer.in_channels)
    fail(ErrorKind::ShapeMismatch, "conv input channel mismatch");
  if (in.height < ConvLayer::kKernel || in.width < ConvLayer::kKernel)
    fail(ErrorKind::ShapeMismatch, "conv input smaller than kernel");
  Tensor out(layer.out_channels, ConvLayer::out_extent(in.height),
             ConvLayer::out_extent(in.width));
  for (int oc = 0; oc < out.channels; ++oc)
    for (int oy = 0; oy < out.height; ++oy)
      for (int ox = 0; ox < out.width; ++ox) {
        double sum = layer.bias[oc];
        int iy = oy * ConvLayer::kStride, ix = ox * ConvLayer::kStride;
        for (int ic = 0; ic < in.channels; ++ic)
          for (int ky = 0; ky < ConvLayer::kKernel; ++ky)
            for (int kx = 0; kx < ConvLayer::kKernel; ++kx)
              sum += layer.w(oc, ic, ky, kx) * in.at(ic, iy + ky, ix + kx);
        out.at(oc, oy, ox) = sum;
      }
  return out;
}

inline double branch_forward(const Branch& branch, Tensor input,
                             BranchActivations* acts) {
  if (acts) acts->input = input;
  Tensor cur = std::move(input);
  if (acts) acts->conv_out.clear();
  for (const ConvLayer& layer : branch.convs) {
    cur = conv_forward(layer, cur);
    for (double& v : cur.values) v = std::max(0.0, v);
    if (acts) acts->conv_out.push_back(cur);
  }
  if (static_cast<std::size_t>(cur.channels) != branch.head_weights.size())
    fail(ErrorKind::ShapeMismatch, "head width differs from conv output");
  std::vector<double> gap(cur.channels, 0.0);
  double inv_hw = 1.0 / (static_cast<double>(cur.height) * cur.width);
  for (int c = 0; c < cur.channels; ++c) {
    double sum = 0.0;
    for (int y = 0; y < cur.height; ++y)
      for (int x = 0; x < cur.width; ++x) sum += cur.at(c, y, x);
    gap[c] = sum * inv_hw;
  }
  double scalar = branch.head_bias;
  for (int c = 0; c < cur.channels; ++c)
    scalar += branch.head_weights[c] * gap[c];
  if (acts) {
    acts->gap = std::move(gap);
    acts->scalar = scalar;
  }
  return scalar;
}

struct ConvGrads {
  std::vector<double> weights, bias;
};
struct BranchGrads {
  std::vector<ConvGrads> convs;
  std::vector<double> head_weights;
  double head_bias = 0.0;
};
struct ModelGrads {
  std::vector<BranchGrads> branches;
};

inline ModelGrads make_zero_grads(const WeightModel& model) {
  ModelGrads g;
  g.branches.resize(model.branches.size());
  for (std::size_t b = 0; b < model.branches.size(); ++b) {
    const Branch& branch = model.branches[b];
    BranchGrads& bg = g.branches[b];
    bg.convs.resize(branch.convs.size());
    for (std::size_t l = 0; l < branch.convs.size(); ++l) {
      bg.convs[l].weights.assign(branch.convs[l].weights.size(), 0.0);
      bg.convs[l].bias.assign(branch.convs[l].bias.size(), 0.0);
    }
    bg.head_weights.assign(branch.head_weights.size(), 0.0);
    bg.head_bias = 0.0;
  }
  return g;
}

// Accumulates d(loss)/d(branch params) for d(loss)/d(scalar) = d_scalar.
inline void branch_backward(const Branch& branch,
                            const BranchActivations& acts, double d_scalar,
                            BranchGrads& grads) {
  const Tensor& last =
      branch.convs.empty() ? acts.input : acts.conv_out.back();
  grads.head_bias += d_scalar;
  for (std::size_t c = 0; c < branch.head_weights.size(); ++c)
    grads.head_weights[c] += d_scalar * acts.gap[c];

  // Through global average pooling: every spatial position shares the
  // channel gradient equally.
  Tensor d_cur(last.channels, last.height, last.width);
  double inv_hw = 1.0 / (static_cast<double>(last.height) * last.width);
  for (int c = 0; c < last.channels; ++c) {
    double g = d_scalar * branch.head_weights[c] * inv_hw;
    for (int y = 0; y < last.height; ++y)
      for (int x = 0; x < last.width; ++x) d_cur.at(c, y, x) = g;
  }

  for (int l = static_cast<int>(branch.convs.size()) - 1; l >= 0; --l) {
    const ConvLayer& layer = branch.convs[l];
    const Tensor& out = acts.conv_out[l];
    const Tensor& in = (l == 0) ? acts.input : acts.conv_out[l - 1];
    // ReLU: zero activations pass no gradient.
    for (std::size_t i = 0; i < d_cur.values.size(); ++i)
      if (out.values[i] <= 0.0) d_cur.values[i] = 0.0;

    Tensor d_in(in.channels, in.height, in.width);
    ConvGrads& cg = grads.convs[l];
    for (int oc = 0; oc < out.channels; ++oc)
      for (int oy = 0; oy < out.height; ++oy)
        for (int ox = 0; ox < out.width; ++ox) {
          double g = d_cur.at(oc, oy, ox);
          if (g == 0.0) continue;
          cg.bias[oc] += g;
          int iy = oy * ConvLayer::kStride, ix = ox * ConvLayer::kStride;
          for (int ic = 0; ic < in.channels; ++ic)
            for (int ky = 0; ky < ConvLayer::kKernel; ++ky)
              for (int kx = 0; kx < ConvLayer::kKernel; ++kx) {
                std::size_t wi =
                    ((static_cast<std::size_t>(oc) * in.channels + ic) *
                         ConvLayer::kKernel +
                     ky) *
                        ConvLayer::kKernel +
                    kx;
                cg.weights[wi] += g * in.at(ic, iy + ky, ix + kx);
                d_in.at(ic, iy + ky, ix + kx) += layer.weights[wi] * g;
              }
        }
    d_cur = std::move(d_in);
  }
}

inline WeightVector predict_weights_with(const WeightModel& model,
                                         const std::vector<Tensor>& inputs,
                                         std::vector<BranchActivations>* acts) {
  if (inputs.size() != model.branches.size())
    fail(ErrorKind::ShapeMismatch, "one input per branch required");
  std::vector<double> scalars(model.branches.size());
  if (acts) acts->assign(model.branches.size(), BranchActivations{});
  for (std::size_t b = 0; b < model.branches.size(); ++b)
    scalars[b] = branch_forward(model.branches[b], inputs[b],
                                acts ? &(*acts)[b] : nullptr);
  return softmax(scalars);
}

inline WeightVector predict_weights(const WeightModel& model,
                                    const std::vector<Tensor>& inputs) {
  return predict_weights_with(model, inputs, nullptr);
}

inline WeightVector predict_weights(const WeightModel& model,
                                    const PatchStack& stack) {
  std::vector<Tensor> inputs;
  inputs.reserve(stack.size());
  for (const Patch& p : stack)
    inputs.push_back(branch_input(p.pixels, model.spec.input_size));
  return predict_weights(model, inputs);
}

// Full chain: branch scalars -> softmax weights -> fuse -> cross-entropy.
// Returns the loss and accumulates parameter gradients into `grads`.
inline double loss_gradient(const WeightModel& model,
                            const std::vector<Tensor>& inputs,
                            const PredictionStack& predictions,
                            const std::vector<double>& gt, ModelGrads& grads) {
  check_prediction_stack(predictions);
  if (predictions.size() != model.branches.size())
    fail(ErrorKind::ShapeMismatch, "stack height differs from branch count");
  if (gt.size() != predictions.front().size())
    fail(ErrorKind::ShapeMismatch, "label length differs from class count");

  std::vector<BranchActivations> acts;
  WeightVector w = predict_weights_with(model, inputs, &acts);
  FusedResult fused = weighted_fuse(w, predictions);
  double loss = fusion_loss(fused.w_softmax, gt);

  std::size_t levels = predictions.size(), classes = gt.size();
  // d(loss)/d(w_sum_i) of softmax + cross-entropy.
  std::vector<double> d_sum(classes);
  for (std::size_t i = 0; i < classes; ++i)
    d_sum[i] = fused.w_softmax[i] - gt[i];
  // d(loss)/d(w_l): each weight scales its row.
  std::vector<double> d_w(levels, 0.0);
  for (std::size_t l = 0; l < levels; ++l)
    for (std::size_t i = 0; i < classes; ++i)
      d_w[l] += d_sum[i] * predictions[l][i];
  // Through the weight softmax: d(loss)/d(s_l) = w_l (d_w_l - sum_m d_w_m w_m).
  double mix = 0.0;
  for (std::size_t l = 0; l < levels; ++l) mix += d_w[l] * w[l];
  for (std::size_t l = 0; l < levels; ++l) {
    double d_scalar = w[l] * (d_w[l] - mix);
    branch_backward(model.branches[l], acts[l], d_scalar, grads.branches[l]);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Trainer: Adam on the mean fusion loss, deterministic split and shuffles,
// early stopping on validation loss with best-parameter restore.
// ---------------------------------------------------------------------------

struct WeigherSample {
  std::vector<Raster> inputs;   // one subsampled patch per level
  PredictionStack predictions;  // per-level class distributions
  std::vector<double> gt;       // one-hot over the prediction classes
};

inline WeigherSample make_weigher_sample(const PatchStack& stack,
                                         const Expert& classifier,
                                         std::vector<double> gt,
                                         int input_size) {
  WeigherSample s;
  s.inputs.reserve(stack.size());
  s.predictions.reserve(stack.size());
  for (const Patch& p : stack) {
    s.inputs.push_back(subsample_raster(p.pixels, input_size));
    s.predictions.push_back(classifier.classify(p));
  }
  s.gt = std::move(gt);
  return s;
}

struct WeigherTrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 128;
  int max_epochs = 40;
  int patience = 5;
  double validation_fraction = 0.10;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  std::uint64_t seed = 0;
};

namespace detail {

struct AdamState {
  ModelGrads m, v;
  long long step = 0;
};

inline void adam_update(WeightModel& model, const ModelGrads& grads,
                        AdamState& state, const WeigherTrainConfig& cfg) {
  ++state.step;
  double correction1 = 1.0 - std::pow(cfg.beta1, state.step);
  double correction2 = 1.0 - std::pow(cfg.beta2, state.step);
  auto update = [&](double& param, double g, double& m, double& v) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    double mhat = m / correction1, vhat = v / correction2;
    param -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  };
  for (std::size_t b = 0; b < model.branches.size(); ++b) {
    Branch& branch = model.branches[b];
    const BranchGrads& bg = grads.branches[b];
    BranchGrads& ms = state.m.branches[b];
    BranchGrads& vs = state.v.branches[b];
    for (std::size_t l = 0; l < branch.convs.size(); ++l) {
      for (std::size_t i = 0; i < branch.convs[l].weights.size(); ++i)
        update(branch.convs[l].weights[i], bg.convs[l].weights[i],
               ms.convs[l].weights[i], vs.convs[l].weights[i]);
      for (std::size_t i = 0; i < branch.convs[l].bias.size(); ++i)
        update(branch.convs[l].bias[i], bg.convs[l].bias[i],
               ms.convs[l].bias[i], vs.convs[l].bias[i]);
    }
    for (std::size_t i = 0; i < branch.head_weights.size(); ++i)
      update(branch.head_weights[i], bg.head_weights[i], ms.head_weights[i],
             vs.head_weights[i]);
    update(branch.head_bias, bg.head_bias, ms.head_bias, vs.head_bias);
  }
}

inline std::vector<Tensor> sample_inputs(const WeigherSample& s) {
  std::vector<Tensor> inputs;
  inputs.reserve(s.inputs.size());
  for (const Raster& r : s.inputs) {
    Tensor t(3, r.height, r.width);
    const std::uint8_t* p = r.data.data();
    for (int y = 0; y < r.height; ++y)
      for (int x = 0; x < r.width; ++x, p += 3)
        for (int c = 0; c < 3; ++c) t.at(c, y, x) = p[c] / 255.0;
    inputs.push_back(std::move(t));
  }
  return inputs;
}

inline double mean_fusion_loss(const WeightModel& model,
                               const std::vector<WeigherSample>& dataset,
                               const std::vector<std::size_t>& subset) {
  if (subset.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t idx : subset) {
    const WeigherSample& s = dataset[idx];
    WeightVector w = predict_weights(model, sample_inputs(s));
    total += fusion_loss(weighted_fuse(w, s.predictions).w_softmax, s.gt);
  }
  return total / subset.size();
}

}  // namespace detail

inline WeightModel train_weigher(const std::vector<WeigherSample>& dataset,
                                 const WeightModelSpec& spec,
                                 const WeigherTrainConfig& config) {
  if (dataset.empty())
    fail(ErrorKind::EmptyDataset, "weigher training set is empty");
  for (const WeigherSample& s : dataset) {
    if (static_cast<int>(s.inputs.size()) != spec.branch_count ||
        s.predictions.size() != s.inputs.size())
      fail(ErrorKind::ShapeMismatch, "sample level count differs from model");
    check_prediction_stack(s.predictions);
    if (s.gt.size() != s.predictions.front().size())
      fail(ErrorKind::ShapeMismatch, "sample label length differs");
  }

  WeightModel model = make_weight_model(spec);
  Rng rng(config.seed);

  std::vector<std::size_t> indices(dataset.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  Rng split_rng = rng.fork(1);
  split_rng.shuffle(indices);
  std::size_t val_count = static_cast<std::size_t>(
      dataset.size() * config.validation_fraction);
  std::vector<std::size_t> val(indices.begin(), indices.begin() + val_count);
  std::vector<std::size_t> train(indices.begin() + val_count, indices.end());
  if (train.empty()) train.swap(val);

  detail::AdamState adam;
  adam.m = make_zero_grads(model);
  adam.v = make_zero_grads(model);

  std::vector<Branch> best_params = model.branches;
  double best_val = std::numeric_limits<double>::infinity();
  int stale = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    Rng epoch_rng = rng.fork(2).fork(epoch);
    epoch_rng.shuffle(train);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < train.size();
         start += config.batch_size) {
      std::size_t stop =
          std::min(train.size(), start + config.batch_size);
      ModelGrads grads = make_zero_grads(model);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        const WeigherSample& s = dataset[train[i]];
        batch_loss += loss_gradient(model, detail::sample_inputs(s),
                                    s.predictions, s.gt, grads);
      }
      double inv = 1.0 / static_cast<double>(stop - start);
      for (BranchGrads& bg : grads.branches) {
        for (ConvGrads& cg : bg.convs) {
          for (double& v : cg.weights) v *= inv;
          for (double& v : cg.bias) v *= inv;
        }
        for (double& v : bg.head_weights) v *= inv;
        bg.head_bias *= inv;
      }
      detail::adam_update(model, grads, adam, config);
      epoch_loss += batch_loss;
      seen += stop - start;
    }
    model.train_loss.push_back(epoch_loss / static_cast<double>(seen));
    double vloss = val.empty()
                       ? model.train_loss.back()
                       : detail::mean_fusion_loss(model, dataset, val);
    model.val_loss.push_back(vloss);
    if (vloss < best_val) {
      best_val = vloss;
      best_params = model.branches;
      stale = 0;
    } else if (++stale > config.patience) {
      break;
    }
  }
  model.branches = std::move(best_params);
  return model;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline void write_weigher(const WeightModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoFailure, "cannot write " + path);
  out << "wsikit-weigher 1\n";
  out << "branches " << model.spec.branch_count << "\ninput "
      << model.spec.input_size << "\nwidths " << model.spec.conv_widths.size();
  for (int w : model.spec.conv_widths) out << ' ' << w;
  out << "\nseed " << model.spec.seed << '\n';
  auto write_series = [&](const char* name, const std::vector<double>& v) {
    out << name << ' ' << v.size();
    for (double x : v) out << ' ' << format_double(x);
    out << '\n';
  };
  write_series("train_loss", model.train_loss);
  write_series("val_loss", model.val_loss);
  for (std::size_t b = 0; b < model.branches.size(); ++b) {
    const Branch& branch = model.branches[b];
    out << "branch " << b << '\n';
    for (std::size_t l = 0; l < branch.convs.size(); ++l) {
      const ConvLayer& layer = branch.convs[l];
      out << "conv " << l << ' ' << layer.in_channels << ' '
          << layer.out_channels << '\n';
      out << "w";
      for (double v : layer.weights) out << ' ' << format_double(v);
      out << "\nb";
      for (double v : layer.bias) out << ' ' << format_double(v);
      out << '\n';
    }
    out << "head";
    for (double v : branch.head_weights) out << ' ' << format_double(v);
    out << ' ' << format_double(branch.head_bias) << '\n';
  }
  if (!out) fail(ErrorKind::IoFailure, "short write to " + path);
}

inline WeightModel read_weigher(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoFailure, "cannot read " + path);
  auto expect = [&](const std::string& word) {
    std::string tok;
    if (!(in >> tok) || tok != word)
      fail(ErrorKind::ParseError, path + ": expected '" + word + "'");
  };
  auto next_double = [&]() {
    std::string tok;
    if (!(in >> tok)) fail(ErrorKind::ParseError, path + ": truncated");
    return parse_double(tok);
  };
  expect("wsikit-weigher");
  int version;
  if (!(in >> version) || version != 1)
    fail(ErrorKind::ParseError, path + ": unsupported version");
  WeightModelSpec spec;
  expect("branches");
  in >> spec.branch_count;
  expect("input");
  in >> spec.input_size;
  expect("widths");
  std::size_t width_count;
  in >> width_count;
  spec.conv_widths.assign(width_count, 0);
  for (int& w : spec.conv_widths) in >> w;
  expect("seed");
  in >> spec.seed;
  if (!in) fail(ErrorKind::ParseError, path + ": bad header");

  WeightModel model = make_weight_model(spec);
  auto read_series = [&](const char* name, std::vector<double>& v) {
    expect(name);
    std::size_t n;
    in >> n;
    v.clear();
    for (std::size_t i = 0; i < n; ++i) v.push_back(next_double());
  };
  read_series("train_loss", model.train_loss);
  read_series("val_loss", model.val_loss);
  for (int b = 0; b < spec.branch_count; ++b) {
    expect("branch");
    int bi;
    in >> bi;
    Branch& branch = model.branches[b];
    for (std::size_t l = 0; l < branch.convs.size(); ++l) {
      expect("conv");
      int li, ic, oc;
      in >> li >> ic >> oc;
      ConvLayer& layer = branch.convs[l];
      if (!in || ic != layer.in_channels || oc != layer.out_channels)
        fail(ErrorKind::ParseError, path + ": conv shape mismatch");
      expect("w");
      for (double& v : layer.weights) v = next_double();
      expect("b");
      for (double& v : layer.bias) v = next_double();
    }
    expect("head");
    for (double& v : branch.head_weights) v = next_double();
    branch.head_bias = next_double();
  }
  return model;
}

}  // namespace wsikit
