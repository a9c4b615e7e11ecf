#include "catch_amalgamated.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "wsikit/experts.hpp"
#include "wsikit/fusion.hpp"
#include "wsikit/synth.hpp"

using namespace wsikit;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::IoFailure;
}

fs::path scratch_file(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "wsikit_fusion";
  fs::create_directories(dir);
  return dir / name;
}

Tensor random_tensor(Rng& rng, int channels, int size) {
  Tensor t(channels, size, size);
  for (double& v : t.values) v = rng.next_double(0.1, 0.9);
  return t;
}

std::vector<double> random_row(Rng& rng, int classes) {
  std::vector<double> row(classes);
  double sum = 0.0;
  for (double& v : row) {
    v = rng.next_double(0.05, 1.0);
    sum += v;
  }
  for (double& v : row) v /= sum;
  return row;
}

double loss_of(const WeightModel& model, const std::vector<Tensor>& inputs,
               const PredictionStack& p, const std::vector<double>& gt) {
  return fusion_loss(weighted_fuse(predict_weights(model, inputs), p).w_softmax,
                     gt);
}

// Every trainable parameter in the order ModelGrads flattens to.
std::vector<double*> param_ptrs(WeightModel& model) {
  std::vector<double*> ptrs;
  for (Branch& b : model.branches) {
    for (ConvLayer& c : b.convs) {
      for (double& v : c.weights) ptrs.push_back(&v);
      for (double& v : c.bias) ptrs.push_back(&v);
    }
    for (double& v : b.head_weights) ptrs.push_back(&v);
    ptrs.push_back(&b.head_bias);
  }
  return ptrs;
}

std::vector<double> flat_grads(const ModelGrads& grads) {
  std::vector<double> flat;
  for (const BranchGrads& b : grads.branches) {
    for (const ConvGrads& c : b.convs) {
      flat.insert(flat.end(), c.weights.begin(), c.weights.end());
      flat.insert(flat.end(), c.bias.begin(), c.bias.end());
    }
    flat.insert(flat.end(), b.head_weights.begin(), b.head_weights.end());
    flat.push_back(b.head_bias);
  }
  return flat;
}

bool models_equal(const WeightModel& a, const WeightModel& b) {
  if (a.branches.size() != b.branches.size()) return false;
  for (std::size_t i = 0; i < a.branches.size(); ++i) {
    const Branch& x = a.branches[i];
    const Branch& y = b.branches[i];
    if (x.head_weights != y.head_weights || x.head_bias != y.head_bias)
      return false;
    if (x.convs.size() != y.convs.size()) return false;
    for (std::size_t l = 0; l < x.convs.size(); ++l)
      if (x.convs[l].weights != y.convs[l].weights ||
          x.convs[l].bias != y.convs[l].bias)
        return false;
  }
  return true;
}

// Samples for a routing task where one level always carries the truth and
// the other levels always point at the wrong class.
std::vector<WeigherSample> routing_dataset(int count, int right_level,
                                           int levels, int input_size,
                                           std::uint64_t seed) {
  std::vector<WeigherSample> dataset;
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    int truth = static_cast<int>(rng.next_below(3));
    WeigherSample s;
    s.gt.assign(3, 0.0);
    s.gt[truth] = 1.0;
    for (int l = 0; l < levels; ++l) {
      Raster img(input_size, input_size);
      for (std::uint8_t& v : img.data)
        v = static_cast<std::uint8_t>(rng.next_below(256));
      s.inputs.push_back(std::move(img));
      std::vector<double> row(3, 0.0);
      row[l == right_level ? truth : (truth + 1 + l % 2) % 3] = 1.0;
      s.predictions.push_back(std::move(row));
    }
    dataset.push_back(std::move(s));
  }
  return dataset;
}

}  // namespace

TEST_CASE("prediction stacks must be rectangular and non-empty") {
  REQUIRE(kind_of([] { check_prediction_stack({}); }) ==
          ErrorKind::ShapeMismatch);
  REQUIRE(kind_of([] { check_prediction_stack({{}}); }) ==
          ErrorKind::ShapeMismatch);
  REQUIRE(kind_of([] {
            check_prediction_stack({{0.5, 0.5}, {1.0, 0.0, 0.0}});
          }) == ErrorKind::ShapeMismatch);
  check_prediction_stack({{0.5, 0.5}, {0.2, 0.8}});  // accepted

  REQUIRE(kind_of([] {
            weighted_fuse({0.5, 0.3, 0.2}, {{1.0, 0.0}, {0.0, 1.0}});
          }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("weighted fusion scales rows and sums columns") {
  FusedResult r = weighted_fuse({2.0, 3.0}, {{1.0, 0.0}, {0.0, 1.0}});
  REQUIRE(r.w_pred == std::vector<std::vector<double>>{{2.0, 0.0}, {0.0, 3.0}});
  REQUIRE(r.w_sum == std::vector<double>{2.0, 3.0});
  REQUIRE(r.w_softmax[0] + r.w_softmax[1] == Catch::Approx(1.0).epsilon(1e-15));
  REQUIRE(r.w_softmax[1] > r.w_softmax[0]);
}

TEST_CASE("fusing agreeing uniform levels stays uniform") {
  FusedResult r = weighted_fuse({0.7, 0.3}, {{0.5, 0.5}, {0.5, 0.5}});
  REQUIRE(r.w_sum[0] == r.w_sum[1]);
  REQUIRE(r.w_softmax == std::vector<double>{0.5, 0.5});
  REQUIRE(fusion_loss(r.w_softmax, {1.0, 0.0}) ==
          Catch::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("the six-level fusion example reproduces frozen reference values") {
  WeightVector w = {0.5, 0.3, 0.2, 0.0, 0.0, 0.0};
  double u = 1.0 / 3.0;
  PredictionStack p = {{0.9, 0.05, 0.05}, {0.1, 0.8, 0.1}, {0.2, 0.2, 0.6},
                       {u, u, u},          {u, u, u},       {u, u, u}};
  FusedResult r = weighted_fuse(w, p);
  REQUIRE(r.w_sum[0] == Catch::Approx(0.52).epsilon(1e-12));
  REQUIRE(r.w_sum[1] == Catch::Approx(0.305).epsilon(1e-12));
  REQUIRE(r.w_sum[2] == Catch::Approx(0.175).epsilon(1e-12));

  REQUIRE(std::abs(r.w_softmax[0] - 0.39765197742666040) < 1e-12);
  REQUIRE(std::abs(r.w_softmax[1] - 0.32072279856306056) < 1e-12);
  REQUIRE(std::abs(r.w_softmax[2] - 0.28162522401027904) < 1e-12);
  REQUIRE(std::abs(fusion_loss(r.w_softmax, {1.0, 0.0, 0.0}) -
                   0.92217808480961331) < 1e-12);
}

TEST_CASE("fusion loss clamps vanishing probabilities") {
  REQUIRE(fusion_loss({0.0, 1.0}, {1.0, 0.0}) ==
          Catch::Approx(-std::log(1e-12)).epsilon(1e-15));
}

TEST_CASE("branch inputs subsample by nearest neighbor and scale to unit") {
  Raster img(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      img.set_pixel(x, y, static_cast<std::uint8_t>(x * 8 + y),
                    static_cast<std::uint8_t>(x * 10), 200);
  Tensor t = branch_input(img, 4);
  REQUIRE(t.channels == 3);
  REQUIRE(t.height == 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const std::uint8_t* px = img.pixel(2 * x, 2 * y);
      REQUIRE(t.at(0, y, x) == px[0] / 255.0);
      REQUIRE(t.at(1, y, x) == px[1] / 255.0);
      REQUIRE(t.at(2, y, x) == px[2] / 255.0);
    }

  Raster small = subsample_raster(img, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      REQUIRE(small.pixel(x, y)[0] == img.pixel(2 * x, 2 * y)[0]);

  // Upsampling replicates source pixels instead of interpolating.
  Raster tiny(2, 2);
  tiny.set_pixel(0, 0, 10, 0, 0);
  tiny.set_pixel(1, 0, 20, 0, 0);
  tiny.set_pixel(0, 1, 30, 0, 0);
  tiny.set_pixel(1, 1, 40, 0, 0);
  Raster grown = subsample_raster(tiny, 4);
  REQUIRE(grown.pixel(0, 0)[0] == 10);
  REQUIRE(grown.pixel(1, 0)[0] == 10);
  REQUIRE(grown.pixel(2, 0)[0] == 20);
  REQUIRE(grown.pixel(3, 3)[0] == 40);
}

TEST_CASE("weight models are seeded, bounded, and zero-headed") {
  WeightModelSpec spec;
  WeightModel model = make_weight_model(spec);
  REQUIRE(model.branches.size() == 6);
  for (const Branch& b : model.branches) {
    REQUIRE(b.convs.size() == 4);
    REQUIRE(b.convs[0].in_channels == 3);
    REQUIRE(b.convs[0].out_channels == 8);
    REQUIRE(b.convs[3].out_channels == 64);
    REQUIRE(b.head_weights == std::vector<double>(64, 0.0));
    REQUIRE(b.head_bias == 0.0);
    for (const ConvLayer& c : b.convs)
      for (double v : c.weights) {
        REQUIRE(v > -0.05);
        REQUIRE(v < 0.05);
      }
  }
  // Branches are initialized from one stream, so they differ from each
  // other but reproduce exactly for the same seed.
  REQUIRE(model.branches[0].convs[0].weights !=
          model.branches[1].convs[0].weights);
  REQUIRE(models_equal(model, make_weight_model(spec)));
  WeightModelSpec other = spec;
  other.seed = 99;
  REQUIRE_FALSE(models_equal(model, make_weight_model(other)));
}

TEST_CASE("weight model specs are validated against the conv geometry") {
  WeightModelSpec spec;
  spec.branch_count = 0;
  REQUIRE(kind_of([&] { make_weight_model(spec); }) == ErrorKind::InvalidSpec);

  spec = WeightModelSpec{};
  spec.input_size = 0;
  REQUIRE(kind_of([&] { make_weight_model(spec); }) == ErrorKind::InvalidSpec);

  // 8 -> 3 -> 1 leaves nothing for a third 3x3 layer.
  spec = WeightModelSpec{};
  spec.input_size = 8;
  spec.conv_widths = {4, 4, 4};
  REQUIRE(kind_of([&] { make_weight_model(spec); }) == ErrorKind::InvalidSpec);
}

TEST_CASE("an untrained weigher weighs every level equally") {
  WeightModelSpec spec;
  spec.branch_count = 4;
  spec.input_size = 8;
  spec.conv_widths = {2};
  WeightModel model = make_weight_model(spec);

  Rng rng(5);
  std::vector<Tensor> inputs;
  for (int b = 0; b < 4; ++b) inputs.push_back(random_tensor(rng, 3, 8));
  WeightVector w = predict_weights(model, inputs);
  REQUIRE(w == WeightVector(4, 0.25));

  REQUIRE(kind_of([&] {
            std::vector<Tensor> three(inputs.begin(), inputs.begin() + 3);
            predict_weights(model, three);
          }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("predicted weights form a distribution for trained parameters too") {
  WeightModelSpec spec;
  spec.branch_count = 3;
  spec.input_size = 7;
  spec.conv_widths = {2, 3};
  spec.seed = 8;
  WeightModel model = make_weight_model(spec);
  Rng rng(9);
  for (Branch& b : model.branches) {
    for (double& v : b.head_weights) v = rng.next_double(-0.5, 0.5);
    b.head_bias = rng.next_double(-0.5, 0.5);
  }
  std::vector<Tensor> inputs;
  for (int b = 0; b < 3; ++b) inputs.push_back(random_tensor(rng, 3, 7));
  WeightVector w = predict_weights(model, inputs);
  double sum = 0.0;
  for (double v : w) {
    REQUIRE(v > 0.0);
    sum += v;
  }
  REQUIRE(sum == Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("patch stacks and prebuilt tensors predict identical weights") {
  WeightModelSpec spec;
  spec.branch_count = 2;
  spec.input_size = 6;
  spec.conv_widths = {2};
  spec.seed = 3;
  WeightModel model = make_weight_model(spec);
  Rng rng(4);
  for (Branch& b : model.branches) {
    for (double& v : b.head_weights) v = rng.next_double(-0.5, 0.5);
    b.head_bias = rng.next_double(-0.5, 0.5);
  }

  PatchStack stack(2);
  std::vector<Tensor> inputs;
  for (int l = 0; l < 2; ++l) {
    Raster img(12, 12);
    for (std::uint8_t& v : img.data)
      v = static_cast<std::uint8_t>(rng.next_below(256));
    stack[l].pixels = img;
    inputs.push_back(branch_input(img, 6));
  }
  REQUIRE(predict_weights(model, stack) == predict_weights(model, inputs));
}

TEST_CASE("analytic gradients match central differences") {
  for (std::uint64_t seed : {3ULL, 11ULL}) {
    WeightModelSpec spec;
    spec.branch_count = 3;
    spec.input_size = 7;
    spec.conv_widths = {2, 3};
    spec.seed = seed;
    WeightModel model = make_weight_model(spec);

    // Randomize heads and biases so every parameter carries gradient.
    Rng rng(seed + 100);
    for (Branch& b : model.branches) {
      for (ConvLayer& c : b.convs)
        for (double& v : c.bias) v = rng.next_double(-0.05, 0.2);
      for (double& v : b.head_weights) v = rng.next_double(-0.6, 0.6);
      b.head_bias = rng.next_double(-0.3, 0.3);
    }

    std::vector<Tensor> inputs;
    PredictionStack p;
    for (int l = 0; l < 3; ++l) {
      inputs.push_back(random_tensor(rng, 3, 7));
      p.push_back(random_row(rng, 4));
    }
    std::vector<double> gt(4, 0.0);
    gt[seed % 4] = 1.0;

    ModelGrads grads = make_zero_grads(model);
    double loss = loss_gradient(model, inputs, p, gt, grads);
    REQUIRE(loss == loss_of(model, inputs, p, gt));

    std::vector<double*> params = param_ptrs(model);
    std::vector<double> analytic = flat_grads(grads);
    REQUIRE(params.size() == analytic.size());

    double h = 1e-5;
    for (std::size_t i = 0; i < params.size(); ++i) {
      double orig = *params[i];
      *params[i] = orig + h;
      double up = loss_of(model, inputs, p, gt);
      *params[i] = orig - h;
      double down = loss_of(model, inputs, p, gt);
      *params[i] = orig;
      double numeric = (up - down) / (2 * h);
      double tol = 1e-6 + 1e-4 * std::max(std::abs(numeric),
                                          std::abs(analytic[i]));
      REQUIRE(std::abs(numeric - analytic[i]) < tol);
    }
  }
}

TEST_CASE("gradients also check out for a convolution-free weigher") {
  WeightModelSpec spec;
  spec.branch_count = 2;
  spec.input_size = 4;
  spec.conv_widths = {};  // heads read the pooled input directly
  WeightModel model = make_weight_model(spec);
  Rng rng(6);
  for (Branch& b : model.branches) {
    for (double& v : b.head_weights) v = rng.next_double(-1.0, 1.0);
    b.head_bias = rng.next_double(-0.5, 0.5);
  }
  std::vector<Tensor> inputs = {random_tensor(rng, 3, 4),
                                random_tensor(rng, 3, 4)};
  PredictionStack p = {random_row(rng, 3), random_row(rng, 3)};
  std::vector<double> gt = {0.0, 1.0, 0.0};

  ModelGrads grads = make_zero_grads(model);
  loss_gradient(model, inputs, p, gt, grads);
  std::vector<double*> params = param_ptrs(model);
  std::vector<double> analytic = flat_grads(grads);

  double h = 1e-6;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double orig = *params[i];
    *params[i] = orig + h;
    double up = loss_of(model, inputs, p, gt);
    *params[i] = orig - h;
    double down = loss_of(model, inputs, p, gt);
    *params[i] = orig;
    double numeric = (up - down) / (2 * h);
    REQUIRE(std::abs(numeric - analytic[i]) <
            1e-6 + 1e-4 * std::abs(analytic[i]));
  }
}

TEST_CASE("a label equal to the fused output produces zero gradients") {
  WeightModelSpec spec;
  spec.branch_count = 2;
  spec.input_size = 6;
  spec.conv_widths = {2};
  spec.seed = 12;
  WeightModel model = make_weight_model(spec);
  Rng rng(13);
  std::vector<Tensor> inputs = {random_tensor(rng, 3, 6),
                                random_tensor(rng, 3, 6)};
  PredictionStack p = {random_row(rng, 3), random_row(rng, 3)};

  WeightVector w = predict_weights(model, inputs);
  FusedResult fused = weighted_fuse(w, p);

  ModelGrads grads = make_zero_grads(model);
  loss_gradient(model, inputs, p, fused.w_softmax, grads);
  for (double g : flat_grads(grads)) REQUIRE(g == 0.0);
}

TEST_CASE("levels that all agree leave the weigher nothing to learn") {
  WeightModelSpec spec;
  spec.branch_count = 3;
  spec.input_size = 6;
  spec.conv_widths = {2};
  spec.seed = 14;
  WeightModel model = make_weight_model(spec);
  Rng rng(15);
  for (Branch& b : model.branches) {
    for (double& v : b.head_weights) v = rng.next_double(-0.5, 0.5);
    b.head_bias = rng.next_double(-0.5, 0.5);
  }
  std::vector<Tensor> inputs;
  for (int l = 0; l < 3; ++l) inputs.push_back(random_tensor(rng, 3, 6));
  std::vector<double> row = random_row(rng, 3);
  PredictionStack p = {row, row, row};

  ModelGrads grads = make_zero_grads(model);
  loss_gradient(model, inputs, p, {1.0, 0.0, 0.0}, grads);
  // With identical rows the mixing weights cannot change the fusion, so the
  // scalar gradient collapses to rounding noise.
  for (const BranchGrads& b : grads.branches)
    REQUIRE(std::abs(b.head_bias) < 1e-12);
}

TEST_CASE("weigher training learns to trust the truthful level") {
  std::vector<WeigherSample> dataset = routing_dataset(48, 2, 3, 6, 20);
  WeightModelSpec spec;
  spec.branch_count = 3;
  spec.input_size = 6;
  spec.conv_widths = {2};
  spec.seed = 1;
  WeigherTrainConfig config;
  config.learning_rate = 0.05;
  config.batch_size = 16;
  config.max_epochs = 40;
  config.patience = 40;
  config.seed = 2;

  WeightModel model = train_weigher(dataset, spec, config);
  REQUIRE(model.train_loss.size() == model.val_loss.size());
  REQUIRE(model.train_loss.back() < model.train_loss.front());

  double mean_w2 = 0.0;
  int correct = 0;
  for (const WeigherSample& s : dataset) {
    WeightVector w = predict_weights(model, detail::sample_inputs(s));
    mean_w2 += w[2];
    FusedResult fused = weighted_fuse(w, s.predictions);
    int pred = 0;
    for (int c = 1; c < 3; ++c)
      if (fused.w_softmax[c] > fused.w_softmax[pred]) pred = c;
    int truth = 0;
    for (int c = 1; c < 3; ++c)
      if (s.gt[c] == 1.0) truth = c;
    correct += (pred == truth);
  }
  mean_w2 /= dataset.size();
  REQUIRE(mean_w2 > 0.5);
  REQUIRE(correct >= 46);  // at least 95% routed correctly
}

TEST_CASE("a zero learning rate leaves the weigher untouched") {
  std::vector<WeigherSample> dataset = routing_dataset(12, 0, 2, 5, 30);
  WeightModelSpec spec;
  spec.branch_count = 2;
  spec.input_size = 5;
  spec.conv_widths = {2};
  spec.seed = 7;
  WeigherTrainConfig config;
  config.learning_rate = 0.0;
  config.batch_size = 4;
  config.max_epochs = 6;
  config.patience = 10;
  WeightModel trained = train_weigher(dataset, spec, config);
  REQUIRE(models_equal(trained, make_weight_model(spec)));
  for (std::size_t i = 1; i < trained.train_loss.size(); ++i)
    REQUIRE(trained.train_loss[i] ==
            Catch::Approx(trained.train_loss[0]).epsilon(1e-12));
}

TEST_CASE("weigher training is deterministic in its seeds") {
  std::vector<WeigherSample> dataset = routing_dataset(24, 1, 2, 5, 40);
  WeightModelSpec spec;
  spec.branch_count = 2;
  spec.input_size = 5;
  spec.conv_widths = {2};
  spec.seed = 3;
  WeigherTrainConfig config;
  config.learning_rate = 0.02;
  config.batch_size = 8;
  config.max_epochs = 5;
  config.patience = 10;
  config.seed = 4;

  WeightModel a = train_weigher(dataset, spec, config);
  WeightModel b = train_weigher(dataset, spec, config);
  REQUIRE(models_equal(a, b));
  REQUIRE(a.train_loss == b.train_loss);
  REQUIRE(a.val_loss == b.val_loss);
}

TEST_CASE("weigher training validates its dataset") {
  WeightModelSpec spec;
  spec.branch_count = 2;
  spec.input_size = 5;
  spec.conv_widths = {2};
  WeigherTrainConfig config;

  REQUIRE(kind_of([&] { train_weigher({}, spec, config); }) ==
          ErrorKind::EmptyDataset);

  std::vector<WeigherSample> wrong_levels = routing_dataset(4, 0, 3, 5, 50);
  REQUIRE(kind_of([&] { train_weigher(wrong_levels, spec, config); }) ==
          ErrorKind::ShapeMismatch);

  std::vector<WeigherSample> bad_label = routing_dataset(4, 0, 2, 5, 50);
  bad_label[2].gt = {1.0};
  REQUIRE(kind_of([&] { train_weigher(bad_label, spec, config); }) ==
          ErrorKind::ShapeMismatch);
}

TEST_CASE("without a validation split the training loss stands in") {
  std::vector<WeigherSample> dataset = routing_dataset(10, 0, 2, 5, 60);
  WeightModelSpec spec;
  spec.branch_count = 2;
  spec.input_size = 5;
  spec.conv_widths = {2};
  WeigherTrainConfig config;
  config.learning_rate = 0.01;
  config.batch_size = 5;
  config.max_epochs = 4;
  config.patience = 10;
  config.validation_fraction = 0.0;
  WeightModel model = train_weigher(dataset, spec, config);
  REQUIRE(model.val_loss == model.train_loss);
}

TEST_CASE("weigher samples pair subsampled pixels with expert posteriors") {
  PatchStack stack(3);
  Rng rng(70);
  for (Patch& p : stack) {
    p.pixels = Raster(16, 16);
    for (std::uint8_t& v : p.pixels.data)
      v = static_cast<std::uint8_t>(rng.next_below(256));
  }
  FeatureExpert uniform({"benign", "insitu", "invasive"}, ExpertTrainConfig{});
  WeigherSample s = make_weigher_sample(stack, uniform, {0.0, 1.0, 0.0}, 8);
  REQUIRE(s.inputs.size() == 3);
  REQUIRE(s.predictions.size() == 3);
  REQUIRE(s.gt == std::vector<double>{0.0, 1.0, 0.0});
  for (int l = 0; l < 3; ++l) {
    REQUIRE(s.inputs[l].width == 8);
    REQUIRE(s.inputs[l].data == subsample_raster(stack[l].pixels, 8).data);
    REQUIRE(s.predictions[l] ==
            std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3});
  }
}

TEST_CASE("weigher checkpoints round-trip exactly") {
  std::vector<WeigherSample> dataset = routing_dataset(8, 1, 2, 5, 80);
  WeightModelSpec spec;
  spec.branch_count = 2;
  spec.input_size = 5;
  spec.conv_widths = {2};
  spec.seed = 5;
  WeigherTrainConfig config;
  config.learning_rate = 0.03;
  config.batch_size = 4;
  config.max_epochs = 3;
  config.patience = 10;
  WeightModel model = train_weigher(dataset, spec, config);

  fs::path path = scratch_file("weigher.txt");
  write_weigher(model, path.string());
  WeightModel loaded = read_weigher(path.string());

  REQUIRE(loaded.spec.branch_count == spec.branch_count);
  REQUIRE(loaded.spec.input_size == spec.input_size);
  REQUIRE(loaded.spec.conv_widths == spec.conv_widths);
  REQUIRE(loaded.spec.seed == spec.seed);
  REQUIRE(models_equal(loaded, model));
  REQUIRE(loaded.train_loss == model.train_loss);
  REQUIRE(loaded.val_loss == model.val_loss);

  WeightVector w = predict_weights(model, detail::sample_inputs(dataset[0]));
  WeightVector lw = predict_weights(loaded, detail::sample_inputs(dataset[0]));
  REQUIRE(w == lw);
}

TEST_CASE("weigher checkpoint reading rejects damaged files") {
  REQUIRE(kind_of([] { read_weigher("/nonexistent/weigher.txt"); }) ==
          ErrorKind::IoFailure);

  fs::path bad_magic = scratch_file("bad_magic.txt");
  std::ofstream(bad_magic) << "wsikit-expert 1\n";
  REQUIRE(kind_of([&] { read_weigher(bad_magic.string()); }) ==
          ErrorKind::ParseError);

  fs::path bad_version = scratch_file("bad_version.txt");
  std::ofstream(bad_version) << "wsikit-weigher 2\nbranches 2\n";
  REQUIRE(kind_of([&] { read_weigher(bad_version.string()); }) ==
          ErrorKind::ParseError);

  fs::path truncated = scratch_file("truncated.txt");
  std::ofstream(truncated)
      << "wsikit-weigher 1\nbranches 1\ninput 5\nwidths 1 2\nseed 0\n"
      << "train_loss 0\nval_loss 0\nbranch 0\nconv 0 3 2\nw 1 2 3\n";
  REQUIRE(kind_of([&] { read_weigher(truncated.string()); }) ==
          ErrorKind::ParseError);
}
