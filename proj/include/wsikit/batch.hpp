#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "wsikit/core.hpp"
#include "wsikit/pyramid.hpp"
#include "wsikit/slide_io.hpp"

namespace wsikit {

// ---------------------------------------------------------------------------
// Class-balanced batch production over one or more labeled pyramids.
//
// A "class" here is an ordered group of tumor classes, so the same machinery
// serves the 2-class damaged-vs-normal producer ({Normal}, {Benign, InSitu,
// Invasive}) and the 3-class tumor producer. One-hot labels index the group's
// rank in the configured order.
// ---------------------------------------------------------------------------

enum class SampleKind { Patch, Stack };

struct ProducerParams {
  std::vector<std::vector<TumorClass>> classes;  // ordered, one group per rank
  std::vector<int> depths;                       // allowed quad depths
  bool require_tissue = true;
  int batch_size = 0;  // must divide evenly by the number of groups
  SampleKind kind = SampleKind::Patch;
  std::uint64_t seed = 0;
  // Optional pure per-patch preprocessing, applied right after extraction.
  std::function<Raster(const Raster&)> patch_transform;
};

struct BatchSource {
  const SlideImage* slide = nullptr;
  const TPyramid* pyramid = nullptr;
};

struct LabeledSample {
  Patch patch;                // filled for SampleKind::Patch
  PatchStack stack;           // filled for SampleKind::Stack
  std::vector<double> label;  // one-hot over group ranks
  int class_rank = 0;
  std::size_t source_index = 0;
  std::size_t node_index = 0;
};

struct LabeledBatch {
  std::vector<LabeledSample> samples;
};

inline std::string group_name(const std::vector<TumorClass>& group) {
  std::string name;
  for (TumorClass c : group) {
    if (!name.empty()) name += '+';
    name += class_token(c);
  }
  return name;
}

class BatchGenerator {
 public:
  BatchGenerator(std::vector<BatchSource> sources, ProducerParams params)
      : sources_(std::move(sources)), params_(std::move(params)) {
    validate();
    build_pools();
  }

  int group_count() const { return static_cast<int>(params_.classes.size()); }
  int per_class() const { return params_.batch_size / group_count(); }
  std::size_t pool_size(int rank) const { return pools_[rank].members.size(); }
  const ProducerParams& params() const { return params_; }

  std::vector<std::string> class_names() const {
    std::vector<std::string> names;
    for (const auto& group : params_.classes)
      names.push_back(group_name(group));
    return names;
  }

  LabeledBatch next_batch() {
    LabeledBatch batch;
    batch.samples.reserve(params_.batch_size);
    for (int rank = 0; rank < group_count(); ++rank)
      for (int i = 0; i < per_class(); ++i)
        batch.samples.push_back(draw(rank));
    return batch;
  }

 private:
  struct Pool {
    std::vector<std::pair<std::size_t, std::size_t>> members;  // (source, node)
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    std::uint64_t epoch = 0;
  };

  std::vector<BatchSource> sources_;
  ProducerParams params_;
  std::vector<Pool> pools_;

  void validate() const {
    if (sources_.empty())
      fail(ErrorKind::EmptyDataset, "batch generator needs at least one slide");
    for (const BatchSource& s : sources_)
      if (!s.slide || !s.pyramid)
        fail(ErrorKind::InvalidSpec, "null batch source");
    int groups = group_count();
    if (groups == 0 || params_.batch_size <= 0 ||
        params_.batch_size % groups != 0)
      fail(ErrorKind::InvalidSpec,
           "batch_size must be a positive multiple of the class count");
    for (const auto& group : params_.classes)
      if (group.empty())
        fail(ErrorKind::InvalidSpec, "empty class group");
    if (params_.depths.empty())
      fail(ErrorKind::InvalidSpec, "no quad depths selected");
    if (params_.kind == SampleKind::Stack) {
      // Context stacks exist only for leaves.
      for (const BatchSource& s : sources_)
        for (int d : params_.depths)
          if (d != s.pyramid->depth - 1)
            fail(ErrorKind::InvalidSpec,
                 "stack batches require the leaf depth of every source");
    }
  }

  int rank_of(TumorClass label) const {
    for (std::size_t r = 0; r < params_.classes.size(); ++r)
      for (TumorClass c : params_.classes[r])
        if (c == label) return static_cast<int>(r);
    return -1;
  }

  void build_pools() {
    pools_.assign(params_.classes.size(), Pool{});
    std::vector<bool> seen(params_.classes.size(), false);
    for (std::size_t si = 0; si < sources_.size(); ++si) {
      const TPyramid& pyr = *sources_[si].pyramid;
      for (std::size_t ni = 0; ni < pyr.nodes.size(); ++ni) {
        const Quad& q = pyr.nodes[ni];
        if (!q.label) continue;
        int rank = rank_of(*q.label);
        if (rank < 0) continue;
        seen[rank] = true;
        bool depth_ok = false;
        for (int d : params_.depths) depth_ok |= (q.depth == d);
        if (!depth_ok) continue;
        if (params_.require_tissue && q.quality != QuadQuality::Tissue)
          continue;
        pools_[rank].members.emplace_back(si, ni);
      }
    }
    for (std::size_t r = 0; r < pools_.size(); ++r) {
      if (!seen[r])
        fail(ErrorKind::MissingClass,
             "no source contains class " + group_name(params_.classes[r]));
      pools_[r].order.resize(pools_[r].members.size());
      for (std::size_t i = 0; i < pools_[r].order.size(); ++i)
        pools_[r].order[i] = i;
      reshuffle(static_cast<int>(r));
    }
  }

  // Every (group, epoch) pair gets its own derived stream, so pools wrap
  // around independently without disturbing each other's sequences.
  void reshuffle(int rank) {
    Pool& pool = pools_[rank];
    Rng stream = Rng(params_.seed).fork(rank).fork(pool.epoch);
    stream.shuffle(pool.order);
    pool.cursor = 0;
  }

  LabeledSample draw(int rank) {
    Pool& pool = pools_[rank];
    if (pool.members.empty())
      fail(ErrorKind::Exhausted,
           "class " + group_name(params_.classes[rank]) +
               " has no eligible samples");
    if (pool.cursor == pool.order.size()) {
      ++pool.epoch;
      reshuffle(rank);
    }
    auto [si, ni] = pool.members[pool.order[pool.cursor++]];
    const BatchSource& src = sources_[si];
    const Quad& quad = src.pyramid->nodes[ni];

    LabeledSample sample;
    sample.class_rank = rank;
    sample.source_index = si;
    sample.node_index = ni;
    sample.label.assign(params_.classes.size(), 0.0);
    sample.label[rank] = 1.0;
    if (params_.kind == SampleKind::Patch) {
      sample.patch = extract_patch(*src.slide, quad);
      if (params_.patch_transform)
        sample.patch.pixels = params_.patch_transform(sample.patch.pixels);
    } else {
      sample.stack = context_stack(*src.slide, *src.pyramid, quad);
      if (params_.patch_transform)
        for (Patch& p : sample.stack)
          p.pixels = params_.patch_transform(p.pixels);
    }
    return sample;
  }
};

}  // namespace wsikit
