#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mof/tensor.hpp"

namespace mof {

struct VideoMeta {
  int64_t shape_kind = 0;   // square, cross, diamond, ring
  int64_t color_id = 0;     // red, green, blue, yellow
  int64_t motion_kind = 0;  // sliding (horizontal), falling (vertical)
  int64_t t0 = 0;           // event window start (inclusive)
  int64_t t1 = 0;           // event window end (inclusive)
};

struct VideoTextPair {
  std::string video_id;
  Tensor video;  // [N x C x H x W] f32, values in [0,1]
  std::vector<int64_t> tokens;
  VideoMeta meta;
};

struct Dataset {
  std::vector<VideoTextPair> pairs;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::vector<std::string> vocab;
  uint64_t gen_seed = 0;
  int64_t n_frames = 16;
  int64_t c = 3;
  int64_t h = 16;
  int64_t w = 16;

  const VideoTextPair& pair_by_id(const std::string& id) const;
};

inline constexpr int64_t kShapeKinds = 4;
inline constexpr int64_t kColorIds = 4;
inline constexpr int64_t kMotionKinds = 2;
/// Generation refuses more pairs per split than triples times this.
inline constexpr int64_t kMaxTripleRepeats = 8;

/// Procedural video-text pairs: a colored shape crossing a textured canvas
/// during a short event window, bare texture everywhere else. A sparse
/// uniform sample that misses the window sees no caption evidence at all;
/// window starts dodge the two k=2 sample anchors except on a small quota
/// of held-out videos whose windows are placed over an anchor.
/// Deterministic in seed; per-video substreams make order irrelevant.
Dataset generate_dataset(uint64_t seed, int64_t n_train, int64_t n_test, int64_t n_frames,
                         int64_t c, int64_t h, int64_t w);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

/// Recover the (shape, color, motion) triple a caption encodes. Exactly one
/// token of each attribute class must be present.
VideoMeta decode_caption(const std::vector<int64_t>& tokens);

/// True when any sampled index lands inside the pair's event window.
bool window_hit(const VideoMeta& meta, const std::vector<int64_t>& indices);

const std::vector<std::string>& builtin_vocab();

class Rng;

struct SampledFrames {
  Tensor frames;  // [k x C x H x W]
  std::vector<int64_t> indices;
};

/// Segment-center sampling: index_j = floor((j + 0.5) * N / k). k=N returns
/// every frame.
SampledFrames uniform_sample(const Tensor& video, int64_t k);

/// k distinct frame indices, drawn without replacement and sorted ascending
/// so temporal order survives.
SampledFrames random_sample(const Tensor& video, int64_t k, Rng& rng);

}  // namespace mof
