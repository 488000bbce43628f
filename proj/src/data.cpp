#include "mof/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mof/rng.hpp"
#include "mof/serialize.hpp"

namespace mof {

namespace {

constexpr char kDatasetMagic[9] = "MOFDATA1";
constexpr uint16_t kDatasetVersion = 1;
constexpr int64_t kShapeSize = 6;

constexpr int64_t kShapeTokenBase = 0;
constexpr int64_t kColorTokenBase = kShapeTokenBase + kShapeKinds;
constexpr int64_t kMotionTokenBase = kColorTokenBase + kColorIds;
constexpr int64_t kFillerTokenBase = kMotionTokenBase + kMotionKinds;

const double kColors[kColorIds][3] = {
    {0.95, 0.15, 0.15},  // red
    {0.15, 0.85, 0.20},  // green
    {0.15, 0.20, 0.95},  // blue
    {0.95, 0.85, 0.15},  // yellow
};

bool shape_mask(int64_t kind, int64_t dy, int64_t dx) {
  switch (kind) {
    case 0:  // square
      return true;
    case 1:  // cross
      return (dy >= 2 && dy <= 3) || (dx >= 2 && dx <= 3);
    case 2:  // diamond
      return std::abs(2.0 * dy - (kShapeSize - 1)) + std::abs(2.0 * dx - (kShapeSize - 1)) <=
             kShapeSize - 1;
    case 3:  // ring
      return dy == 0 || dy == kShapeSize - 1 || dx == 0 || dx == kShapeSize - 1;
  }
  throw ValueError("shape_mask: bad kind " + std::to_string(kind));
}

std::vector<int64_t> uniform_anchor_indices(int64_t n, int64_t k) {
  std::vector<int64_t> idx(static_cast<size_t>(k));
  for (int64_t j = 0; j < k; ++j)
    idx[static_cast<size_t>(j)] = (2 * j + 1) * n / (2 * k);
  return idx;
}

VideoTextPair make_pair(const std::string& id, int64_t triple, bool reveal,
                        const std::vector<double>& texture, uint64_t stream_seed,
                        int64_t n, int64_t c, int64_t h, int64_t w) {
  Rng rng(stream_seed);
  VideoTextPair pair;
  pair.video_id = id;
  pair.meta.shape_kind = triple % kShapeKinds;
  pair.meta.color_id = (triple / kShapeKinds) % kColorIds;
  pair.meta.motion_kind = triple / (kShapeKinds * kColorIds);

  // Window start dodges both k=2 uniform anchors unless the video was picked
  // as one of the split's revealed ones, whose window must overlap an anchor.
  // Sparse uniform probes therefore miss the event on most videos while the
  // revealed few keep it measurable on held-out data.
  int64_t len = std::max<int64_t>(2, n / 4);
  std::vector<int64_t> anchors = uniform_anchor_indices(n, 2);
  std::vector<int64_t> clear_starts, hit_starts;
  for (int64_t s = 0; s + len <= n; ++s) {
    bool clear = true;
    for (int64_t a : anchors) clear = clear && (a < s || a > s + len - 1);
    (clear ? clear_starts : hit_starts).push_back(s);
  }
  const bool want_hit = reveal && !hit_starts.empty();
  const std::vector<int64_t>& starts = want_hit ? hit_starts : clear_starts;
  if (starts.empty())
    throw ValueError("generate_dataset: no feasible event window for " + std::to_string(n) +
                     " frames");
  int64_t t0 = starts[static_cast<size_t>(rng.below(starts.size()))];
  pair.meta.t0 = t0;
  pair.meta.t1 = t0 + len - 1;

  // Every frame outside the event window is bare backdrop texture: the
  // captioned object exists only inside the window, where the colored shape
  // crosses the canvas along its motion axis. A probe that misses the window
  // therefore sees a frame with no caption evidence at all.
  Tensor video = Tensor::zeros({n, c, h, w}, Prec::f32);
  for (int64_t t = 0; t < n; ++t)
    for (int64_t cc = 0; cc < c; ++cc)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          video.set(((t * c + cc) * h + y) * w + x,
                    texture[static_cast<size_t>((cc * h + y) * w + x)]);

  int64_t span_x = w - kShapeSize, span_y = h - kShapeSize;
  for (int64_t t = pair.meta.t0; t <= pair.meta.t1; ++t) {
    double p = len > 1 ? static_cast<double>(t - pair.meta.t0) / static_cast<double>(len - 1)
                       : 1.0;
    int64_t x0 = span_x / 2, y0 = span_y / 2;
    if (pair.meta.motion_kind == 0)
      x0 = static_cast<int64_t>(std::llround(p * static_cast<double>(span_x)));
    else
      y0 = static_cast<int64_t>(std::llround(p * static_cast<double>(span_y)));
    for (int64_t dy = 0; dy < kShapeSize; ++dy)
      for (int64_t dx = 0; dx < kShapeSize; ++dx) {
        if (!shape_mask(pair.meta.shape_kind, dy, dx)) continue;
        for (int64_t cc = 0; cc < c; ++cc)
          video.set(((t * c + cc) * h + y0 + dy) * w + x0 + dx,
                    kColors[pair.meta.color_id][cc < 3 ? cc : 2]);
      }
  }
  pair.video = video;

  pair.tokens = {kShapeTokenBase + pair.meta.shape_kind, kColorTokenBase + pair.meta.color_id,
                 kMotionTokenBase + pair.meta.motion_kind};
  int64_t fillers = rng.range(1, 4);
  int64_t filler_count = static_cast<int64_t>(builtin_vocab().size()) - kFillerTokenBase;
  for (int64_t i = 0; i < fillers; ++i)
    pair.tokens.push_back(kFillerTokenBase + rng.range(0, filler_count));
  return pair;
}

}  // namespace

const std::vector<std::string>& builtin_vocab() {
  static const std::vector<std::string> vocab = {
      "square", "cross",  "diamond", "ring",              // shapes
      "red",    "green",  "blue",    "yellow",            // colors
      "sliding", "falling",                               // motions
      "a",      "the",    "one",     "scene",  "shows",   // fillers
      "clip",   "video",  "with",    "object", "moving",
      "across", "screen", "frame",   "view",   "shot",
      "small",  "bright", "toy",     "simple", "plain",
      "little", "tiny",   "big",     "glowing", "shiny",
      "matte",  "soft",   "pale",    "deep",   "vivid"};
  return vocab;
}

const VideoTextPair& Dataset::pair_by_id(const std::string& id) const {
  for (const VideoTextPair& p : pairs)
    if (p.video_id == id) return p;
  throw ValueError("dataset: no pair with id '" + id + "'");
}

bool window_hit(const VideoMeta& meta, const std::vector<int64_t>& indices) {
  for (int64_t i : indices)
    if (i >= meta.t0 && i <= meta.t1) return true;
  return false;
}

VideoMeta decode_caption(const std::vector<int64_t>& tokens) {
  VideoMeta meta;
  int shapes = 0, colors = 0, motions = 0;
  for (int64_t t : tokens) {
    if (t >= kShapeTokenBase && t < kColorTokenBase) {
      meta.shape_kind = t - kShapeTokenBase;
      ++shapes;
    } else if (t >= kColorTokenBase && t < kMotionTokenBase) {
      meta.color_id = t - kColorTokenBase;
      ++colors;
    } else if (t >= kMotionTokenBase && t < kFillerTokenBase) {
      meta.motion_kind = t - kMotionTokenBase;
      ++motions;
    }
  }
  if (shapes != 1 || colors != 1 || motions != 1)
    throw ValueError("decode_caption: expected exactly one shape, color, and motion token");
  return meta;
}

Dataset generate_dataset(uint64_t seed, int64_t n_train, int64_t n_test, int64_t n_frames,
                         int64_t c, int64_t h, int64_t w) {
  if (n_train < 1 || n_test < 1) throw ValueError("generate_dataset: sizes must be >= 1");
  if (h < 8 || w < 8) throw ValueError("generate_dataset: frames must be at least 8x8");
  if (c < 3) throw ValueError("generate_dataset: need at least 3 channels");
  if (n_frames < 8) throw ValueError("generate_dataset: need at least 8 frames");
  int64_t triples = kShapeKinds * kColorIds * kMotionKinds;
  if (n_train > triples * kMaxTripleRepeats || n_test > triples * kMaxTripleRepeats)
    throw ValueError("generate_dataset: split larger than " + std::to_string(triples) +
                     " triples x " + std::to_string(kMaxTripleRepeats) + " repetitions");

  Dataset ds;
  ds.gen_seed = seed;
  ds.n_frames = n_frames;
  ds.c = c;
  ds.h = h;
  ds.w = w;
  ds.vocab = builtin_vocab();

  // Round-robin triple assignment guarantees every combination appears in
  // both splits and keeps the marginals near-uniform.
  //
  // Training windows always dodge the k=2 uniform anchors, so a sparse
  // training probe never sees the object. The whole corpus gets a reveal
  // budget of one video in ten, spent entirely on the held-out split: those
  // test windows are placed over an anchor so the object stays measurable at
  // test time, while a k=2 probe still misses on >= 90% of videos overall.
  // Which test videos are revealed is a seeded dataset-level draw.
  int64_t total = n_train + n_test;
  auto reveal_flags = [&](int64_t m, int64_t quota, uint64_t tag) {
    Rng pick(substream(seed, tag));
    std::vector<bool> flags(static_cast<size_t>(m), false);
    for (int64_t i : pick.sample_without_replacement(std::min(quota, m), m))
      flags[static_cast<size_t>(i)] = true;
    return flags;
  };
  std::vector<bool> train_reveal(static_cast<size_t>(n_train), false);
  std::vector<bool> test_reveal =
      reveal_flags(n_test, total / 10, static_cast<uint64_t>(total) + 1);

  // One backdrop texture shared by the whole dataset: backgrounds carry no
  // video identity, so the shape, its color, and the event are the only
  // signal.
  std::vector<double> texture(static_cast<size_t>(c * h * w));
  {
    Rng trng(substream(seed, static_cast<uint64_t>(total) + 2));
    for (double& v : texture) v = trng.uniform(0.20, 0.30);
  }

  for (int64_t i = 0; i < total; ++i) {
    bool is_train = i < n_train;
    int64_t within = is_train ? i : i - n_train;
    bool reveal = is_train ? train_reveal[static_cast<size_t>(within)]
                           : test_reveal[static_cast<size_t>(within)];
    char buf[16];
    std::snprintf(buf, sizeof(buf), "v%04lld", static_cast<long long>(i));
    std::string id(buf);
    ds.pairs.push_back(make_pair(id, within % triples, reveal, texture,
                                 substream(seed, static_cast<uint64_t>(i)), n_frames, c, h, w));
    (is_train ? ds.train_ids : ds.test_ids).push_back(id);
  }
  return ds;
}

namespace {

SampledFrames gather_frames(const Tensor& video, std::vector<int64_t> indices) {
  if (video.rank() != 4)
    throw ShapeError("frame sampling: video must be [N x C x H x W], got " +
                     shape_str(video.shape()));
  int64_t frame_elems = video.shape()[1] * video.shape()[2] * video.shape()[3];
  SampledFrames out;
  out.frames = Tensor::zeros({static_cast<int64_t>(indices.size()), video.shape()[1],
                              video.shape()[2], video.shape()[3]},
                             video.prec());
  for (size_t j = 0; j < indices.size(); ++j)
    for (int64_t e = 0; e < frame_elems; ++e)
      out.frames.set(static_cast<int64_t>(j) * frame_elems + e,
                     video.at(indices[j] * frame_elems + e));
  out.indices = std::move(indices);
  return out;
}

}  // namespace

SampledFrames uniform_sample(const Tensor& video, int64_t k) {
  int64_t n = video.shape()[0];
  if (k < 1 || k > n)
    throw ValueError("uniform_sample: k=" + std::to_string(k) + " outside [1, " +
                     std::to_string(n) + "]");
  std::vector<int64_t> idx(static_cast<size_t>(k));
  for (int64_t j = 0; j < k; ++j) idx[static_cast<size_t>(j)] = (2 * j + 1) * n / (2 * k);
  return gather_frames(video, std::move(idx));
}

SampledFrames random_sample(const Tensor& video, int64_t k, Rng& rng) {
  int64_t n = video.shape()[0];
  if (k < 1 || k > n)
    throw ValueError("random_sample: k=" + std::to_string(k) + " outside [1, " +
                     std::to_string(n) + "]");
  return gather_frames(video, rng.sample_without_replacement(k, n));
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(kDatasetMagic, 8);
  io::write_u16(os, kDatasetVersion);
  io::write_u64(os, ds.gen_seed);
  io::write_i64(os, ds.n_frames);
  io::write_i64(os, ds.c);
  io::write_i64(os, ds.h);
  io::write_i64(os, ds.w);
  io::write_u32(os, static_cast<uint32_t>(ds.vocab.size()));
  for (const std::string& word : ds.vocab) io::write_str(os, word);
  io::write_u32(os, static_cast<uint32_t>(ds.train_ids.size()));
  for (const std::string& id : ds.train_ids) io::write_str(os, id);
  io::write_u32(os, static_cast<uint32_t>(ds.test_ids.size()));
  for (const std::string& id : ds.test_ids) io::write_str(os, id);
  io::write_u32(os, static_cast<uint32_t>(ds.pairs.size()));
  for (const VideoTextPair& p : ds.pairs) {
    io::write_str(os, p.video_id);
    io::write_i64(os, p.meta.shape_kind);
    io::write_i64(os, p.meta.color_id);
    io::write_i64(os, p.meta.motion_kind);
    io::write_i64(os, p.meta.t0);
    io::write_i64(os, p.meta.t1);
    io::write_u32(os, static_cast<uint32_t>(p.tokens.size()));
    for (int64_t t : p.tokens) io::write_u32(os, static_cast<uint32_t>(t));
    for (float v : p.video.data<float>()) io::write_f32(os, v);
  }
  os.flush();
  if (!os) throw IoError("write failed for '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  try {
    io::expect_magic(is, kDatasetMagic);
    uint16_t version = io::read_u16(is);
    if (version != kDatasetVersion)
      throw IoError("unsupported dataset version " + std::to_string(version));
    Dataset ds;
    ds.gen_seed = io::read_u64(is);
    ds.n_frames = io::read_i64(is);
    ds.c = io::read_i64(is);
    ds.h = io::read_i64(is);
    ds.w = io::read_i64(is);
    if (ds.n_frames < 1 || ds.c < 1 || ds.h < 1 || ds.w < 1 || ds.n_frames > (1 << 20))
      throw IoError("dataset header has implausible dimensions");
    uint32_t vocab_n = io::read_u32(is);
    for (uint32_t i = 0; i < vocab_n; ++i) ds.vocab.push_back(io::read_str(is));
    uint32_t train_n = io::read_u32(is);
    for (uint32_t i = 0; i < train_n; ++i) ds.train_ids.push_back(io::read_str(is));
    uint32_t test_n = io::read_u32(is);
    for (uint32_t i = 0; i < test_n; ++i) ds.test_ids.push_back(io::read_str(is));
    uint32_t pair_n = io::read_u32(is);
    for (uint32_t i = 0; i < pair_n; ++i) {
      VideoTextPair p;
      p.video_id = io::read_str(is);
      p.meta.shape_kind = io::read_i64(is);
      p.meta.color_id = io::read_i64(is);
      p.meta.motion_kind = io::read_i64(is);
      p.meta.t0 = io::read_i64(is);
      p.meta.t1 = io::read_i64(is);
      uint32_t tok_n = io::read_u32(is);
      for (uint32_t j = 0; j < tok_n; ++j) p.tokens.push_back(io::read_u32(is));
      p.video = Tensor::zeros({ds.n_frames, ds.c, ds.h, ds.w}, Prec::f32);
      auto d = p.video.data<float>();
      for (size_t j = 0; j < d.size(); ++j) d[j] = io::read_f32(is);
      ds.pairs.push_back(std::move(p));
    }
    return ds;
  } catch (const IoError& e) {
    throw IoError(std::string(e.what()) + " in '" + path + "'");
  }
}

}  // namespace mof
