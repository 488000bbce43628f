#include "mof/encoders.hpp"

#include <algorithm>
#include <cmath>

#include "mof/ops.hpp"
#include "mof/rng.hpp"

namespace mof {

void EncoderConfig::validate() const {
  if (patch < 1 || h < 1 || w < 1 || c < 1 || dh < 1 || d < 1 || umax < 1 || vocab < 1)
    throw ConfigError("encoder config: all dimensions must be positive");
  if (h % patch != 0 || w % patch != 0)
    throw ConfigError("encoder config: frame size " + std::to_string(h) + "x" +
                      std::to_string(w) + " not divisible by patch " + std::to_string(patch));
}

std::vector<Tensor> ModelParams::flat() const {
  return {video.patch_w1, video.patch_b1,     video.patch_w2,   video.patch_b2,
          video.pos_spatial, video.pos_temporal, video.attn_query, video.proj,
          text.embed,        text.proj_t};
}

const std::vector<std::string>& ModelParams::flat_names() {
  static const std::vector<std::string> names = {
      "video.patch_w1", "video.patch_b1", "video.patch_w2",   "video.patch_b2",
      "video.pos_spatial", "video.pos_temporal", "video.attn_query", "video.proj",
      "text.embed",     "text.proj_t"};
  return names;
}

void ModelParams::assign_flat(const std::vector<Tensor>& tensors) {
  if (tensors.size() != 10)
    throw ShapeError("assign_flat: expected 10 tensors, got " + std::to_string(tensors.size()));
  video.patch_w1 = tensors[0];
  video.patch_b1 = tensors[1];
  video.patch_w2 = tensors[2];
  video.patch_b2 = tensors[3];
  video.pos_spatial = tensors[4];
  video.pos_temporal = tensors[5];
  video.attn_query = tensors[6];
  video.proj = tensors[7];
  text.embed = tensors[8];
  text.proj_t = tensors[9];
}

bool ModelParams::all_finite() const {
  for (const Tensor& t : flat())
    if (!t.all_finite()) return false;
  return true;
}

namespace {

Tensor init_matrix(Shape shape, Prec prec, Rng& rng) {
  Tensor t = Tensor::zeros(shape, prec);
  double bound = 1.0 / std::sqrt(static_cast<double>(shape[0]));
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(-bound, bound));
  return t;
}

}  // namespace

ModelParams init_params(const EncoderConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(mix64(seed));
  ModelParams p;
  p.config = cfg;
  p.video.patch_w1 = init_matrix({cfg.patch_dim(), cfg.dh}, cfg.prec, rng);
  p.video.patch_b1 = Tensor::zeros({cfg.dh}, cfg.prec);
  p.video.patch_w2 = init_matrix({cfg.dh, cfg.dh}, cfg.prec, rng);
  p.video.patch_b2 = Tensor::zeros({cfg.dh}, cfg.prec);
  p.video.pos_spatial = init_matrix({cfg.patches_per_frame(), cfg.dh}, cfg.prec, rng);
  p.video.pos_temporal = init_matrix({cfg.umax, cfg.dh}, cfg.prec, rng);
  p.video.attn_query = init_matrix({cfg.dh}, cfg.prec, rng);
  p.video.proj = init_matrix({cfg.dh, cfg.d}, cfg.prec, rng);
  p.text.embed = init_matrix({cfg.vocab, cfg.dh}, cfg.prec, rng);
  p.text.proj_t = init_matrix({cfg.dh, cfg.d}, cfg.prec, rng);
  return p;
}

ModelParams clone_params(const ModelParams& params, Tape& tape) {
  ModelParams out;
  out.config = params.config;
  std::vector<Tensor> staged;
  for (const Tensor& t : params.flat()) staged.push_back(tape.leaf(t));
  out.assign_flat(staged);
  return out;
}

ModelParams clone_params_values(const ModelParams& params) {
  ModelParams out;
  out.config = params.config;
  std::vector<Tensor> copies;
  for (const Tensor& t : params.flat()) copies.push_back(t.clone_values());
  out.assign_flat(copies);
  return out;
}

namespace {

/// Bias broadcast across rows: [rows x n] + ones([rows x 1]) * b[1 x n].
Tensor add_bias(const Tensor& x, const Tensor& b) {
  int64_t rows = x.shape()[0], n = x.shape()[1];
  Tensor b_mat = ops::matmul(Tensor::full({rows, 1}, 1.0, x.prec()), ops::reshape(b, {1, n}));
  return ops::add(x, b_mat);
}

}  // namespace

Tensor encode_video_traced(const ModelParams& params, const Tensor& frames, Tensor* attn_out) {
  const EncoderConfig& cfg = params.config;
  const VideoEncoderParams& vp = params.video;
  if (frames.rank() != 4)
    throw ShapeError("encode_video: frames must be [U x C x H x W], got " +
                     shape_str(frames.shape()));
  int64_t u = frames.shape()[0];
  if (u < 1) throw ShapeError("encode_video: no frames");
  if (u > cfg.umax)
    throw ShapeError("encode_video: " + std::to_string(u) + " frames exceed umax " +
                     std::to_string(cfg.umax));
  if (frames.shape()[1] != cfg.c || frames.shape()[2] != cfg.h || frames.shape()[3] != cfg.w)
    throw ShapeError("encode_video: frames " + shape_str(frames.shape()) +
                     " do not match configured C/H/W");
  if (frames.prec() != vp.patch_w1.prec())
    throw ShapeError("encode_video: frames precision does not match params");

  int64_t p = cfg.patch;
  int64_t py_n = cfg.h / p, px_n = cfg.w / p;
  int64_t np = py_n * px_n;
  int64_t pd = cfg.patch_dim();

  // One row per patch: row u*np + py*px_n + px, column c*p*p + dy*p + dx.
  std::vector<int64_t> idx;
  idx.reserve(static_cast<size_t>(u * np * pd));
  for (int64_t uu = 0; uu < u; ++uu)
    for (int64_t py = 0; py < py_n; ++py)
      for (int64_t px = 0; px < px_n; ++px)
        for (int64_t cc = 0; cc < cfg.c; ++cc)
          for (int64_t dy = 0; dy < p; ++dy)
            for (int64_t dx = 0; dx < p; ++dx)
              idx.push_back(((uu * cfg.c + cc) * cfg.h + py * p + dy) * cfg.w + px * p + dx);
  Tensor patches = ops::elem_gather(frames, std::move(idx), {u * np, pd});

  Tensor h1 = ops::gelu(add_bias(ops::matmul(patches, vp.patch_w1), vp.patch_b1));
  Tensor h2 = add_bias(ops::matmul(h1, vp.patch_w2), vp.patch_b2);

  std::vector<int64_t> tile(static_cast<size_t>(u * np));
  for (int64_t i = 0; i < u * np; ++i) tile[static_cast<size_t>(i)] = i % np;
  Tensor feat = ops::add(h2, ops::row_gather(vp.pos_spatial, tile));

  // Frame tokens: mean over each frame's patches via a constant block
  // averaging matrix.
  Tensor avg = Tensor::zeros({u, u * np}, frames.prec());
  for (int64_t uu = 0; uu < u; ++uu)
    for (int64_t pi = 0; pi < np; ++pi)
      avg.set(uu * (u * np) + uu * np + pi, 1.0 / static_cast<double>(np));
  Tensor tokens = ops::matmul(avg, feat);

  std::vector<int64_t> t_rows(static_cast<size_t>(u));
  for (int64_t i = 0; i < u; ++i) t_rows[static_cast<size_t>(i)] = i;
  tokens = ops::add(tokens, ops::row_gather(vp.pos_temporal, t_rows));

  Tensor scores = ops::matmul(tokens, ops::reshape(vp.attn_query, {cfg.dh, 1}));
  Tensor weights = ops::softmax_rows(ops::transpose(scores));
  if (attn_out) *attn_out = weights.detached().clone_values();
  Tensor pooled = ops::matmul(weights, tokens);

  Tensor out = ops::l2_normalize_rows(ops::matmul(pooled, vp.proj));
  return ops::reshape(out, {cfg.d});
}

Tensor encode_video(const ModelParams& params, const Tensor& frames) {
  return encode_video_traced(params, frames, nullptr);
}

Tensor encode_text(const ModelParams& params, const std::vector<int64_t>& tokens) {
  const TextEncoderParams& tp = params.text;
  if (tokens.empty()) throw ValueError("encode_text: empty token list");
  int64_t vocab = tp.embed.shape()[0];
  for (int64_t id : tokens)
    if (id < 0 || id >= vocab)
      throw ValueError("encode_text: token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(vocab));
  // Sorting fixes the summation order, so any permutation of the same token
  // multiset produces a bitwise-identical embedding.
  std::vector<int64_t> sorted = tokens;
  std::sort(sorted.begin(), sorted.end());
  Tensor rows = ops::row_gather(tp.embed, sorted);
  Tensor meanv = ops::mean(rows, 0);
  Tensor out = ops::l2_normalize_rows(ops::matmul(ops::reshape(meanv, {1, params.config.dh}),
                                                  tp.proj_t));
  return ops::reshape(out, {params.config.d});
}

namespace {

constexpr char kCheckpointMagic[9] = "MOFCKPT1";

Tensor config_tensor(const EncoderConfig& cfg) {
  return Tensor::from_doubles(
      {9},
      {static_cast<double>(cfg.patch), static_cast<double>(cfg.h), static_cast<double>(cfg.w),
       static_cast<double>(cfg.c), static_cast<double>(cfg.dh), static_cast<double>(cfg.d),
       static_cast<double>(cfg.umax), static_cast<double>(cfg.vocab),
       cfg.prec == Prec::f32 ? 0.0 : 1.0},
      Prec::f64);
}

EncoderConfig config_from_tensor(const Tensor& t) {
  if (t.numel() != 9) throw IoError("checkpoint: malformed config record");
  EncoderConfig cfg;
  cfg.patch = static_cast<int64_t>(t.at(0));
  cfg.h = static_cast<int64_t>(t.at(1));
  cfg.w = static_cast<int64_t>(t.at(2));
  cfg.c = static_cast<int64_t>(t.at(3));
  cfg.dh = static_cast<int64_t>(t.at(4));
  cfg.d = static_cast<int64_t>(t.at(5));
  cfg.umax = static_cast<int64_t>(t.at(6));
  cfg.vocab = static_cast<int64_t>(t.at(7));
  cfg.prec = t.at(8) == 0.0 ? Prec::f32 : Prec::f64;
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::vector<io::NamedTensor>& extra) {
  std::vector<io::NamedTensor> records;
  records.push_back({"config", config_tensor(params.config)});
  const auto& names = ModelParams::flat_names();
  auto flat = params.flat();
  for (size_t i = 0; i < flat.size(); ++i) records.push_back({names[i], flat[i].detached()});
  for (const io::NamedTensor& r : extra) records.push_back(r);
  io::write_records_file(path, kCheckpointMagic, records);
}

Checkpoint load_checkpoint(const std::string& path) {
  auto records = io::read_records_file(path, kCheckpointMagic);
  Checkpoint ck;
  ck.params.config = config_from_tensor(io::find_record(records, "config"));
  ck.params.config.validate();
  const auto& names = ModelParams::flat_names();
  std::vector<Tensor> flat;
  for (const std::string& name : names) flat.push_back(io::find_record(records, name));
  ck.params.assign_flat(flat);
  for (const io::NamedTensor& r : records) {
    bool core = r.name == "config";
    for (const std::string& name : names) core = core || r.name == name;
    if (!core) ck.extra.push_back(r);
  }
  return ck;
}

}  // namespace mof
