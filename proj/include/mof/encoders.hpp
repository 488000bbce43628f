#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mof/serialize.hpp"
#include "mof/tape.hpp"
#include "mof/tensor.hpp"

namespace mof {

struct EncoderConfig {
  int64_t patch = 4;
  int64_t h = 16;
  int64_t w = 16;
  int64_t c = 3;
  int64_t dh = 32;
  int64_t d = 16;
  int64_t umax = 32;
  int64_t vocab = 40;
  Prec prec = Prec::f32;

  int64_t patches_per_frame() const { return (h / patch) * (w / patch); }
  int64_t patch_dim() const { return patch * patch * c; }
  void validate() const;
};

struct VideoEncoderParams {
  Tensor patch_w1;      // [P*P*C x Dh]
  Tensor patch_b1;      // [Dh]
  Tensor patch_w2;      // [Dh x Dh]
  Tensor patch_b2;      // [Dh]
  Tensor pos_spatial;   // [patches_per_frame x Dh]
  Tensor pos_temporal;  // [Umax x Dh]
  Tensor attn_query;    // [Dh]
  Tensor proj;          // [Dh x D]
};

struct TextEncoderParams {
  Tensor embed;   // [Vocab x Dh]
  Tensor proj_t;  // [Dh x D]
};

/// Dual-encoder parameter set. The flat enumeration order is part of the
/// contract: optimizer state, checkpoints, and cloning all align to it.
struct ModelParams {
  EncoderConfig config;
  VideoEncoderParams video;
  TextEncoderParams text;

  std::vector<Tensor> flat() const;
  static const std::vector<std::string>& flat_names();
  void assign_flat(const std::vector<Tensor>& tensors);

  bool all_finite() const;
};

/// Fresh parameters: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) per matrix
/// with fan_in its first extent, zero biases, filled in flat order from the
/// seed.
ModelParams init_params(const EncoderConfig& cfg, uint64_t seed);

/// Deep copy staged as fresh leaves of `tape`; mutating either side never
/// affects the other.
ModelParams clone_params(const ModelParams& params, Tape& tape);
/// Deep copy with plain constant tensors.
ModelParams clone_params_values(const ModelParams& params);

/// Video pipeline: patchify; two-layer patch MLP with gelu; add spatial
/// position rows; mean over patches (one token per frame); add temporal
/// position rows; softmax attention pooling with the learned query; linear
/// projection; l2 normalization. Output is a unit-norm [D] tensor,
/// differentiable w.r.t. params and frames.
Tensor encode_video(const ModelParams& params, const Tensor& frames);
/// Same, also exposing the attention weights over frames ([1 x U] values).
Tensor encode_video_traced(const ModelParams& params, const Tensor& frames, Tensor* attn_out);

/// Bag of tokens: mean embedding row, projection, l2 normalization. Token
/// order never matters, bitwise.
Tensor encode_text(const ModelParams& params, const std::vector<int64_t>& tokens);

/// Checkpoint container: magic "MOFCKPT1"; parameter tensors under their
/// flat names, a config record, and any extra records appended by the
/// caller (optimizer state).
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::vector<io::NamedTensor>& extra = {});

struct Checkpoint {
  ModelParams params;
  std::vector<io::NamedTensor> extra;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mof
