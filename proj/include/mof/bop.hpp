#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mof/data.hpp"
#include "mof/encoders.hpp"
#include "mof/eval.hpp"
#include "mof/optim.hpp"
#include "mof/tape.hpp"

namespace mof {

/// One video's learnable compressed frames plus their optimizer state.
/// `frames` is tape-bound while a phase works on it and detached values in
/// between; the optimizer state persists across phases.
struct MetaFrames {
  std::string video_id;
  Tensor frames;  // [U x C x H x W]
  AdamState opt_state;
  std::vector<int64_t> init_indices;
};

struct FrameMemory {
  std::map<std::string, MetaFrames> entries;

  bool contains(const std::string& id) const { return entries.count(id) != 0; }
  MetaFrames& at(const std::string& id);
  const MetaFrames& at(const std::string& id) const;
};

struct PhaseConfig {
  int64_t u = 2;
  int64_t r = 16;
  int64_t t = 200;  // max phases
  double alpha = 1e-3;
  double beta = 8e-4;
  int64_t inner_steps = 1;
  int64_t batch_size = 16;
  int64_t eval_every = 0;  // 0 resolves to once per epoch
  bool first_order = false;
  uint64_t seed = 0;

  void validate(int64_t n_frames) const;
};

/// Uniform-sampled starting frames staged as a leaf on `tape`, with fresh
/// optimizer state and the source indices recorded.
MetaFrames init_meta_frames(const std::string& video_id, const Tensor& video, int64_t u,
                            Tape& tape);

struct ModelBatchItem {
  const Tensor* frames;  // video input for this pair (MetaFrames or sampled frames)
  const std::vector<int64_t>* tokens;
};

/// One AdamW step on theta against the contrastive loss over the batch; the
/// video inputs are treated as constants. Returns the loss value.
double model_level_step(ModelParams& theta, const std::vector<ModelBatchItem>& batch,
                        AdamWState& opt, double alpha);

struct FrameLevelItem {
  MetaFrames* mf;
  Tensor regular_frames;  // [R x C x H x W], constants
  const std::vector<int64_t>* tokens;
};

/// The frame-level bilevel step: clone theta_star, run inner_steps differentiable descent
/// steps on the contrastive loss over the MetaFrames batch, evaluate the
/// loss of the stepped clone on the regular frames, and push each video's
/// meta-gradient through one Adam step with lr=beta. theta_star itself is
/// never touched. Returns the meta loss value.
double frame_level_step(const ModelParams& theta_star, std::vector<FrameLevelItem>& batch,
                        double alpha, double beta, int64_t inner_steps, bool first_order);

struct TrainLogRecord {
  int64_t phase = 0;
  double model_loss = 0.0;
  double meta_loss = 0.0;
  double wall_ms = 0.0;
  std::optional<RetrievalReport> eval;
  std::string warning;

  std::string to_json() const;
};

struct TrainOptions {
  EncoderConfig encoder;
  int64_t k_test = 0;      // frames per video at evaluation; 0 resolves to U
  bool no_mof = false;     // uniform-sampling baseline: no MetaFrames, no meta step
  bool record_wall = true; // false writes 0 wall times into the log
  std::ostream* log_stream = nullptr;  // one JSON line per phase when set
};

struct TrainResult {
  ModelParams params;
  AdamWState opt;
  FrameMemory memory;
  std::vector<TrainLogRecord> log;
  RetrievalReport best;
  int64_t best_phase = -1;
};

/// Phase loop: epoch-shuffled minibatches; per phase a model-level step,
/// optionally an evaluation, then the frame-level step with freshly sampled
/// regular frames, and a memory write-back. The best evaluation over all
/// phases (highest R@1, ties to lower MedR, then earlier phase) is the
/// headline result.
TrainResult run_training(const Dataset& ds, const PhaseConfig& cfg, const TrainOptions& opts);

void save_frame_memory(const std::string& path, const FrameMemory& memory);
FrameMemory load_frame_memory(const std::string& path);

}  // namespace mof
