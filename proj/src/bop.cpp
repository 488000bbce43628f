// Bilevel phase loop: model-level contrastive updates on the encoder
// parameters alternate with frame-level meta-updates on each video's
// compressed frames. The frame-level step differentiates through its own
// inner descent, so the meta-gradient carries second-order terms.

#include "mof/bop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <utility>

#include "json.hpp"
#include "mof/error.hpp"
#include "mof/loss.hpp"
#include "mof/ops.hpp"
#include "mof/rng.hpp"

namespace mof {
namespace {

constexpr double kSigma = 0.05;

// Substream tags; each consumer gets its own stream so adding one never
// shifts the draws of another.
constexpr uint64_t kStreamInit = 0;
constexpr uint64_t kStreamSample = 1;
constexpr uint64_t kStreamShuffleBase = 2;  // + epoch

Tensor stack_video_rows(const ModelParams& params, const std::vector<const Tensor*>& videos) {
  std::vector<Tensor> rows;
  rows.reserve(videos.size());
  for (const Tensor* v : videos) {
    rows.push_back(ops::reshape(encode_video(params, *v), {1, params.config.d}));
  }
  return rows.size() == 1 ? rows[0] : ops::concat_rows(rows);
}

Tensor stack_text_rows(const ModelParams& params,
                       const std::vector<const std::vector<int64_t>*>& tokens) {
  std::vector<Tensor> rows;
  rows.reserve(tokens.size());
  for (const std::vector<int64_t>* t : tokens) {
    rows.push_back(ops::reshape(encode_text(params, *t), {1, params.config.d}));
  }
  return rows.size() == 1 ? rows[0] : ops::concat_rows(rows);
}

std::string tag(int64_t phase) { return "phase " + std::to_string(phase) + ": "; }

[[noreturn]] void rethrow_tagged(int64_t phase) {
  try {
    throw;
  } catch (const ShapeError& e) {
    throw ShapeError(tag(phase) + e.what());
  } catch (const ValueError& e) {
    throw ValueError(tag(phase) + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(tag(phase) + e.what());
  } catch (const IoError& e) {
    throw IoError(tag(phase) + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(tag(phase) + e.what());
  } catch (const Error& e) {
    throw Error(tag(phase) + e.what());
  }
}

// Batch starts for one epoch: consecutive chunks of batch_size, with a
// trailing single leftover merged into the previous chunk so no batch
// degenerates to one pair.
std::vector<std::pair<int64_t, int64_t>> batch_ranges(int64_t n, int64_t batch_size) {
  std::vector<std::pair<int64_t, int64_t>> out;
  for (int64_t s = 0; s < n; s += batch_size) {
    out.emplace_back(s, std::min(s + batch_size, n));
  }
  if (out.size() >= 2 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = n;
    out.pop_back();
  }
  return out;
}

}  // namespace

MetaFrames& FrameMemory::at(const std::string& id) {
  auto it = entries.find(id);
  if (it == entries.end()) throw ValueError("frame memory has no entry for video '" + id + "'");
  return it->second;
}

const MetaFrames& FrameMemory::at(const std::string& id) const {
  auto it = entries.find(id);
  if (it == entries.end()) throw ValueError("frame memory has no entry for video '" + id + "'");
  return it->second;
}

void PhaseConfig::validate(int64_t n_frames) const {
  if (u < 1) throw ConfigError("u must be at least 1, got " + std::to_string(u));
  if (r < u) {
    throw ConfigError("r must be at least u, got r=" + std::to_string(r) +
                      " u=" + std::to_string(u));
  }
  if (r > n_frames) {
    throw ConfigError("r must not exceed the frame count " + std::to_string(n_frames) +
                      ", got " + std::to_string(r));
  }
  if (t < 1) throw ConfigError("t must be at least 1, got " + std::to_string(t));
  if (alpha <= 0.0) throw ConfigError("alpha must be positive");
  if (beta <= 0.0) throw ConfigError("beta must be positive");
  if (inner_steps < 1) throw ConfigError("inner_steps must be at least 1");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (eval_every < 0) throw ConfigError("eval_every must be nonnegative");
}

MetaFrames init_meta_frames(const std::string& video_id, const Tensor& video, int64_t u,
                            Tape& tape) {
  SampledFrames sf = uniform_sample(video, u);
  MetaFrames mf;
  mf.video_id = video_id;
  mf.frames = tape.leaf(sf.frames);
  mf.opt_state = AdamState::init_like({mf.frames});
  mf.init_indices = std::move(sf.indices);
  return mf;
}

double model_level_step(ModelParams& theta, const std::vector<ModelBatchItem>& batch,
                        AdamWState& opt, double alpha) {
  if (batch.size() < 2) {
    throw ValueError("model_level_step needs a batch of at least 2 pairs, got " +
                     std::to_string(batch.size()));
  }
  if (alpha <= 0.0) throw ValueError("model_level_step: alpha must be positive");
  std::vector<const Tensor*> videos;
  std::vector<const std::vector<int64_t>*> tokens;
  for (const ModelBatchItem& item : batch) {
    if (item.frames == nullptr || item.tokens == nullptr) {
      throw ValueError("model_level_step: batch item missing frames or tokens");
    }
    videos.push_back(item.frames);
    tokens.push_back(item.tokens);
  }

  Tape tape;
  ModelParams staged = clone_params(theta, tape);
  Tensor ev = stack_video_rows(staged, videos);
  Tensor et = stack_text_rows(staged, tokens);
  Tensor loss = contrastive_loss(ev, et, kSigma).l_c;
  double loss_value = loss.item();
  if (!std::isfinite(loss_value)) throw NumericalError("model loss is not finite");

  std::vector<Tensor> staged_flat = staged.flat();
  std::vector<Tensor> grads = ops::grad(loss, staged_flat, false);
  for (size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].all_finite()) {
      throw NumericalError("model gradient for " + ModelParams::flat_names()[i] +
                           " is not finite");
    }
  }
  adamw_step(theta.flat(), grads, opt, alpha);
  return loss_value;
}

double frame_level_step(const ModelParams& theta_star, std::vector<FrameLevelItem>& batch,
                        double alpha, double beta, int64_t inner_steps, bool first_order) {
  if (batch.empty()) throw ValueError("frame_level_step: empty batch");
  if (inner_steps < 0) throw ValueError("frame_level_step: inner_steps must be nonnegative");
  if (alpha <= 0.0 || beta < 0.0) {
    throw ValueError("frame_level_step: alpha must be positive and beta nonnegative");
  }

  Tape tape;
  std::vector<Tensor> eps;
  std::vector<const std::vector<int64_t>*> tokens;
  std::vector<const Tensor*> regulars;
  eps.reserve(batch.size());
  for (FrameLevelItem& item : batch) {
    if (item.mf == nullptr || item.tokens == nullptr) {
      throw ValueError("frame_level_step: batch item missing MetaFrames or tokens");
    }
    eps.push_back(tape.leaf(item.mf->frames));
    tokens.push_back(item.tokens);
    regulars.push_back(&item.regular_frames);
  }

  // Inner descent on a clone; theta_star itself is never written.
  ModelParams prime = clone_params(theta_star, tape);
  std::vector<Tensor> flat = prime.flat();
  std::vector<const Tensor*> eps_ptrs;
  for (const Tensor& e : eps) eps_ptrs.push_back(&e);
  for (int64_t s = 0; s < inner_steps; ++s) {
    prime.assign_flat(flat);
    Tensor ev = stack_video_rows(prime, eps_ptrs);
    Tensor et = stack_text_rows(prime, tokens);
    Tensor inner = contrastive_loss(ev, et, kSigma).l_c;
    flat = sgd_step_differentiable(flat, inner, alpha, !first_order);
  }
  prime.assign_flat(flat);

  Tensor ev_meta = stack_video_rows(prime, regulars);
  Tensor et_meta = stack_text_rows(prime, tokens);
  Tensor meta = contrastive_loss(ev_meta, et_meta, kSigma).l_c;
  double meta_value = meta.item();
  if (!std::isfinite(meta_value)) throw NumericalError("meta loss is not finite");

  std::vector<Tensor> grads = ops::grad(meta, eps, false);
  for (size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].all_finite()) {
      throw NumericalError("meta-gradient for video '" + batch[i].mf->video_id +
                           "' is not finite");
    }
  }
  for (size_t i = 0; i < batch.size(); ++i) {
    adam_step({eps[i]}, {grads[i]}, batch[i].mf->opt_state, beta);
    batch[i].mf->frames = eps[i].detached();
  }
  return meta_value;
}

std::string TrainLogRecord::to_json() const {
  nlohmann::json j;
  j["phase"] = phase;
  j["model_loss"] = model_loss;
  j["meta_loss"] = meta_loss;
  j["wall_ms"] = wall_ms;
  if (eval.has_value()) j["eval"] = nlohmann::json::parse(eval->to_json());
  if (!warning.empty()) j["warning"] = warning;
  return j.dump();
}

TrainResult run_training(const Dataset& ds, const PhaseConfig& cfg, const TrainOptions& opts) {
  cfg.validate(ds.n_frames);
  const int64_t n_train = static_cast<int64_t>(ds.train_ids.size());
  if (n_train < 2) throw ValueError("training needs at least 2 train pairs");

  const int64_t k_test = opts.k_test > 0 ? opts.k_test : cfg.u;
  EncoderConfig ecfg = opts.encoder;
  ecfg.h = ds.h;
  ecfg.w = ds.w;
  ecfg.c = ds.c;
  ecfg.vocab = static_cast<int64_t>(ds.vocab.size());
  ecfg.umax = std::max({ecfg.umax, cfg.r, k_test});
  ecfg.validate();

  TrainResult res;
  res.params = init_params(ecfg, substream(cfg.seed, kStreamInit));
  res.opt = AdamWState::init_like(res.params.flat());
  Rng vr_rng(substream(cfg.seed, kStreamSample));

  int64_t eval_every = cfg.eval_every;
  if (eval_every == 0) {
    eval_every = static_cast<int64_t>(batch_ranges(n_train, cfg.batch_size).size());
  }

  if (cfg.first_order) {
    std::cerr << "warning: first_order=true severs the inner-step path, the meta-gradient "
                 "is identically zero\n";
  }

  int64_t phase = 0;
  int64_t epoch = 0;
  while (phase < cfg.t) {
    std::vector<std::string> order = ds.train_ids;
    Rng shuffle_rng(substream(cfg.seed, kStreamShuffleBase + static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    for (const auto& range : batch_ranges(n_train, cfg.batch_size)) {
      if (phase >= cfg.t) break;
      const auto t0 = std::chrono::steady_clock::now();
      TrainLogRecord rec;
      rec.phase = phase;
      try {
        std::vector<const VideoTextPair*> pairs;
        for (int64_t i = range.first; i < range.second; ++i) {
          pairs.push_back(&ds.pair_by_id(order[static_cast<size_t>(i)]));
        }

        std::vector<SampledFrames> held;
        held.reserve(pairs.size());
        std::vector<ModelBatchItem> mb;
        if (opts.no_mof) {
          for (const VideoTextPair* p : pairs) {
            held.push_back(uniform_sample(p->video, cfg.u));
            mb.push_back({&held.back().frames, &p->tokens});
          }
        } else {
          Tape init_tape;
          for (const VideoTextPair* p : pairs) {
            if (!res.memory.contains(p->video_id)) {
              MetaFrames mf = init_meta_frames(p->video_id, p->video, cfg.u, init_tape);
              mf.frames = mf.frames.detached();
              res.memory.entries.emplace(p->video_id, std::move(mf));
            }
            mb.push_back({&res.memory.at(p->video_id).frames, &p->tokens});
          }
        }
        rec.model_loss = model_level_step(res.params, mb, res.opt, cfg.alpha);

        const bool last_phase = phase == cfg.t - 1;
        if ((phase + 1) % eval_every == 0 || last_phase) {
          RetrievalReport ev = evaluate(res.params, ds, k_test);
          if (!opts.record_wall) ev.wall_ms = 0.0;
          rec.eval = ev;
          const bool better = res.best_phase < 0 || ev.r1 > res.best.r1 ||
                              (ev.r1 == res.best.r1 && ev.medr < res.best.medr);
          if (better) {
            res.best = ev;
            res.best_phase = phase;
          }
        }

        if (!opts.no_mof) {
          std::vector<FrameLevelItem> fb;
          for (const VideoTextPair* p : pairs) {
            SampledFrames vr = random_sample(p->video, cfg.r, vr_rng);
            fb.push_back({&res.memory.at(p->video_id), vr.frames, &p->tokens});
          }
          rec.meta_loss =
              frame_level_step(res.params, fb, cfg.alpha, cfg.beta, cfg.inner_steps,
                               cfg.first_order);
        }
      } catch (...) {
        rethrow_tagged(phase);
      }

      if (opts.record_wall) {
        rec.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
      }
      if (cfg.first_order) rec.warning = "first_order meta-gradient is identically zero";
      if (opts.log_stream != nullptr) *opts.log_stream << rec.to_json() << "\n";
      res.log.push_back(std::move(rec));
      ++phase;
    }
    ++epoch;
  }
  return res;
}

namespace {

constexpr char kFrameMemoryMagic[8] = {'M', 'O', 'F', 'F', 'M', 'E', 'M', '1'};

Tensor indices_tensor(const std::vector<int64_t>& idx) {
  std::vector<double> vals(idx.begin(), idx.end());
  return Tensor::from_doubles({static_cast<int64_t>(idx.size())}, vals, Prec::f64);
}

}  // namespace

void save_frame_memory(const std::string& path, const FrameMemory& memory) {
  std::vector<io::NamedTensor> records;
  const std::vector<std::string> one = {"eps"};
  for (const auto& [id, mf] : memory.entries) {
    records.push_back({id + "/frames", mf.frames});
    records.push_back({id + "/init_indices", indices_tensor(mf.init_indices)});
    for (auto& r : adam_records(id + "/opt.", mf.opt_state, one)) {
      records.push_back(std::move(r));
    }
  }
  io::write_records_file(path, kFrameMemoryMagic, records);
}

FrameMemory load_frame_memory(const std::string& path) {
  const std::vector<io::NamedTensor> records = io::read_records_file(path, kFrameMemoryMagic);
  const std::vector<std::string> one = {"eps"};
  FrameMemory memory;
  for (const io::NamedTensor& r : records) {
    const size_t slash = r.name.find('/');
    if (slash == std::string::npos) {
      throw IoError("frame memory record '" + r.name + "' has no video id prefix: " + path);
    }
    const std::string id = r.name.substr(0, slash);
    const std::string field = r.name.substr(slash + 1);
    if (field != "frames") continue;
    MetaFrames mf;
    mf.video_id = id;
    mf.frames = r.tensor;
    const Tensor& idx = io::find_record(records, id + "/init_indices");
    mf.init_indices.reserve(static_cast<size_t>(idx.numel()));
    for (int64_t i = 0; i < idx.numel(); ++i) {
      mf.init_indices.push_back(static_cast<int64_t>(idx.at(i)));
    }
    mf.opt_state = adam_from_records(id + "/opt.", records, one);
    memory.entries.emplace(id, std::move(mf));
  }
  return memory;
}

}  // namespace mof
