// Acceptance battery: nine checks covering gradient correctness, the
// contrastive loss analytics, the frame-level descent property, the
// retrieval trend against the uniform-sampling baseline, the evaluation
// oracle, determinism of the command-line pipeline, and chance-level
// sanity. One pass/fail line per criterion; exit code is the failure count.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mof/bop.hpp"
#include "mof/data.hpp"
#include "mof/encoders.hpp"
#include "mof/eval.hpp"
#include "mof/gradcheck.hpp"
#include "mof/loss.hpp"
#include "mof/ops.hpp"
#include "mof/optim.hpp"
#include "mof/rng.hpp"
#include "mof/tape.hpp"
#include "mof/tensor.hpp"

using namespace mof;
namespace fs = std::filesystem;

namespace {

// pinned thresholds
constexpr double kPrimitiveTol = 1e-6;       // criterion 1
constexpr double kPrimitiveBudgetS = 10.0;   // criterion 1
constexpr double kMetaGradTol = 1e-3;        // criterion 2
constexpr int kMetaGradSeeds = 5;            // criterion 2
constexpr double kMetaGradBudgetS = 60.0;    // criterion 2
constexpr double kLossTol = 1e-6;            // criterion 3
constexpr int kLossInstances = 100;          // criterion 3
constexpr double kDescentBeta = 1e-6;        // criterion 4
constexpr int kDescentTrials = 100;          // criterion 4
constexpr int kDescentRequired = 95;         // criterion 4
constexpr double kDescentBudgetS = 120.0;    // criterion 4
constexpr int64_t kTrendPhases = 600;        // criteria 5 and 6
constexpr uint64_t kTrendSeeds[3] = {1, 2, 3};
constexpr double kTrendMargin = 0.05;        // criterion 5
constexpr double kTrendBudgetS = 900.0;      // criteria 5 and 6, combined runs
constexpr double kCompressionSlack = 0.02;   // criterion 6
constexpr int kOracleMatrices = 1000;        // criterion 7
constexpr int kChanceSeeds = 10;             // criterion 9
constexpr double kChanceSigmas = 3.0;        // criterion 9

struct Line {
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// ---- criterion 1: primitive gradients, second derivative, hvp oracles ----

Line criterion_primitives() {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<GradCheckResult> results = primitive_grad_checks(3);
  int failed = 0;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : results) {
    if (!r.ok) ++failed;
    if (r.max_rel_err > worst) {
      worst = r.max_rel_err;
      worst_name = r.name;
    }
    if (r.tol > kPrimitiveTol) ++failed;  // nothing may run looser than the pin
  }
  double secs = seconds_since(t0);
  bool pass = failed == 0 && secs < kPrimitiveBudgetS;
  return {pass, std::to_string(results.size()) + " checks, worst rel err " + fmt(worst, 9) +
                    " (" + worst_name + ", tol " + fmt(kPrimitiveTol, 7) + "), " +
                    fmt(secs, 1) + "s"};
}

// ---- criterion 2: meta-gradient vs central differences ----

Line criterion_meta_gradient() {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<GradCheckResult> results = meta_gradient_checks(0, kMetaGradSeeds);
  int failed = 0;
  double worst = 0.0;
  for (const auto& r : results) {
    if (!r.ok || r.tol > kMetaGradTol) ++failed;
    worst = std::max(worst, r.max_rel_err);
  }
  double secs = seconds_since(t0);
  bool pass = failed == 0 && secs < kMetaGradBudgetS;
  return {pass, std::to_string(results.size()) + " seeds, worst rel err " + fmt(worst, 6) +
                    " (tol " + fmt(kMetaGradTol, 4) + "), " + fmt(secs, 1) + "s"};
}

// ---- criterion 3: contrastive loss analytics ----

Tensor random_unit_rows(int64_t b, int64_t d, Rng& rng) {
  Tensor t = Tensor::zeros({b, d}, Prec::f64);
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(-1.0, 1.0));
  return ops::l2_normalize_rows(t);
}

Tensor permute_rows(const Tensor& t, const std::vector<int64_t>& perm) {
  int64_t d = t.shape()[1];
  Tensor out = Tensor::zeros(t.shape(), t.prec());
  for (size_t r = 0; r < perm.size(); ++r)
    for (int64_t c = 0; c < d; ++c)
      out.set(static_cast<int64_t>(r) * d + c, t.at(perm[r] * d + c));
  return out;
}

Line criterion_loss_analytics() {
  Rng rng(17);
  int bad = 0;
  std::string first_bad;

  Tensor ev1 = random_unit_rows(1, 6, rng);
  Tensor et1 = random_unit_rows(1, 6, rng);
  if (contrastive_loss(ev1, et1, 0.05).l_c.item() != 0.0) {
    ++bad;
    first_bad = "B=1 loss not exactly zero";
  }

  Tensor ev_same = Tensor::from_doubles({2, 4}, {1, 0, 0, 0, 1, 0, 0, 0}, Prec::f64);
  Tensor et_same = Tensor::from_doubles({2, 4}, {0, 1, 0, 0, 0, 1, 0, 0}, Prec::f64);
  double two_ln2 = contrastive_loss(ev_same, et_same, 0.05).l_c.item();
  if (std::abs(two_ln2 - 2.0 * std::log(2.0)) > kLossTol) {
    ++bad;
    if (first_bad.empty()) first_bad = "identical-rows loss off 2ln2";
  }

  for (int inst = 0; inst < kLossInstances; ++inst) {
    int64_t b = 2 + rng.range(0, 7);
    Tensor ev = random_unit_rows(b, 5, rng);
    Tensor et = random_unit_rows(b, 5, rng);
    LossBreakdown fwd = contrastive_loss(ev, et, 0.05);

    std::vector<int64_t> perm(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i) perm[static_cast<size_t>(i)] = i;
    rng.shuffle(perm);
    double permuted =
        contrastive_loss(permute_rows(ev, perm), permute_rows(et, perm), 0.05).l_c.item();
    LossBreakdown swapped = contrastive_loss(et, ev, 0.05);

    bool ok = std::abs(permuted - fwd.l_c.item()) <= kLossTol &&
              std::abs(swapped.l_v2t.item() - fwd.l_t2v.item()) <= kLossTol &&
              std::abs(swapped.l_t2v.item() - fwd.l_v2t.item()) <= kLossTol;
    if (!ok) {
      ++bad;
      if (first_bad.empty()) first_bad = "invariance broke at instance " + std::to_string(inst);
    }
  }
  return {bad == 0, bad == 0 ? "exact zero, 2ln2 within " + fmt(kLossTol, 7) + ", " +
                                   std::to_string(kLossInstances) + " permutation/symmetry instances"
                             : first_bad};
}

// ---- criterion 4: descent property of the frame-level step ----

Line criterion_descent() {
  auto t0 = std::chrono::steady_clock::now();
  Dataset ds = generate_dataset(3, 8, 4, 8, 3, 8, 8);
  EncoderConfig ecfg;
  ecfg.h = 8;
  ecfg.w = 8;
  ecfg.dh = 8;
  ecfg.d = 6;
  ecfg.umax = 8;
  ecfg.vocab = static_cast<int64_t>(ds.vocab.size());

  int descended = 0;
  for (int trial = 0; trial < kDescentTrials; ++trial) {
    ModelParams params = init_params(ecfg, 1000 + static_cast<uint64_t>(trial));
    Rng vr_rng(static_cast<uint64_t>(trial));

    Tape tape;
    std::vector<MetaFrames> slots;
    slots.reserve(2);
    std::vector<FrameLevelItem> items;
    std::vector<SampledFrames> vr;
    for (size_t i = 0; i < 2; ++i) {
      const VideoTextPair& p = ds.pair_by_id(ds.train_ids[(trial + static_cast<int>(i)) % 8]);
      slots.push_back(init_meta_frames(p.video_id, p.video, 2, tape));
      vr.push_back(random_sample(p.video, 4, vr_rng));
      items.push_back({nullptr, vr.back().frames, &p.tokens});
    }
    for (size_t i = 0; i < 2; ++i) items[i].mf = &slots[i];
    double before = frame_level_step(params, items, 1e-3, kDescentBeta, 1, false);

    Tape tape2;
    std::vector<MetaFrames> stepped;
    stepped.reserve(2);
    std::vector<FrameLevelItem> replay;
    for (size_t i = 0; i < 2; ++i) {
      MetaFrames mf;
      mf.video_id = slots[i].video_id;
      mf.frames = tape2.leaf(slots[i].frames.detached());
      mf.opt_state = AdamState::init_like({mf.frames});
      mf.init_indices = slots[i].init_indices;
      stepped.push_back(mf);
      replay.push_back({nullptr, vr[i].frames, items[i].tokens});
    }
    for (size_t i = 0; i < 2; ++i) replay[i].mf = &stepped[i];
    double after = frame_level_step(params, replay, 1e-3, 0.0, 1, false);
    if (after < before) ++descended;
  }
  double secs = seconds_since(t0);
  bool pass = descended >= kDescentRequired && secs < kDescentBudgetS;
  return {pass, std::to_string(descended) + "/" + std::to_string(kDescentTrials) +
                    " trials descended (need >= " + std::to_string(kDescentRequired) + ", beta " +
                    fmt(kDescentBeta, 7) + "), " + fmt(secs, 1) + "s"};
}

// ---- criteria 5 and 6: retrieval trends ----

struct TrendStats {
  double mof16_r1 = 0.0, mof16_medr = 0.0;
  double base_r1 = 0.0, base_medr = 0.0;
  double mof4_r1 = 0.0;
  double secs = 0.0;
};

TrendStats run_trends() {
  auto t0 = std::chrono::steady_clock::now();
  TrendStats s;
  Dataset ds = generate_dataset(0, 64, 32, 16, 3, 16, 16);

  auto one = [&](uint64_t seed, int64_t r, bool no_mof) {
    PhaseConfig cfg;
    cfg.u = 2;
    cfg.r = r;
    cfg.t = kTrendPhases;
    cfg.seed = seed;
    TrainOptions opts;
    opts.k_test = 2;
    opts.no_mof = no_mof;
    opts.record_wall = false;
    return run_training(ds, cfg, opts).best;
  };

  for (uint64_t seed : kTrendSeeds) {
    RetrievalReport mof16 = one(seed, 16, false);
    RetrievalReport base = one(seed, 16, true);
    RetrievalReport mof4 = one(seed, 4, false);
    s.mof16_r1 += mof16.r1 / 3.0;
    s.mof16_medr += mof16.medr / 3.0;
    s.base_r1 += base.r1 / 3.0;
    s.base_medr += base.medr / 3.0;
    s.mof4_r1 += mof4.r1 / 3.0;
  }
  s.secs = seconds_since(t0);
  return s;
}

Line criterion_trend(const TrendStats& s) {
  bool pass = s.mof16_r1 >= s.base_r1 + kTrendMargin && s.mof16_medr <= s.base_medr &&
              s.secs < kTrendBudgetS;
  return {pass, "16=>2 r1 " + fmt(s.mof16_r1) + " medr " + fmt(s.mof16_medr, 2) +
                    " | baseline r1 " + fmt(s.base_r1) + " medr " + fmt(s.base_medr, 2) +
                    " | margin " + fmt(s.mof16_r1 - s.base_r1) + " (need >= " +
                    fmt(kTrendMargin, 2) + "), 3 seeds, " + fmt(s.secs, 0) + "s shared"};
}

Line criterion_compression(const TrendStats& s) {
  bool pass = s.mof16_r1 >= s.mof4_r1 - kCompressionSlack;
  return {pass, "16=>2 r1 " + fmt(s.mof16_r1) + " vs 4=>2 r1 " + fmt(s.mof4_r1) +
                    " (slack " + fmt(kCompressionSlack, 2) + ")"};
}

// ---- criterion 7: evaluation oracle ----

int64_t brute_force_rank(const std::vector<double>& row, int64_t pos) {
  std::vector<double> sorted = row;
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double v = row[static_cast<size_t>(pos)];
  int64_t first = 0;
  while (sorted[static_cast<size_t>(first)] > v) ++first;
  int64_t last = first;
  while (last + 1 < static_cast<int64_t>(sorted.size()) &&
         sorted[static_cast<size_t>(last + 1)] == v)
    ++last;
  double mean = (static_cast<double>(first) + static_cast<double>(last)) / 2.0 + 1.0;
  return static_cast<int64_t>(std::floor(mean + 0.5));
}

Line criterion_eval_oracle() {
  Rng rng(23);
  int bad = 0;
  for (int m = 0; m < kOracleMatrices; ++m) {
    int64_t n = 2 + rng.range(0, 11);
    std::vector<std::vector<double>> rows(static_cast<size_t>(n),
                                          std::vector<double>(static_cast<size_t>(n)));
    Tensor sim = Tensor::zeros({n, n}, Prec::f64);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j) {
        double v = static_cast<double>(rng.range(0, 5)) / 4.0;  // ties everywhere
        rows[static_cast<size_t>(i)][static_cast<size_t>(j)] = v;
        sim.set(i * n + j, v);
      }
    std::vector<int64_t> ranks = rank_of_positives(sim);
    for (int64_t i = 0; i < n; ++i)
      if (ranks[static_cast<size_t>(i)] != brute_force_rank(rows[static_cast<size_t>(i)], i))
        ++bad;
    RetrievalReport rep = report(sim);
    if (!(rep.r1 <= rep.r5 && rep.r5 <= rep.r10)) ++bad;
  }
  return {bad == 0, std::to_string(kOracleMatrices) +
                        " random tie-heavy matrices against the sort oracle, " +
                        std::to_string(bad) + " mismatches"};
}

// ---- criterion 8: bitwise determinism of the pipeline ----

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Line criterion_determinism() {
  const char* bin = std::getenv("MOF_CLI_BIN");
  if (bin == nullptr) return {false, "MOF_CLI_BIN is not set"};

  fs::path dir = fs::temp_directory_path() /
                 ("mof_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  auto path = [&](const std::string& n) { return (dir / n).string(); };
  auto run = [&](const std::string& args) {
    std::string cmd = std::string(bin) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };

  bool pass = true;
  std::string detail;
  if (run("gen-data --seed 1 --train 16 --test 8 --frames 16 --out " + path("ds.bin")) != 0) {
    pass = false;
    detail = "gen-data failed";
  } else {
    std::string train = "train --data " + path("ds.bin") +
                        " --compress 2-from-16 --phases 8 --batch-size 8 --dh 16 --d 8" +
                        " --seed 7 --workers 1 --no-timing --out ";
    if (run(train + path("one")) != 0 || run(train + path("two")) != 0) {
      pass = false;
      detail = "train failed";
    } else {
      for (const char* f : {"checkpoint.bin", "frame_memory.bin", "train_log.jsonl"}) {
        std::string a = slurp(path(std::string("one/") + f));
        std::string b = slurp(path(std::string("two/") + f));
        if (a.empty() || a != b) {
          pass = false;
          detail = std::string(f) + " differs between identical runs";
          break;
        }
      }
      if (pass) detail = "checkpoint, frame memory, and log bitwise identical across reruns";
    }
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  return {pass, detail};
}

// ---- criterion 9: chance-level sanity of an untrained model ----

Line criterion_chance_level() {
  Dataset ds = generate_dataset(0, 64, 32, 16, 3, 16, 16);
  double p = 1.0 / 32.0;
  double sigma = std::sqrt(p * (1 - p) / 32.0);
  double lo = p - kChanceSigmas * sigma, hi = p + kChanceSigmas * sigma;

  EncoderConfig ecfg;
  ecfg.vocab = static_cast<int64_t>(ds.vocab.size());
  int inside = 0;
  double min_r1 = 1.0, max_r1 = 0.0;
  for (uint64_t seed = 0; seed < kChanceSeeds; ++seed) {
    RetrievalReport rep = evaluate(init_params(ecfg, seed), ds, 2);
    min_r1 = std::min(min_r1, rep.r1);
    max_r1 = std::max(max_r1, rep.r1);
    if (rep.r1 >= lo && rep.r1 <= hi) ++inside;
  }
  bool pass = inside == kChanceSeeds;
  return {pass, std::to_string(kChanceSeeds) + " untrained seeds, r1 in [" + fmt(min_r1) + ", " +
                    fmt(max_r1) + "], band [" + fmt(std::max(0.0, lo)) + ", " + fmt(hi) +
                    "] = 1/32 +- 3 sigma"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Line()> run;
  };

  TrendStats trends;
  bool trends_ran = false;
  auto ensure_trends = [&]() {
    if (!trends_ran) {
      trends = run_trends();
      trends_ran = true;
    }
  };

  std::vector<Criterion> criteria = {
      {"primitive gradients and hvp oracles", criterion_primitives},
      {"meta-gradient vs finite differences", criterion_meta_gradient},
      {"contrastive loss analytics", criterion_loss_analytics},
      {"frame-level descent property", criterion_descent},
      {"retrieval trend vs uniform baseline",
       [&] {
         ensure_trends();
         return criterion_trend(trends);
       }},
      {"compression trend 16=>2 vs 4=>2",
       [&] {
         ensure_trends();
         return criterion_compression(trends);
       }},
      {"evaluation oracle with ties", criterion_eval_oracle},
      {"pipeline determinism", criterion_determinism},
      {"untrained chance level", criterion_chance_level},
  };

  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    Line line;
    try {
      line = criteria[i].run();
    } catch (const std::exception& e) {
      line = {false, std::string("exception: ") + e.what()};
    }
    if (!line.pass) ++failures;
    std::printf("[%s] %zu %s: %s\n", line.pass ? "PASS" : "FAIL", i + 1, criteria[i].name,
                line.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/9 criteria passed\n", 9 - failures);
  return failures;
}
