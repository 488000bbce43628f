#include "mof/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "json.hpp"
#include "mof/kernels.hpp"
#include "mof/ops.hpp"

namespace mof {

namespace {

void require_unit_rows(const Tensor& e, const char* which) {
  int64_t q = e.shape()[0], d = e.shape()[1];
  for (int64_t i = 0; i < q; ++i) {
    double n2 = 0;
    for (int64_t j = 0; j < d; ++j) {
      double v = e.at(i * d + j);
      n2 += v * v;
    }
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-4)
      throw ValueError(std::string("similarity_matrix: ") + which + " row " + std::to_string(i) +
                       " is not unit norm");
  }
}

}  // namespace

std::string RetrievalReport::to_json() const {
  nlohmann::json j;
  j["r1"] = r1;
  j["r5"] = r5;
  j["r10"] = r10;
  j["medr"] = medr;
  j["n"] = n_queries;
  j["frames_used"] = frames_used;
  j["wall_ms"] = wall_ms;
  return j.dump();
}

Tensor similarity_matrix(const Tensor& ev, const Tensor& et) {
  if (ev.rank() != 2 || et.rank() != 2 || !ev.same_shape(et))
    throw ShapeError("similarity_matrix: expected matching [Q x D] inputs, got " +
                     shape_str(ev.shape()) + " and " + shape_str(et.shape()));
  require_unit_rows(ev, "ev");
  require_unit_rows(et, "et");
  return kernels::matmul(et, kernels::transpose(ev));
}

std::vector<int64_t> rank_of_positives(const Tensor& sim) {
  if (sim.rank() != 2 || sim.shape()[0] != sim.shape()[1])
    throw ShapeError("rank_of_positives: expected a square matrix, got " + shape_str(sim.shape()));
  int64_t q = sim.shape()[0];
  std::vector<int64_t> ranks(static_cast<size_t>(q));
  for (int64_t i = 0; i < q; ++i) {
    double pos = sim.at(i * q + i);
    int64_t greater = 0, ties = 0;
    for (int64_t j = 0; j < q; ++j) {
      if (j == i) continue;
      double v = sim.at(i * q + j);
      if (v > pos) ++greater;
      if (v == pos) ++ties;
    }
    ranks[static_cast<size_t>(i)] = 1 + greater + (ties + 1) / 2;
  }
  return ranks;
}

RetrievalReport report(const Tensor& sim) {
  std::vector<int64_t> ranks = rank_of_positives(sim);
  int64_t q = static_cast<int64_t>(ranks.size());
  if (q == 0) throw ShapeError("report: empty similarity matrix");
  RetrievalReport rep;
  rep.n_queries = q;
  int64_t hit1 = 0, hit5 = 0, hit10 = 0;
  for (int64_t r : ranks) {
    hit1 += r <= 1;
    hit5 += r <= 5;
    hit10 += r <= 10;
  }
  rep.r1 = static_cast<double>(hit1) / static_cast<double>(q);
  rep.r5 = static_cast<double>(hit5) / static_cast<double>(q);
  rep.r10 = static_cast<double>(hit10) / static_cast<double>(q);
  std::vector<int64_t> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  size_t mid = sorted.size() / 2;
  rep.medr = sorted.size() % 2 == 1
                 ? static_cast<double>(sorted[mid])
                 : 0.5 * static_cast<double>(sorted[mid - 1] + sorted[mid]);
  if (rep.r1 > rep.r5 || rep.r5 > rep.r10 || rep.medr < 1.0)
    throw Error("report: recall monotonicity violated");
  return rep;
}

RetrievalReport evaluate(const ModelParams& params, const Dataset& ds, int64_t k_test) {
  if (ds.test_ids.empty()) throw ValueError("evaluate: dataset has no test split");
  if (k_test < 1 || k_test > ds.n_frames)
    throw ValueError("evaluate: k_test=" + std::to_string(k_test) + " outside [1, " +
                     std::to_string(ds.n_frames) + "]");
  auto start = std::chrono::steady_clock::now();

  int64_t q = static_cast<int64_t>(ds.test_ids.size());
  int64_t d = params.config.d;
  Tensor ev = Tensor::zeros({q, d}, params.config.prec);
  Tensor et = Tensor::zeros({q, d}, params.config.prec);

  // Items are independent forward passes over read-only params; each writes
  // only its own row, so the fan-out cannot change the result.
  std::exception_ptr fail;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (kernels::workers() > 1)
#endif
  for (int64_t i = 0; i < q; ++i) {
    try {
      const VideoTextPair& pair = ds.pair_by_id(ds.test_ids[static_cast<size_t>(i)]);
      Tensor frames = uniform_sample(pair.video, k_test).frames;
      if (frames.prec() != params.config.prec) frames = frames.cast(params.config.prec);
      Tensor e_v = encode_video(params, frames);
      Tensor e_t = encode_text(params, pair.tokens);
      for (int64_t jj = 0; jj < d; ++jj) {
        ev.set(i * d + jj, e_v.at(jj));
        et.set(i * d + jj, e_t.at(jj));
      }
    } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
      if (!fail) fail = std::current_exception();
    }
  }
  if (fail) std::rethrow_exception(fail);

  RetrievalReport rep = report(similarity_matrix(ev, et));
  rep.frames_used = k_test;
  auto end = std::chrono::steady_clock::now();
  rep.wall_ms = std::chrono::duration<double, std::milli>(end - start).count();
  return rep;
}

}  // namespace mof
