#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mof/data.hpp"
#include "mof/encoders.hpp"
#include "mof/tensor.hpp"

namespace mof {

struct RetrievalReport {
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
  double medr = 0.0;
  int64_t n_queries = 0;
  int64_t frames_used = 0;
  double wall_ms = 0.0;

  std::string to_json() const;
};

/// S[i][j] = et_i . ev_j: row = text query, column = video. Unit-norm rows
/// required (same tolerance as the loss boundary).
Tensor similarity_matrix(const Tensor& ev, const Tensor& et);

/// Rank of the true positive per query row: 1 + count(strictly greater) +
/// half the ties, rounded half up. Ties award the mean rank.
std::vector<int64_t> rank_of_positives(const Tensor& sim);

/// R@{1,5,10} and median rank from a square similarity matrix. Medians of
/// even-length rank lists are the mean of the two central values. R@K
/// monotonicity is asserted here, on every report produced.
RetrievalReport report(const Tensor& sim);

/// Embed every test video with uniform_sample(video, k_test) frames and its
/// caption, then rank text against video. Honors the process worker count
/// for the embedding fan-out; ranking is single-threaded and the result is
/// independent of the worker count.
RetrievalReport evaluate(const ModelParams& params, const Dataset& ds, int64_t k_test);

}  // namespace mof
