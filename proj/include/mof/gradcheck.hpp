#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mof {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tol = 0.0;
  bool ok = false;
};

/// Every differentiable primitive and composite against central finite
/// differences, plus the exact second-derivative case d2(x^3)/dx2 at x=2 and
/// hessian-vector products against explicit 5x5 quadratic oracles. All f64.
std::vector<GradCheckResult> primitive_grad_checks(uint64_t seed);

/// The frame-to-loss pipeline at micro size (dh=4, d=4, u=2, r=4, 8x8
/// frames, batch 2): autodiff d(meta loss)/d(frames) against central
/// differences on 10 sampled pixels, one result per seed.
std::vector<GradCheckResult> meta_gradient_checks(uint64_t seed, int n_seeds);

/// Both batteries back to back.
std::vector<GradCheckResult> run_grad_check_battery(uint64_t seed);

}  // namespace mof
