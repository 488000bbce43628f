// Finite-difference oracle battery. Everything runs in f64: central
// differences on small dense inputs for the primitives, and on sampled
// pixels for the full unrolled frame-to-loss pipeline.

#include "mof/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <utility>

#include "mof/encoders.hpp"
#include "mof/error.hpp"
#include "mof/kernels.hpp"
#include "mof/loss.hpp"
#include "mof/ops.hpp"
#include "mof/optim.hpp"
#include "mof/rng.hpp"
#include "mof/tape.hpp"

namespace mof {
namespace {

using LossFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

Tensor rnd(Rng& rng, Shape shape, double lo, double hi) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_doubles(shape, v, Prec::f64);
}

double eval_loss(const LossFn& fn, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& in : inputs) leaves.push_back(tape.leaf(in));
  return fn(tape, leaves).item();
}

/// Max relative error between autodiff and central differences over every
/// element of every input (or the given subset of (input, element) pairs).
double fd_max_rel_err(const std::vector<Tensor>& inputs, const LossFn& fn, double h,
                      const std::vector<std::pair<size_t, int64_t>>* subset = nullptr) {
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& in : inputs) leaves.push_back(tape.leaf(in));
  Tensor loss = fn(tape, leaves);
  std::vector<Tensor> grads = ops::grad(loss, leaves, false);

  auto shifted_loss = [&](size_t which, int64_t j, double delta) {
    std::vector<Tensor> shifted;
    shifted.reserve(inputs.size());
    for (const Tensor& in : inputs) shifted.push_back(in.clone_values());
    shifted[which].set(j, shifted[which].at(j) + delta);
    return eval_loss(fn, shifted);
  };

  std::vector<std::pair<size_t, int64_t>> all;
  if (subset == nullptr) {
    for (size_t i = 0; i < inputs.size(); ++i) {
      for (int64_t j = 0; j < inputs[i].numel(); ++j) all.emplace_back(i, j);
    }
    subset = &all;
  }

  double worst = 0.0;
  for (const auto& [i, j] : *subset) {
    const double lp = shifted_loss(i, j, +h);
    const double lm = shifted_loss(i, j, -h);
    const double fd = (lp - lm) / (2.0 * h);
    const double ad = grads[i].at(j);
    const double denom = std::max(std::abs(ad), std::abs(fd));
    if (denom < 1e-7) continue;
    worst = std::max(worst, std::abs(ad - fd) / denom);
  }
  return worst;
}

GradCheckResult fd_check(const std::string& name, const std::vector<Tensor>& inputs,
                         const LossFn& fn, double h = 5e-6, double tol = 1e-6) {
  GradCheckResult r;
  r.name = name;
  r.tol = tol;
  r.max_rel_err = fd_max_rel_err(inputs, fn, h);
  r.ok = r.max_rel_err <= tol;
  return r;
}

LossFn weighted(Tensor w, std::function<Tensor(const std::vector<Tensor>&)> build) {
  return [w = std::move(w), build = std::move(build)](Tape&, const std::vector<Tensor>& x) {
    return ops::sum(ops::mul(w, build(x)));
  };
}

Tensor unit_rows(const Tensor& a) {
  Tensor out = a.clone_values();
  const auto& s = out.shape();
  for (int64_t i = 0; i < s[0]; ++i) {
    double n2 = 0.0;
    for (int64_t j = 0; j < s[1]; ++j) n2 += out.at(i * s[1] + j) * out.at(i * s[1] + j);
    const double inv = 1.0 / std::sqrt(n2);
    for (int64_t j = 0; j < s[1]; ++j) out.set(i * s[1] + j, out.at(i * s[1] + j) * inv);
  }
  return out;
}

}  // namespace

std::vector<GradCheckResult> primitive_grad_checks(uint64_t seed) {
  Rng rng(mix64(seed));
  std::vector<GradCheckResult> out;

  const Tensor w23 = rnd(rng, {2, 3}, 0.5, 1.5);
  const Tensor w32 = rnd(rng, {3, 2}, 0.5, 1.5);
  const Tensor w22 = rnd(rng, {2, 2}, 0.5, 1.5);
  const Tensor w33 = rnd(rng, {3, 3}, 0.5, 1.5);
  const Tensor w34 = rnd(rng, {3, 4}, 0.5, 1.5);
  const Tensor w3 = rnd(rng, {3}, 0.5, 1.5);
  const Tensor w4 = rnd(rng, {4}, 0.5, 1.5);

  auto a23 = [&] { return rnd(rng, {2, 3}, 0.5, 1.5); };

  out.push_back(fd_check("add", {a23(), a23()},
                         weighted(w23, [](const auto& x) { return ops::add(x[0], x[1]); })));
  out.push_back(fd_check("sub", {a23(), a23()},
                         weighted(w23, [](const auto& x) { return ops::sub(x[0], x[1]); })));
  out.push_back(fd_check("mul", {a23(), a23()},
                         weighted(w23, [](const auto& x) { return ops::mul(x[0], x[1]); })));
  out.push_back(fd_check("div", {a23(), rnd(rng, {2, 3}, 0.7, 1.7)},
                         weighted(w23, [](const auto& x) { return ops::div(x[0], x[1]); })));
  out.push_back(fd_check("add_scalar", {a23()}, weighted(w23, [](const auto& x) {
                           return ops::add_scalar(x[0], 0.7);
                         })));
  out.push_back(fd_check("scale", {a23()},
                         weighted(w23, [](const auto& x) { return ops::scale(x[0], 1.3); })));
  out.push_back(fd_check("exp", {rnd(rng, {2, 3}, -1.0, 1.0)},
                         weighted(w23, [](const auto& x) { return ops::exp(x[0]); })));
  out.push_back(fd_check("log", {rnd(rng, {2, 3}, 0.5, 2.0)},
                         weighted(w23, [](const auto& x) { return ops::log(x[0]); })));
  out.push_back(fd_check("tanh", {rnd(rng, {2, 3}, -2.0, 2.0)},
                         weighted(w23, [](const auto& x) { return ops::tanh(x[0]); })));
  out.push_back(fd_check("erf", {rnd(rng, {2, 3}, -2.0, 2.0)},
                         weighted(w23, [](const auto& x) { return ops::erf(x[0]); })));
  out.push_back(fd_check("sqrt", {rnd(rng, {2, 3}, 0.5, 2.0)},
                         weighted(w23, [](const auto& x) { return ops::sqrt(x[0]); })));
  out.push_back(fd_check("neg", {a23()},
                         weighted(w23, [](const auto& x) { return ops::neg(x[0]); })));
  out.push_back(fd_check("gelu", {rnd(rng, {2, 3}, -2.0, 2.0)},
                         weighted(w23, [](const auto& x) { return ops::gelu(x[0]); })));
  out.push_back(fd_check("mul_rank0", {a23(), rnd(rng, {}, 0.5, 1.5)},
                         weighted(w23, [](const auto& x) { return ops::mul(x[0], x[1]); })));
  out.push_back(fd_check("div_rank0", {a23(), rnd(rng, {}, 0.7, 1.7)},
                         weighted(w23, [](const auto& x) { return ops::div(x[0], x[1]); })));
  out.push_back(fd_check("matmul", {a23(), rnd(rng, {3, 2}, 0.5, 1.5)},
                         weighted(w22, [](const auto& x) { return ops::matmul(x[0], x[1]); })));
  out.push_back(fd_check("transpose", {a23()}, weighted(w32, [](const auto& x) {
                           return ops::transpose(x[0]);
                         })));
  out.push_back(fd_check("reshape", {a23()}, weighted(w32, [](const auto& x) {
                           return ops::reshape(x[0], {3, 2});
                         })));
  out.push_back(fd_check("sum_all", {a23()}, [](Tape&, const std::vector<Tensor>& x) {
    return ops::sum(x[0]);
  }));
  out.push_back(fd_check("sum_axis0", {rnd(rng, {3, 4}, 0.5, 1.5)},
                         weighted(w4, [](const auto& x) { return ops::sum(x[0], 0); })));
  out.push_back(fd_check("sum_axis1", {rnd(rng, {3, 4}, 0.5, 1.5)},
                         weighted(w3, [](const auto& x) { return ops::sum(x[0], 1); })));
  out.push_back(fd_check("mean_all", {a23()}, [](Tape&, const std::vector<Tensor>& x) {
    return ops::mean(x[0]);
  }));
  out.push_back(fd_check("mean_axis1", {rnd(rng, {3, 4}, 0.5, 1.5)},
                         weighted(w3, [](const auto& x) { return ops::mean(x[0], 1); })));

  const Tensor distinct = Tensor::from_doubles(
      {3, 3}, {0.31, 0.87, 0.55, 0.12, 0.98, 0.44, 0.73, 0.26, 0.69}, Prec::f64);
  out.push_back(fd_check("max_all", {distinct}, [](Tape&, const std::vector<Tensor>& x) {
    return ops::max(x[0]);
  }));
  out.push_back(fd_check("max_axis0", {distinct},
                         weighted(w3, [](const auto& x) { return ops::max(x[0], 0); })));
  out.push_back(fd_check("max_axis1", {distinct},
                         weighted(w3, [](const auto& x) { return ops::max(x[0], 1); })));
  out.push_back(fd_check("elem_gather", {w33.clone_values()}, weighted(w22, [](const auto& x) {
                           return ops::elem_gather(x[0], {0, 4, 8, 2}, {2, 2});
                         })));
  out.push_back(fd_check("elem_scatter_add", {rnd(rng, {4}, 0.5, 1.5)},
                         weighted(w33, [](const auto& x) {
                           return ops::elem_scatter_add(x[0], {5, 2, 7, 0}, {3, 3});
                         })));
  out.push_back(fd_check("row_gather", {rnd(rng, {4, 3}, 0.5, 1.5)},
                         weighted(w33, [](const auto& x) {
                           return ops::row_gather(x[0], {2, 0, 2});
                         })));
  out.push_back(fd_check("concat_rows", {a23(), rnd(rng, {1, 3}, 0.5, 1.5)},
                         weighted(w33, [](const auto& x) {
                           return ops::concat_rows({x[0], x[1]});
                         })));
  out.push_back(fd_check("softmax_rows", {rnd(rng, {3, 4}, -1.0, 1.0)},
                         weighted(w34, [](const auto& x) { return ops::softmax_rows(x[0]); })));
  out.push_back(fd_check("l2_normalize_rows", {rnd(rng, {3, 4}, 0.5, 1.5)},
                         weighted(w34, [](const auto& x) {
                           return ops::l2_normalize_rows(x[0]);
                         })));

  // The 1/sigma logit scaling amplifies roundoff in the difference quotient,
  // so the loss checks use a wider step.
  const double loss_h = 5e-5;
  const Tensor ev = unit_rows(rnd(rng, {4, 6}, -1.0, 1.0));
  const Tensor et = unit_rows(rnd(rng, {4, 6}, -1.0, 1.0));
  out.push_back(fd_check(
      "contrastive_l_c", {ev, et},
      [](Tape&, const std::vector<Tensor>& x) { return contrastive_loss(x[0], x[1], 0.05).l_c; },
      loss_h));
  out.push_back(fd_check("contrastive_l_v2t", {ev, et},
                         [](Tape&, const std::vector<Tensor>& x) {
                           return contrastive_loss(x[0], x[1], 0.05).l_v2t;
                         },
                         loss_h));
  out.push_back(fd_check("loss_through_normalize",
                         {rnd(rng, {4, 6}, -1.0, 1.0), rnd(rng, {4, 6}, -1.0, 1.0)},
                         [](Tape&, const std::vector<Tensor>& x) {
                           return contrastive_loss(ops::l2_normalize_rows(x[0]),
                                                   ops::l2_normalize_rows(x[1]), 0.05)
                               .l_c;
                         },
                         loss_h));

  {
    GradCheckResult r;
    r.name = "d2_x3_dx2_at_2";
    r.tol = 1e-6;
    Tape tape;
    Tensor x = tape.leaf(Tensor::scalar(2.0, Prec::f64));
    Tensor y = ops::mul(ops::mul(x, x), x);
    Tensor g = ops::grad(y, {x}, true)[0];
    Tensor g2 = ops::grad(g, {x}, false)[0];
    r.max_rel_err = std::abs(g2.item() - 12.0) / 12.0;
    r.ok = r.max_rel_err <= r.tol;
    out.push_back(r);
  }
  {
    GradCheckResult r;
    r.name = "hvp_quadratic_5x5";
    r.tol = 1e-6;
    const Tensor m = rnd(rng, {5, 5}, -1.0, 1.0);
    const Tensor sym = kernels::scale(kernels::add(m, kernels::transpose(m)), 0.5);
    const Tensor b = rnd(rng, {5}, -1.0, 1.0);
    const Tensor xv = rnd(rng, {5}, -1.0, 1.0);
    const Tensor vv = rnd(rng, {5}, -1.0, 1.0);
    Tape tape;
    Tensor x = tape.leaf(xv);
    Tensor xc = ops::reshape(x, {5, 1});
    Tensor f = ops::add(ops::scale(ops::sum(ops::mul(xc, ops::matmul(sym, xc))), 0.5),
                        ops::sum(ops::mul(b, x)));
    const Tensor got = ops::hvp(f, {x}, {vv})[0];
    const Tensor want = kernels::matmul(sym, vv.reshaped({5, 1}));
    double worst = 0.0;
    for (int64_t i = 0; i < 5; ++i) {
      const double denom = std::max({std::abs(want.at(i)), std::abs(got.at(i)), 1e-7});
      worst = std::max(worst, std::abs(got.at(i) - want.at(i)) / denom);
    }
    r.max_rel_err = worst;
    r.ok = r.max_rel_err <= r.tol;
    out.push_back(r);
  }
  {
    GradCheckResult r;
    r.name = "hvp_diag_quadratic";
    r.tol = 1e-6;
    const Tensor c = rnd(rng, {5}, 0.5, 1.5);
    const Tensor xv = rnd(rng, {5}, -1.0, 1.0);
    const Tensor vv = rnd(rng, {5}, -1.0, 1.0);
    Tape tape;
    Tensor x = tape.leaf(xv);
    Tensor f = ops::sum(ops::mul(c, ops::mul(x, x)));
    const Tensor got = ops::hvp(f, {x}, {vv})[0];
    double worst = 0.0;
    for (int64_t i = 0; i < 5; ++i) {
      const double want = 2.0 * c.at(i) * vv.at(i);
      const double denom = std::max({std::abs(want), std::abs(got.at(i)), 1e-7});
      worst = std::max(worst, std::abs(got.at(i) - want) / denom);
    }
    r.max_rel_err = worst;
    r.ok = r.max_rel_err <= r.tol;
    out.push_back(r);
  }
  return out;
}

std::vector<GradCheckResult> meta_gradient_checks(uint64_t seed, int n_seeds) {
  std::vector<GradCheckResult> out;
  EncoderConfig cfg;
  cfg.patch = 4;
  cfg.h = 8;
  cfg.w = 8;
  cfg.c = 3;
  cfg.dh = 4;
  cfg.d = 4;
  cfg.umax = 8;
  cfg.vocab = 12;
  cfg.prec = Prec::f64;
  constexpr int64_t kU = 2;
  constexpr int64_t kR = 4;
  constexpr double kAlpha = 0.1;
  constexpr double kSigma = 0.05;
  const std::vector<std::vector<int64_t>> tokens = {{1, 5, 9}, {2, 7}};

  for (int s = 0; s < n_seeds; ++s) {
    Rng rng(substream(seed, static_cast<uint64_t>(s)));
    const ModelParams params = init_params(cfg, substream(seed, 1000 + static_cast<uint64_t>(s)));
    std::vector<Tensor> inputs = {rnd(rng, {kU, 3, 8, 8}, 0.0, 1.0),
                                  rnd(rng, {kU, 3, 8, 8}, 0.0, 1.0)};
    const std::vector<Tensor> vr = {rnd(rng, {kR, 3, 8, 8}, 0.0, 1.0),
                                    rnd(rng, {kR, 3, 8, 8}, 0.0, 1.0)};

    LossFn fn = [&](Tape& tape, const std::vector<Tensor>& eps) {
      ModelParams prime = clone_params(params, tape);
      std::vector<Tensor> flat = prime.flat();
      prime.assign_flat(flat);
      std::vector<Tensor> ev_rows, et_rows;
      for (size_t b = 0; b < eps.size(); ++b) {
        ev_rows.push_back(ops::reshape(encode_video(prime, eps[b]), {1, cfg.d}));
        et_rows.push_back(ops::reshape(encode_text(prime, tokens[b]), {1, cfg.d}));
      }
      Tensor inner =
          contrastive_loss(ops::concat_rows(ev_rows), ops::concat_rows(et_rows), kSigma).l_c;
      flat = sgd_step_differentiable(flat, inner, kAlpha, true);
      prime.assign_flat(flat);
      std::vector<Tensor> mv_rows, mt_rows;
      for (size_t b = 0; b < vr.size(); ++b) {
        mv_rows.push_back(ops::reshape(encode_video(prime, vr[b]), {1, cfg.d}));
        mt_rows.push_back(ops::reshape(encode_text(prime, tokens[b]), {1, cfg.d}));
      }
      return contrastive_loss(ops::concat_rows(mv_rows), ops::concat_rows(mt_rows), kSigma).l_c;
    };

    std::vector<std::pair<size_t, int64_t>> pixels;
    for (int p = 0; p < 10; ++p) {
      const size_t which = static_cast<size_t>(rng.below(2));
      pixels.emplace_back(which, static_cast<int64_t>(rng.below(
                                     static_cast<uint64_t>(inputs[which].numel()))));
    }

    GradCheckResult r;
    r.name = "meta_gradient_seed" + std::to_string(s);
    r.tol = 1e-3;
    r.max_rel_err = fd_max_rel_err(inputs, fn, 1e-4, &pixels);
    r.ok = r.max_rel_err <= r.tol;
    out.push_back(r);
  }
  return out;
}

std::vector<GradCheckResult> run_grad_check_battery(uint64_t seed) {
  std::vector<GradCheckResult> out = primitive_grad_checks(seed);
  std::vector<GradCheckResult> meta = meta_gradient_checks(seed, 5);
  out.insert(out.end(), meta.begin(), meta.end());
  return out;
}

}  // namespace mof
