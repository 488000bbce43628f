#include <cmath>
#include <vector>

#include "doctest.h"
#include "mof/error.hpp"
#include "mof/ops.hpp"
#include "mof/optim.hpp"
#include "mof/rng.hpp"
#include "mof/serialize.hpp"
#include "mof/tape.hpp"
#include "mof/tensor.hpp"

using namespace mof;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, Prec p = Prec::f64) {
  Tensor t = Tensor::zeros(shape, p);
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(-1.0, 1.0));
  return t;
}

// scalar reference of one Adam update with bias correction
double adam_reference(double p, double g, double& m, double& v, int64_t t, double lr,
                      double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
  m = b1 * m + (1 - b1) * g;
  v = b2 * v + (1 - b2) * g * g;
  double mhat = m / (1 - std::pow(b1, static_cast<double>(t)));
  double vhat = v / (1 - std::pow(b2, static_cast<double>(t)));
  return p - lr * mhat / (std::sqrt(vhat) + eps);
}

}  // namespace

TEST_CASE("adam matches the scalar reference over several steps") {
  Rng rng(1);
  Tensor p = random_tensor({5}, rng);
  std::vector<double> ref(5), m(5, 0.0), v(5, 0.0);
  for (int64_t i = 0; i < 5; ++i) ref[static_cast<size_t>(i)] = p.at(i);

  AdamState state = AdamState::init_like({p});
  for (int64_t step = 1; step <= 7; ++step) {
    Tensor g = random_tensor({5}, rng);
    adam_step({p}, {g}, state, 1e-2);
    for (int64_t i = 0; i < 5; ++i) {
      auto idx = static_cast<size_t>(i);
      ref[idx] = adam_reference(ref[idx], g.at(i), m[idx], v[idx], step, 1e-2);
      CHECK(p.at(i) == doctest::Approx(ref[idx]).epsilon(1e-12));
    }
  }
  CHECK(state.step_count == 7);
}

TEST_CASE("zero gradients leave adam parameters unchanged") {
  Tensor p = Tensor::from_doubles({3}, {1.0, -2.0, 0.5}, Prec::f64);
  Tensor before = p.clone_values();
  AdamState state = AdamState::init_like({p});
  for (int step = 0; step < 3; ++step) adam_step({p}, {Tensor::zeros({3}, Prec::f64)}, state, 0.1);
  CHECK(p.bitwise_equal(before));
}

TEST_CASE("adamw with zero decay equals adam bitwise") {
  Rng rng(2);
  Tensor pa = random_tensor({6}, rng);
  Tensor pw = pa.clone_values();
  AdamState sa = AdamState::init_like({pa});
  AdamWState sw = AdamWState::init_like({pw});
  sw.weight_decay = 0.0;
  for (int step = 0; step < 4; ++step) {
    Tensor g = random_tensor({6}, rng);
    adam_step({pa}, {g}, sa, 3e-3);
    adamw_step({pw}, {g}, sw, 3e-3);
  }
  CHECK(pw.bitwise_equal(pa));
}

TEST_CASE("adamw decay shrinks parameters before the adam update") {
  Tensor p = Tensor::from_doubles({2}, {2.0, -2.0}, Prec::f64);
  AdamWState sw = AdamWState::init_like({p});
  sw.weight_decay = 0.5;
  double lr = 0.1;
  adamw_step({p}, {Tensor::zeros({2}, Prec::f64)}, sw, lr);
  // zero gradient: only the decoupled decay p <- p - lr*wd*p acts
  CHECK(p.at(0) == doctest::Approx(2.0 * (1 - lr * 0.5)).epsilon(1e-12));
  CHECK(p.at(1) == doctest::Approx(-2.0 * (1 - lr * 0.5)).epsilon(1e-12));
}

TEST_CASE("default adamw weight decay is 0.01") {
  Tensor p = Tensor::zeros({1}, Prec::f64);
  AdamWState sw = AdamWState::init_like({p});
  CHECK(sw.weight_decay == 0.01);
}

TEST_CASE("optimizer state round-trips through checkpoint records") {
  Rng rng(3);
  Tensor p1 = random_tensor({4}, rng);
  Tensor p2 = random_tensor({2, 3}, rng);
  AdamState state = AdamState::init_like({p1, p2});
  for (int step = 0; step < 3; ++step)
    adam_step({p1, p2}, {random_tensor({4}, rng), random_tensor({2, 3}, rng)}, state, 1e-2);

  std::vector<std::string> names = {"p1", "p2"};
  std::vector<io::NamedTensor> recs = adam_records("opt.", state, names);
  AdamState back = adam_from_records("opt.", recs, names);
  CHECK(back.step_count == state.step_count);
  CHECK(back.beta1 == state.beta1);
  CHECK(back.beta2 == state.beta2);
  CHECK(back.eps == state.eps);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(back.m[i].bitwise_equal(state.m[i]));
    CHECK(back.v[i].bitwise_equal(state.v[i]));
  }

  // a restored optimizer continues exactly like the original
  Tensor pa = p1.clone_values(), pb = p1.clone_values();
  Tensor ga = random_tensor({4}, rng);
  AdamState sa = state;
  sa.m = {state.m[0].clone_values()};
  sa.v = {state.v[0].clone_values()};
  AdamState sb;
  sb = adam_from_records("opt.", recs, names);
  sb.m = {sb.m[0]};
  sb.v = {sb.v[0]};
  adam_step({pa}, {ga}, sa, 1e-2);
  adam_step({pb}, {ga}, sb, 1e-2);
  CHECK(pa.bitwise_equal(pb));
}

TEST_CASE("missing optimizer records are an io error") {
  Tensor p = Tensor::zeros({2}, Prec::f64);
  AdamState state = AdamState::init_like({p});
  std::vector<io::NamedTensor> recs = adam_records("opt.", state, {"p"});
  CHECK_THROWS_AS(adam_from_records("opt.", recs, {"q"}), IoError);
}

TEST_CASE("differentiable sgd computes p minus lr grad") {
  Tape tape;
  Tensor p = tape.leaf(Tensor::from_doubles({2}, {1.0, 2.0}, Prec::f64));
  Tensor loss = ops::sum(ops::mul(p, p));  // grad = 2p
  std::vector<Tensor> stepped = sgd_step_differentiable({p}, loss, 0.1);
  CHECK(stepped[0].at(0) == doctest::Approx(1.0 - 0.1 * 2.0));
  CHECK(stepped[0].at(1) == doctest::Approx(2.0 - 0.1 * 4.0));
}

TEST_CASE("the unrolled sgd step carries second-order structure") {
  // L(p) = p^2, p' = p - lr*2p, meta(p') = p'^2
  // d meta / dp = 2 p (1 - 2 lr)^2; the severed version drops the inner
  // gradient's own dependence: d/dp (p - lr*c)^2 = 2 (p - lr*2p)
  double lr = 0.1, p0 = 3.0;

  Tape tape;
  Tensor p = tape.leaf(Tensor::scalar(p0, Prec::f64));
  Tensor loss = ops::mul(p, p);
  std::vector<Tensor> stepped = sgd_step_differentiable({p}, loss, lr, true);
  Tensor meta = ops::mul(stepped[0], stepped[0]);
  std::vector<Tensor> g = ops::grad(meta, {p}, false);
  CHECK(g[0].item() == doctest::Approx(2 * p0 * (1 - 2 * lr) * (1 - 2 * lr)).epsilon(1e-12));

  Tape tape2;
  Tensor q = tape2.leaf(Tensor::scalar(p0, Prec::f64));
  Tensor loss2 = ops::mul(q, q);
  std::vector<Tensor> severed = sgd_step_differentiable({q}, loss2, lr, false);
  Tensor meta2 = ops::mul(severed[0], severed[0]);
  std::vector<Tensor> g2 = ops::grad(meta2, {q}, false);
  CHECK(g2[0].item() == doctest::Approx(2 * (p0 - lr * 2 * p0) * 1.0).epsilon(1e-12));
}

TEST_CASE("optimizers reject mismatched list lengths") {
  Tensor p = Tensor::zeros({2}, Prec::f64);
  AdamState state = AdamState::init_like({p});
  CHECK_THROWS_AS(adam_step({p}, {}, state, 0.1), Error);
}
