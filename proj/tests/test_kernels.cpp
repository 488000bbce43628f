#include <cmath>
#include <vector>

#include "doctest.h"
#include "mof/error.hpp"
#include "mof/kernels.hpp"
#include "mof/rng.hpp"
#include "mof/tensor.hpp"

using namespace mof;
namespace k = mof::kernels;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, Prec p = Prec::f32) {
  Tensor t = Tensor::zeros(shape, p);
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(-2.0, 2.0));
  return t;
}

struct WorkerGuard {
  int prev;
  explicit WorkerGuard(int n) : prev(k::workers()) { k::set_workers(n); }
  ~WorkerGuard() { k::set_workers(prev); }
};

}  // namespace

TEST_CASE("elementwise ops compute the expected values") {
  Tensor a = Tensor::from_doubles({4}, {1, 2, 3, 4}, Prec::f64);
  Tensor b = Tensor::from_doubles({4}, {4, 3, 2, 1}, Prec::f64);
  CHECK(k::add(a, b).at(0) == 5.0);
  CHECK(k::sub(a, b).at(3) == 3.0);
  CHECK(k::mul(a, b).at(1) == 6.0);
  CHECK(k::div(a, b).at(2) == doctest::Approx(1.5));
  CHECK(k::scale(a, 0.5).at(3) == 2.0);
  CHECK(k::add_scalar(a, 10.0).at(0) == 11.0);
  CHECK(k::neg(a).at(0) == -1.0);
  CHECK(k::exp(Tensor::scalar(0.0, Prec::f64)).item() == 1.0);
  CHECK(k::log(Tensor::scalar(std::exp(1.0), Prec::f64)).item() == doctest::Approx(1.0));
  CHECK(k::sqrt(Tensor::scalar(9.0, Prec::f64)).item() == 3.0);
  CHECK(k::tanh(Tensor::scalar(0.0, Prec::f64)).item() == 0.0);
  CHECK(k::erf(Tensor::scalar(0.0, Prec::f64)).item() == 0.0);
}

TEST_CASE("rank-0 operands broadcast against any shape") {
  Tensor a = Tensor::from_doubles({2, 2}, {1, 2, 3, 4}, Prec::f32);
  Tensor s = Tensor::scalar(2.0, Prec::f32);
  Tensor r = k::mul(a, s);
  CHECK(r.shape() == Shape{2, 2});
  CHECK(r.at(3) == 8.0f);
  Tensor l = k::sub(s, a);
  CHECK(l.at(0) == 1.0f);
  CHECK(l.at(3) == -2.0f);
}

TEST_CASE("mismatched shapes are rejected") {
  Tensor a = Tensor::zeros({2, 3}, Prec::f32);
  Tensor b = Tensor::zeros({3, 2}, Prec::f32);
  CHECK_THROWS_AS(k::add(a, b), ShapeError);
}

TEST_CASE("div names the first zero divisor") {
  Tensor a = Tensor::from_doubles({3}, {1, 1, 1}, Prec::f32);
  Tensor b = Tensor::from_doubles({3}, {1, 0, 2}, Prec::f32);
  CHECK_THROWS_WITH_AS(k::div(a, b), doctest::Contains("index 1"), ValueError);
}

TEST_CASE("log and sqrt validate their domains") {
  Tensor bad = Tensor::from_doubles({2}, {1.0, -1.0}, Prec::f64);
  CHECK_THROWS_AS(k::log(bad), ValueError);
  CHECK_THROWS_AS(k::sqrt(bad), ValueError);
  CHECK_THROWS_AS(k::log(Tensor::scalar(0.0, Prec::f64)), ValueError);
}

TEST_CASE("matmul matches a hand-computed product") {
  Tensor a = Tensor::from_doubles({2, 3}, {1, 2, 3, 4, 5, 6}, Prec::f64);
  Tensor b = Tensor::from_doubles({3, 2}, {7, 8, 9, 10, 11, 12}, Prec::f64);
  Tensor c = k::matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(c.at(0) == 58.0);
  CHECK(c.at(1) == 64.0);
  CHECK(c.at(2) == 139.0);
  CHECK(c.at(3) == 154.0);
  CHECK_THROWS_AS(k::matmul(a, a), ShapeError);
}

TEST_CASE("transpose flips a rank-2 tensor") {
  Tensor a = Tensor::from_doubles({2, 3}, {1, 2, 3, 4, 5, 6}, Prec::f32);
  Tensor t = k::transpose(a);
  CHECK(t.shape() == Shape{3, 2});
  CHECK(t.at(0) == 1.0f);
  CHECK(t.at(1) == 4.0f);
  CHECK(t.at(4) == 3.0f);
}

TEST_CASE("reductions match references") {
  Tensor a = Tensor::from_doubles({2, 3}, {1, -2, 3, 4, 5, -6}, Prec::f64);
  CHECK(k::sum_all(a).item() == 5.0);
  CHECK(k::max_all(a).item() == 5.0);
  Tensor s0 = k::sum_axis0(a);
  CHECK(s0.shape() == Shape{3});
  CHECK(s0.at(0) == 5.0);
  CHECK(s0.at(2) == -3.0);
  Tensor s1 = k::sum_axis1(a);
  CHECK(s1.shape() == Shape{2});
  CHECK(s1.at(0) == 2.0);
  Tensor m0 = k::max_axis0(a);
  CHECK(m0.at(1) == 5.0);
  Tensor m1 = k::max_axis1(a);
  CHECK(m1.at(1) == 5.0);
}

TEST_CASE("max_mask flags only the first element equal to the max") {
  Tensor a = Tensor::from_doubles({1, 4}, {3, 7, 7, 1}, Prec::f64);
  Tensor m = k::max_axis1(a);
  Tensor mask = k::max_mask(a, m, 1);
  CHECK(mask.at(0) == 0.0);
  CHECK(mask.at(1) == 1.0);
  CHECK(mask.at(2) == 0.0);
  CHECK(mask.at(3) == 0.0);
}

TEST_CASE("gather and scatter_add move elements as documented") {
  Tensor a = Tensor::from_doubles({4}, {10, 20, 30, 40}, Prec::f64);
  Tensor g = k::elem_gather(a, {3, 0, 3}, {3});
  CHECK(g.at(0) == 40.0);
  CHECK(g.at(1) == 10.0);
  CHECK(g.at(2) == 40.0);

  Tensor src = Tensor::from_doubles({3}, {1, 2, 4}, Prec::f64);
  Tensor s = k::elem_scatter_add(src, {1, 1, 0}, {2});
  CHECK(s.at(0) == 4.0);
  CHECK(s.at(1) == 3.0);

  CHECK_THROWS_AS(k::elem_gather(a, {4}, {1}), ShapeError);
  CHECK_THROWS_AS(k::elem_scatter_add(src, {2, 0, 1}, {2}), ShapeError);
}

TEST_CASE("concat_rows stacks rank-2 parts") {
  Tensor a = Tensor::from_doubles({1, 2}, {1, 2}, Prec::f32);
  Tensor b = Tensor::from_doubles({2, 2}, {3, 4, 5, 6}, Prec::f32);
  Tensor c = k::concat_rows({a, b});
  CHECK(c.shape() == Shape{3, 2});
  CHECK(c.at(0) == 1.0f);
  CHECK(c.at(5) == 6.0f);
}

TEST_CASE("worker count drives the auto policy") {
  WorkerGuard guard(1);
  CHECK(k::workers() == 1);
  CHECK_FALSE(k::resolve_parallel(k::Exec::Auto));
  CHECK_FALSE(k::resolve_parallel(k::Exec::Serial));
  CHECK(k::resolve_parallel(k::Exec::Parallel));
  k::set_workers(4);
  CHECK(k::resolve_parallel(k::Exec::Auto));
}

TEST_CASE("serial and parallel paths agree bitwise") {
  Rng rng(7);
  WorkerGuard guard(4);

  Tensor a = random_tensor({61, 47}, rng);
  Tensor b = random_tensor({61, 47}, rng);
  for (auto op : {k::add, k::sub, k::mul}) {
    CHECK(op(a, b, k::Exec::Serial).bitwise_equal(op(a, b, k::Exec::Parallel)));
  }
  Tensor nz = k::add_scalar(k::mul(b, b), 1.0);
  CHECK(k::div(a, nz, k::Exec::Serial).bitwise_equal(k::div(a, nz, k::Exec::Parallel)));
  CHECK(k::scale(a, 1.7, k::Exec::Serial).bitwise_equal(k::scale(a, 1.7, k::Exec::Parallel)));
  CHECK(k::exp(a, k::Exec::Serial).bitwise_equal(k::exp(a, k::Exec::Parallel)));
  CHECK(k::tanh(a, k::Exec::Serial).bitwise_equal(k::tanh(a, k::Exec::Parallel)));
  CHECK(k::erf(a, k::Exec::Serial).bitwise_equal(k::erf(a, k::Exec::Parallel)));

  Tensor m1 = random_tensor({37, 29}, rng);
  Tensor m2 = random_tensor({29, 31}, rng);
  CHECK(k::matmul(m1, m2, k::Exec::Serial).bitwise_equal(k::matmul(m1, m2, k::Exec::Parallel)));
  CHECK(k::transpose(m1, k::Exec::Serial).bitwise_equal(k::transpose(m1, k::Exec::Parallel)));
  CHECK(k::sum_axis0(m1, k::Exec::Serial).bitwise_equal(k::sum_axis0(m1, k::Exec::Parallel)));
  CHECK(k::sum_axis1(m1, k::Exec::Serial).bitwise_equal(k::sum_axis1(m1, k::Exec::Parallel)));
  CHECK(k::max_axis0(m1, k::Exec::Serial).bitwise_equal(k::max_axis0(m1, k::Exec::Parallel)));
  CHECK(k::max_axis1(m1, k::Exec::Serial).bitwise_equal(k::max_axis1(m1, k::Exec::Parallel)));

  std::vector<int64_t> idx;
  for (int64_t i = 0; i < 200; ++i) idx.push_back(rng.range(0, m1.numel()));
  CHECK(k::elem_gather(m1, idx, {200}, k::Exec::Serial)
            .bitwise_equal(k::elem_gather(m1, idx, {200}, k::Exec::Parallel)));
}

TEST_CASE("whole-tensor reductions are identical across worker counts") {
  Rng rng(11);
  Tensor a = random_tensor({999}, rng);
  double serial, parallel;
  {
    WorkerGuard guard(1);
    serial = k::sum_all(a).item();
  }
  {
    WorkerGuard guard(8);
    parallel = k::sum_all(a).item();
  }
  CHECK(serial == parallel);
}
