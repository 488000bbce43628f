// Times each kernel serial vs parallel on sizes past the parallel cutover
// and checks the two paths agree bitwise. Exit 0 iff every pair matches.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mof/kernels.hpp"
#include "mof/rng.hpp"
#include "mof/tensor.hpp"

namespace {

using mof::Prec;
using mof::Rng;
using mof::Shape;
using mof::Tensor;
namespace k = mof::kernels;

Tensor rnd(Rng& rng, Shape shape, double lo, double hi) {
  std::vector<double> v(static_cast<size_t>(mof::shape_numel(shape)));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_doubles(shape, v, Prec::f32);
}

double time_ms(const std::function<Tensor()>& fn, int reps, Tensor& last) {
  last = fn();  // warm
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) last = fn();
  auto dt = std::chrono::steady_clock::now() - t0;
  return std::chrono::duration<double, std::milli>(dt).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel benchmark: serial vs parallel, with bitwise comparison"};
  int64_t n = 1 << 20;
  int64_t mm = 256;
  int reps = 5;
  int64_t workers = 4;
  app.add_option("--n", n, "elementwise kernel length");
  app.add_option("--mm", mm, "square matmul edge");
  app.add_option("--reps", reps, "timing repetitions");
  app.add_option("--workers", workers, "parallel worker count");
  CLI11_PARSE(app, argc, argv);

  k::set_workers(workers);
  Rng rng(mof::mix64(17));
  const Tensor a = rnd(rng, {n}, -1.0, 1.0);
  const Tensor b = rnd(rng, {n}, 0.5, 1.5);
  const Tensor ma = rnd(rng, {mm, mm}, -1.0, 1.0);
  const Tensor mb = rnd(rng, {mm, mm}, -1.0, 1.0);

  struct Case {
    std::string name;
    std::function<Tensor(k::Exec)> run;
  };
  const std::vector<Case> cases = {
      {"add", [&](k::Exec e) { return k::add(a, b, e); }},
      {"mul", [&](k::Exec e) { return k::mul(a, b, e); }},
      {"div", [&](k::Exec e) { return k::div(a, b, e); }},
      {"exp", [&](k::Exec e) { return k::exp(a, e); }},
      {"tanh", [&](k::Exec e) { return k::tanh(a, e); }},
      {"erf", [&](k::Exec e) { return k::erf(a, e); }},
      {"scale", [&](k::Exec e) { return k::scale(a, 1.7, e); }},
      {"matmul", [&](k::Exec e) { return k::matmul(ma, mb, e); }},
      {"transpose", [&](k::Exec e) { return k::transpose(ma, e); }},
      {"sum_axis1", [&](k::Exec e) { return k::sum_axis1(ma, e); }},
      {"max_axis1", [&](k::Exec e) { return k::max_axis1(ma, e); }},
  };

  std::printf("%-10s %12s %12s %8s %s\n", "kernel", "serial ms", "parallel ms", "speedup",
              "bitwise");
  bool all_equal = true;
  for (const Case& c : cases) {
    Tensor rs, rp;
    const double ts = time_ms([&] { return c.run(k::Exec::Serial); }, reps, rs);
    const double tp = time_ms([&] { return c.run(k::Exec::Parallel); }, reps, rp);
    const bool eq = rs.bitwise_equal(rp);
    all_equal = all_equal && eq;
    std::printf("%-10s %12.3f %12.3f %7.2fx %s\n", c.name.c_str(), ts, tp,
                tp > 0 ? ts / tp : 0.0, eq ? "equal" : "MISMATCH");
  }
  if (!all_equal) {
    std::printf("bitwise mismatch between serial and parallel paths\n");
    return 1;
  }
  return 0;
}
