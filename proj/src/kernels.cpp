#include "mof/kernels.hpp"

#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mof::kernels {

namespace {

std::atomic<int> g_workers{1};

// Below this element count the parallel path is never taken under Auto; tiny
// tensors dominate this workload and thread startup would swamp them.
constexpr int64_t kGrain = 4096;

void require_defined(const Tensor& t, const char* name) {
  if (!t.defined()) throw Error(std::string(name) + ": undefined tensor");
}

void require_same_prec(const Tensor& a, const Tensor& b, const char* name) {
  if (a.prec() != b.prec())
    throw Error(std::string(name) + ": precision mismatch (" + prec_name(a.prec()) + " vs " +
                prec_name(b.prec()) + ")");
}

void require_rank2(const Tensor& t, const char* name) {
  if (t.rank() != 2)
    throw ShapeError(std::string(name) + ": expected rank 2, got " + shape_str(t.shape()));
}

template <typename T, class F>
void bin_core(const T* a, int64_t sa, const T* b, int64_t sb, T* o, int64_t n, F f, bool par) {
#ifdef _OPENMP
  if (par && n >= kGrain) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) o[i] = f(a[i * sa], b[i * sb]);
    return;
  }
#endif
  (void)par;
  for (int64_t i = 0; i < n; ++i) o[i] = f(a[i * sa], b[i * sb]);
}

template <class F>
Tensor binary_ew(const Tensor& a, const Tensor& b, F f, Exec ex, const char* name) {
  require_defined(a, name);
  require_defined(b, name);
  require_same_prec(a, b, name);
  if (!a.same_shape(b) && a.rank() != 0 && b.rank() != 0)
    throw ShapeError(std::string(name) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " (equal shapes or a scalar operand required)");
  const Tensor& lead = a.rank() != 0 ? a : b;
  Tensor out = Tensor::zeros(lead.shape(), a.prec());
  int64_t n = out.numel();
  int64_t sa = a.rank() == 0 ? 0 : 1;
  int64_t sb = b.rank() == 0 ? 0 : 1;
  bool par = resolve_parallel(ex);
  if (a.prec() == Prec::f32)
    bin_core(a.data<float>().data(), sa, b.data<float>().data(), sb, out.data<float>().data(), n,
             f, par);
  else
    bin_core(a.data<double>().data(), sa, b.data<double>().data(), sb, out.data<double>().data(),
             n, f, par);
  return out;
}

template <typename T, class F>
void un_core(const T* a, T* o, int64_t n, F f, bool par) {
#ifdef _OPENMP
  if (par && n >= kGrain) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) o[i] = f(a[i]);
    return;
  }
#endif
  (void)par;
  for (int64_t i = 0; i < n; ++i) o[i] = f(a[i]);
}

template <class F>
Tensor unary_ew(const Tensor& a, F f, Exec ex, const char* name) {
  require_defined(a, name);
  Tensor out = Tensor::zeros(a.shape(), a.prec());
  bool par = resolve_parallel(ex);
  if (a.prec() == Prec::f32)
    un_core(a.data<float>().data(), out.data<float>().data(), a.numel(), f, par);
  else
    un_core(a.data<double>().data(), out.data<double>().data(), a.numel(), f, par);
  return out;
}

template <class Pred>
void check_domain(const Tensor& t, Pred bad, const char* name, const char* what) {
  for (int64_t i = 0; i < t.numel(); ++i) {
    if (bad(t.at(i)))
      throw ValueError(std::string(name) + ": " + what + " at flat index " + std::to_string(i) +
                       " (value " + std::to_string(t.at(i)) + ")");
  }
}

template <typename T>
void matmul_core(const T* a, const T* b, T* o, int64_t m, int64_t k, int64_t n, bool par) {
#ifdef _OPENMP
  if (par && m * n >= kGrain / 8) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        T acc = 0;
        for (int64_t kk = 0; kk < k; ++kk) acc += a[i * k + kk] * b[kk * n + j];
        o[i * n + j] = acc;
      }
    }
    return;
  }
#endif
  (void)par;
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      T acc = 0;
      for (int64_t kk = 0; kk < k; ++kk) acc += a[i * k + kk] * b[kk * n + j];
      o[i * n + j] = acc;
    }
  }
}

template <typename T>
void sum_axis1_core(const T* a, T* o, int64_t m, int64_t n, bool par) {
#ifdef _OPENMP
  if (par && m * n >= kGrain) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) {
      T acc = 0;
      for (int64_t j = 0; j < n; ++j) acc += a[i * n + j];
      o[i] = acc;
    }
    return;
  }
#endif
  (void)par;
  for (int64_t i = 0; i < m; ++i) {
    T acc = 0;
    for (int64_t j = 0; j < n; ++j) acc += a[i * n + j];
    o[i] = acc;
  }
}

template <typename T>
void sum_axis0_core(const T* a, T* o, int64_t m, int64_t n, bool par) {
#ifdef _OPENMP
  if (par && m * n >= kGrain) {
#pragma omp parallel for schedule(static)
    for (int64_t j = 0; j < n; ++j) {
      T acc = 0;
      for (int64_t i = 0; i < m; ++i) acc += a[i * n + j];
      o[j] = acc;
    }
    return;
  }
#endif
  (void)par;
  for (int64_t j = 0; j < n; ++j) {
    T acc = 0;
    for (int64_t i = 0; i < m; ++i) acc += a[i * n + j];
    o[j] = acc;
  }
}

template <typename T>
void max_axis1_core(const T* a, T* o, int64_t m, int64_t n, bool par) {
#ifdef _OPENMP
  if (par && m * n >= kGrain) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) {
      T best = a[i * n];
      for (int64_t j = 1; j < n; ++j)
        if (a[i * n + j] > best) best = a[i * n + j];
      o[i] = best;
    }
    return;
  }
#endif
  (void)par;
  for (int64_t i = 0; i < m; ++i) {
    T best = a[i * n];
    for (int64_t j = 1; j < n; ++j)
      if (a[i * n + j] > best) best = a[i * n + j];
    o[i] = best;
  }
}

template <typename T>
void max_axis0_core(const T* a, T* o, int64_t m, int64_t n, bool par) {
#ifdef _OPENMP
  if (par && m * n >= kGrain) {
#pragma omp parallel for schedule(static)
    for (int64_t j = 0; j < n; ++j) {
      T best = a[j];
      for (int64_t i = 1; i < m; ++i)
        if (a[i * n + j] > best) best = a[i * n + j];
      o[j] = best;
    }
    return;
  }
#endif
  (void)par;
  for (int64_t j = 0; j < n; ++j) {
    T best = a[j];
    for (int64_t i = 1; i < m; ++i)
      if (a[i * n + j] > best) best = a[i * n + j];
    o[j] = best;
  }
}

template <typename T>
void gather_core(const T* a, int64_t an, const int64_t* idx, T* o, int64_t n, bool par) {
#ifdef _OPENMP
  if (par && n >= kGrain) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) o[i] = a[idx[i]];
    return;
  }
#endif
  (void)par;
  (void)an;
  for (int64_t i = 0; i < n; ++i) o[i] = a[idx[i]];
}

}  // namespace

void set_workers(int n) {
  if (n < 1) throw ValueError("set_workers: need at least 1, got " + std::to_string(n));
  g_workers.store(n);
#ifdef _OPENMP
  omp_set_num_threads(n);
#endif
}

int workers() { return g_workers.load(); }

bool resolve_parallel(Exec ex) {
#ifdef _OPENMP
  switch (ex) {
    case Exec::Serial:
      return false;
    case Exec::Parallel:
      return true;
    case Exec::Auto:
      return g_workers.load() > 1;
  }
#endif
  (void)ex;
  return false;
}

Tensor add(const Tensor& a, const Tensor& b, Exec ex) {
  return binary_ew(a, b, [](auto x, auto y) { return x + y; }, ex, "add");
}

Tensor sub(const Tensor& a, const Tensor& b, Exec ex) {
  return binary_ew(a, b, [](auto x, auto y) { return x - y; }, ex, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b, Exec ex) {
  return binary_ew(a, b, [](auto x, auto y) { return x * y; }, ex, "mul");
}

Tensor div(const Tensor& a, const Tensor& b, Exec ex) {
  check_domain(b, [](double v) { return v == 0.0; }, "div", "zero divisor");
  return binary_ew(a, b, [](auto x, auto y) { return x / y; }, ex, "div");
}

Tensor add_scalar(const Tensor& a, double c, Exec ex) {
  return unary_ew(a,
                  [c](auto x) {
                    using T = decltype(x);
                    return static_cast<T>(x + static_cast<T>(c));
                  },
                  ex, "add_scalar");
}

Tensor scale(const Tensor& a, double c, Exec ex) {
  return unary_ew(a,
                  [c](auto x) {
                    using T = decltype(x);
                    return static_cast<T>(x * static_cast<T>(c));
                  },
                  ex, "scale");
}

Tensor exp(const Tensor& a, Exec ex) {
  return unary_ew(a, [](auto x) { return std::exp(x); }, ex, "exp");
}

Tensor log(const Tensor& a, Exec ex) {
  check_domain(a, [](double v) { return !(v > 0.0); }, "log", "nonpositive operand");
  return unary_ew(a, [](auto x) { return std::log(x); }, ex, "log");
}

Tensor tanh(const Tensor& a, Exec ex) {
  return unary_ew(a, [](auto x) { return std::tanh(x); }, ex, "tanh");
}

Tensor erf(const Tensor& a, Exec ex) {
  return unary_ew(a, [](auto x) { return std::erf(x); }, ex, "erf");
}

Tensor sqrt(const Tensor& a, Exec ex) {
  check_domain(a, [](double v) { return v < 0.0; }, "sqrt", "negative operand");
  return unary_ew(a, [](auto x) { return std::sqrt(x); }, ex, "sqrt");
}

Tensor neg(const Tensor& a, Exec ex) {
  return unary_ew(a, [](auto x) { return -x; }, ex, "neg");
}

Tensor matmul(const Tensor& a, const Tensor& b, Exec ex) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  require_same_prec(a, b, "matmul");
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.shape()[1] != b.shape()[0])
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out = Tensor::zeros({m, n}, a.prec());
  bool par = resolve_parallel(ex);
  if (a.prec() == Prec::f32)
    matmul_core(a.data<float>().data(), b.data<float>().data(), out.data<float>().data(), m, k, n,
                par);
  else
    matmul_core(a.data<double>().data(), b.data<double>().data(), out.data<double>().data(), m, k,
                n, par);
  return out;
}

Tensor transpose(const Tensor& a, Exec ex) {
  require_defined(a, "transpose");
  require_rank2(a, "transpose");
  int64_t m = a.shape()[0], n = a.shape()[1];
  Tensor out = Tensor::zeros({n, m}, a.prec());
  std::vector<int64_t> idx(static_cast<size_t>(m * n));
  for (int64_t j = 0; j < n; ++j)
    for (int64_t i = 0; i < m; ++i) idx[static_cast<size_t>(j * m + i)] = i * n + j;
  return elem_gather(a, idx, {n, m}, ex);
}

Tensor sum_all(const Tensor& a) {
  require_defined(a, "sum");
  Tensor out = Tensor::zeros({}, a.prec());
  if (a.prec() == Prec::f32) {
    float acc = 0;
    for (float v : a.data<float>()) acc += v;
    out.data<float>()[0] = acc;
  } else {
    double acc = 0;
    for (double v : a.data<double>()) acc += v;
    out.data<double>()[0] = acc;
  }
  return out;
}

Tensor sum_axis0(const Tensor& a, Exec ex) {
  require_defined(a, "sum");
  require_rank2(a, "sum axis 0");
  int64_t m = a.shape()[0], n = a.shape()[1];
  Tensor out = Tensor::zeros({n}, a.prec());
  bool par = resolve_parallel(ex);
  if (a.prec() == Prec::f32)
    sum_axis0_core(a.data<float>().data(), out.data<float>().data(), m, n, par);
  else
    sum_axis0_core(a.data<double>().data(), out.data<double>().data(), m, n, par);
  return out;
}

Tensor sum_axis1(const Tensor& a, Exec ex) {
  require_defined(a, "sum");
  require_rank2(a, "sum axis 1");
  int64_t m = a.shape()[0], n = a.shape()[1];
  Tensor out = Tensor::zeros({m}, a.prec());
  bool par = resolve_parallel(ex);
  if (a.prec() == Prec::f32)
    sum_axis1_core(a.data<float>().data(), out.data<float>().data(), m, n, par);
  else
    sum_axis1_core(a.data<double>().data(), out.data<double>().data(), m, n, par);
  return out;
}

Tensor max_all(const Tensor& a) {
  require_defined(a, "max");
  if (a.numel() == 0) throw ShapeError("max: empty tensor");
  Tensor out = Tensor::zeros({}, a.prec());
  if (a.prec() == Prec::f32) {
    auto d = a.data<float>();
    float best = d[0];
    for (float v : d)
      if (v > best) best = v;
    out.data<float>()[0] = best;
  } else {
    auto d = a.data<double>();
    double best = d[0];
    for (double v : d)
      if (v > best) best = v;
    out.data<double>()[0] = best;
  }
  return out;
}

Tensor max_axis0(const Tensor& a, Exec ex) {
  require_defined(a, "max");
  require_rank2(a, "max axis 0");
  int64_t m = a.shape()[0], n = a.shape()[1];
  if (m == 0 || n == 0) throw ShapeError("max: empty tensor");
  Tensor out = Tensor::zeros({n}, a.prec());
  bool par = resolve_parallel(ex);
  if (a.prec() == Prec::f32)
    max_axis0_core(a.data<float>().data(), out.data<float>().data(), m, n, par);
  else
    max_axis0_core(a.data<double>().data(), out.data<double>().data(), m, n, par);
  return out;
}

Tensor max_axis1(const Tensor& a, Exec ex) {
  require_defined(a, "max");
  require_rank2(a, "max axis 1");
  int64_t m = a.shape()[0], n = a.shape()[1];
  if (m == 0 || n == 0) throw ShapeError("max: empty tensor");
  Tensor out = Tensor::zeros({m}, a.prec());
  bool par = resolve_parallel(ex);
  if (a.prec() == Prec::f32)
    max_axis1_core(a.data<float>().data(), out.data<float>().data(), m, n, par);
  else
    max_axis1_core(a.data<double>().data(), out.data<double>().data(), m, n, par);
  return out;
}

Tensor max_mask(const Tensor& a, const Tensor& reduced, int axis) {
  require_defined(a, "max_mask");
  require_defined(reduced, "max_mask");
  Tensor out = Tensor::zeros(a.shape(), a.prec());
  if (axis == -1) {
    for (int64_t i = 0; i < a.numel(); ++i) {
      if (a.at(i) == reduced.at(0)) {
        out.set(i, 1.0);
        break;
      }
    }
    return out;
  }
  require_rank2(a, "max_mask");
  int64_t m = a.shape()[0], n = a.shape()[1];
  if (axis == 1) {
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        if (a.at(i * n + j) == reduced.at(i)) {
          out.set(i * n + j, 1.0);
          break;
        }
      }
    }
  } else if (axis == 0) {
    for (int64_t j = 0; j < n; ++j) {
      for (int64_t i = 0; i < m; ++i) {
        if (a.at(i * n + j) == reduced.at(j)) {
          out.set(i * n + j, 1.0);
          break;
        }
      }
    }
  } else {
    throw ShapeError("max_mask: bad axis " + std::to_string(axis));
  }
  return out;
}

Tensor elem_gather(const Tensor& a, const std::vector<int64_t>& indices, const Shape& out_shape,
                   Exec ex) {
  require_defined(a, "gather");
  int64_t n = shape_numel(out_shape);
  if (static_cast<int64_t>(indices.size()) != n)
    throw ShapeError("gather: " + std::to_string(indices.size()) + " indices for shape " +
                     shape_str(out_shape));
  for (size_t i = 0; i < indices.size(); ++i)
    if (indices[i] < 0 || indices[i] >= a.numel())
      throw ShapeError("gather: index " + std::to_string(indices[i]) + " at position " +
                       std::to_string(i) + " out of range " + std::to_string(a.numel()));
  Tensor out = Tensor::zeros(out_shape, a.prec());
  bool par = resolve_parallel(ex);
  if (a.prec() == Prec::f32)
    gather_core(a.data<float>().data(), a.numel(), indices.data(), out.data<float>().data(), n,
                par);
  else
    gather_core(a.data<double>().data(), a.numel(), indices.data(), out.data<double>().data(), n,
                par);
  return out;
}

Tensor elem_scatter_add(const Tensor& g, const std::vector<int64_t>& indices,
                        const Shape& out_shape) {
  require_defined(g, "scatter_add");
  if (static_cast<int64_t>(indices.size()) != g.numel())
    throw ShapeError("scatter_add: " + std::to_string(indices.size()) + " indices for " +
                     std::to_string(g.numel()) + " values");
  int64_t n = shape_numel(out_shape);
  Tensor out = Tensor::zeros(out_shape, g.prec());
  for (size_t i = 0; i < indices.size(); ++i)
    if (indices[i] < 0 || indices[i] >= n)
      throw ShapeError("scatter_add: index " + std::to_string(indices[i]) + " at position " +
                       std::to_string(i) + " out of range " + std::to_string(n));
  if (g.prec() == Prec::f32) {
    auto gd = g.data<float>();
    auto od = out.data<float>();
    for (size_t i = 0; i < indices.size(); ++i) od[static_cast<size_t>(indices[i])] += gd[i];
  } else {
    auto gd = g.data<double>();
    auto od = out.data<double>();
    for (size_t i = 0; i < indices.size(); ++i) od[static_cast<size_t>(indices[i])] += gd[i];
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts, Exec) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  int64_t cols = -1;
  int64_t rows = 0;
  for (const Tensor& p : parts) {
    require_defined(p, "concat");
    require_rank2(p, "concat");
    require_same_prec(parts[0], p, "concat");
    if (cols == -1) cols = p.shape()[1];
    if (p.shape()[1] != cols)
      throw ShapeError("concat: column mismatch, " + std::to_string(cols) + " vs " +
                       std::to_string(p.shape()[1]));
    rows += p.shape()[0];
  }
  Tensor out = Tensor::zeros({rows, cols}, parts[0].prec());
  int64_t at = 0;
  for (const Tensor& p : parts) {
    for (int64_t i = 0; i < p.numel(); ++i) out.set(at + i, p.at(i));
    at += p.numel();
  }
  return out;
}

}  // namespace mof::kernels
