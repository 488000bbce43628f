#include "mof/optim.hpp"

#include <cmath>

#include "mof/ops.hpp"

namespace mof {

AdamState AdamState::init_like(const std::vector<Tensor>& params) {
  AdamState s;
  for (const Tensor& p : params) {
    s.m.push_back(Tensor::zeros(p.shape(), p.prec()));
    s.v.push_back(Tensor::zeros(p.shape(), p.prec()));
  }
  return s;
}

AdamWState AdamWState::init_like(const std::vector<Tensor>& params) {
  AdamWState s;
  s.adam = AdamState::init_like(params);
  return s;
}

namespace {

template <typename T>
void adam_core(std::span<T> p, std::span<const T> g, std::span<T> m, std::span<T> v, T lr,
               T beta1, T beta2, T eps, int64_t t) {
  T bc1 = T(1) - static_cast<T>(std::pow(beta1, static_cast<T>(t)));
  T bc2 = T(1) - static_cast<T>(std::pow(beta2, static_cast<T>(t)));
  for (size_t i = 0; i < p.size(); ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
    T m_hat = m[i] / bc1;
    T v_hat = v[i] / bc2;
    p[i] = p[i] - lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

template <typename T>
void decay_core(std::span<T> p, T lr, T wd) {
  for (size_t i = 0; i < p.size(); ++i) p[i] = p[i] - lr * wd * p[i];
}

void check_aligned(const std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                   const AdamState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size())
    throw ShapeError("adam: params/grads/state count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape() || params[i].shape() != state.m[i].shape())
      throw ShapeError("adam: shape mismatch at param " + std::to_string(i) + ": param " +
                       shape_str(params[i].shape()) + ", grad " + shape_str(grads[i].shape()));
    if (params[i].prec() != grads[i].prec())
      throw ShapeError("adam: precision mismatch at param " + std::to_string(i));
  }
}

}  // namespace

void adam_step(std::vector<Tensor> params, const std::vector<Tensor>& grads, AdamState& state,
               double lr) {
  check_aligned(params, grads, state);
  state.step_count += 1;
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].prec() == Prec::f32)
      adam_core<float>(params[i].data<float>(), grads[i].data<float>(),
                       state.m[i].data<float>(), state.v[i].data<float>(),
                       static_cast<float>(lr), static_cast<float>(state.beta1),
                       static_cast<float>(state.beta2), static_cast<float>(state.eps),
                       state.step_count);
    else
      adam_core<double>(params[i].data<double>(), grads[i].data<double>(),
                        state.m[i].data<double>(), state.v[i].data<double>(), lr, state.beta1,
                        state.beta2, state.eps, state.step_count);
  }
}

void adamw_step(std::vector<Tensor> params, const std::vector<Tensor>& grads, AdamWState& state,
                double lr) {
  check_aligned(params, grads, state.adam);
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].prec() == Prec::f32)
      decay_core<float>(params[i].data<float>(), static_cast<float>(lr),
                        static_cast<float>(state.weight_decay));
    else
      decay_core<double>(params[i].data<double>(), lr, state.weight_decay);
  }
  adam_step(params, grads, state.adam, lr);
}

std::vector<Tensor> sgd_step_differentiable(const std::vector<Tensor>& params, const Tensor& loss,
                                            double lr, bool create_graph) {
  std::vector<Tensor> grads = ops::grad(loss, params, create_graph);
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (size_t i = 0; i < params.size(); ++i)
    out.push_back(ops::sub(params[i], ops::scale(grads[i], lr)));
  return out;
}

std::vector<io::NamedTensor> adam_records(const std::string& prefix, const AdamState& state,
                                          const std::vector<std::string>& names) {
  if (names.size() != state.m.size())
    throw ShapeError("adam_records: " + std::to_string(names.size()) + " names for " +
                     std::to_string(state.m.size()) + " moments");
  std::vector<io::NamedTensor> out;
  out.push_back({prefix + "meta",
                 Tensor::from_doubles({4},
                                      {static_cast<double>(state.step_count), state.beta1,
                                       state.beta2, state.eps},
                                      Prec::f64)});
  for (size_t i = 0; i < names.size(); ++i) {
    out.push_back({prefix + "m." + names[i], state.m[i]});
    out.push_back({prefix + "v." + names[i], state.v[i]});
  }
  return out;
}

AdamState adam_from_records(const std::string& prefix,
                            const std::vector<io::NamedTensor>& records,
                            const std::vector<std::string>& names) {
  AdamState s;
  const Tensor& meta = io::find_record(records, prefix + "meta");
  if (meta.numel() != 4) throw IoError("optimizer state: malformed '" + prefix + "meta'");
  s.step_count = static_cast<int64_t>(meta.at(0));
  s.beta1 = meta.at(1);
  s.beta2 = meta.at(2);
  s.eps = meta.at(3);
  for (const std::string& n : names) {
    s.m.push_back(io::find_record(records, prefix + "m." + n).clone_values());
    s.v.push_back(io::find_record(records, prefix + "v." + n).clone_values());
  }
  return s;
}

std::vector<io::NamedTensor> adamw_records(const std::string& prefix, const AdamWState& state,
                                           const std::vector<std::string>& names) {
  std::vector<io::NamedTensor> out = adam_records(prefix, state.adam, names);
  out.push_back({prefix + "wd", Tensor::from_doubles({1}, {state.weight_decay}, Prec::f64)});
  return out;
}

AdamWState adamw_from_records(const std::string& prefix,
                              const std::vector<io::NamedTensor>& records,
                              const std::vector<std::string>& names) {
  AdamWState s;
  s.adam = adam_from_records(prefix, records, names);
  const Tensor& wd = io::find_record(records, prefix + "wd");
  if (wd.numel() != 1) throw IoError("optimizer state: malformed '" + prefix + "wd'");
  s.weight_decay = wd.at(0);
  return s;
}

}  // namespace mof
