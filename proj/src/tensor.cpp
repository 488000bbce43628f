#include "mof/tensor.hpp"

#include <bit>
#include <cmath>
#include <sstream>

namespace mof {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) {
    if (e < 0) throw ShapeError("negative extent in shape " + shape_str(s));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, Prec p) { return full(std::move(shape), 0.0, p); }

Tensor Tensor::full(Shape shape, double value, Prec p) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.prec_ = p;
  t.storage_ = std::make_shared<Storage>();
  int64_t n = shape_numel(t.shape_);
  if (p == Prec::f32)
    t.storage_->buf = std::vector<float>(static_cast<size_t>(n), static_cast<float>(value));
  else
    t.storage_->buf = std::vector<double>(static_cast<size_t>(n), value);
  return t;
}

Tensor Tensor::scalar(double value, Prec p) { return full(Shape{}, value, p); }

Tensor Tensor::from_doubles(Shape shape, const std::vector<double>& vals, Prec p) {
  Tensor t = zeros(std::move(shape), p);
  if (static_cast<int64_t>(vals.size()) != t.numel())
    throw ShapeError("from_doubles: " + std::to_string(vals.size()) + " values for shape " +
                     shape_str(t.shape()));
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, vals[static_cast<size_t>(i)]);
  return t;
}

int64_t Tensor::numel() const {
  if (!storage_) return 0;
  return shape_numel(shape_);
}

double Tensor::at(int64_t i) const {
  if (!storage_) throw Error("tensor: undefined");
  if (i < 0 || i >= numel())
    throw ShapeError("tensor: index " + std::to_string(i) + " out of range " +
                     std::to_string(numel()));
  if (prec_ == Prec::f32) return static_cast<double>(data<float>()[static_cast<size_t>(i)]);
  return data<double>()[static_cast<size_t>(i)];
}

void Tensor::set(int64_t i, double v) {
  if (!storage_) throw Error("tensor: undefined");
  if (i < 0 || i >= numel())
    throw ShapeError("tensor: index " + std::to_string(i) + " out of range " +
                     std::to_string(numel()));
  if (prec_ == Prec::f32)
    data<float>()[static_cast<size_t>(i)] = static_cast<float>(v);
  else
    data<double>()[static_cast<size_t>(i)] = v;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor has " + std::to_string(numel()) + " elements");
  return at(0);
}

bool Tensor::all_finite() const {
  if (!storage_) return true;
  if (prec_ == Prec::f32) {
    for (float v : data<float>())
      if (!std::isfinite(v)) return false;
  } else {
    for (double v : data<double>())
      if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::clone_values() const {
  if (!storage_) return Tensor();
  Tensor t;
  t.shape_ = shape_;
  t.prec_ = prec_;
  t.storage_ = std::make_shared<Storage>(*storage_);
  return t;
}

Tensor Tensor::reshaped(Shape s) const {
  if (shape_numel(s) != numel())
    throw ShapeError("reshape: " + shape_str(shape_) + " to " + shape_str(s) +
                     " changes element count");
  Tensor t = clone_values();
  t.shape_ = std::move(s);
  return t;
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = -1;
  return t;
}

Tensor Tensor::cast(Prec p) const {
  if (on_tape()) throw Error("cast: only constants can change precision");
  if (p == prec_) return clone_values();
  Tensor t = zeros(shape_, p);
  for (int64_t i = 0; i < numel(); ++i) t.set(i, at(i));
  return t;
}

bool Tensor::bitwise_equal(const Tensor& o) const {
  if (shape_ != o.shape_ || prec_ != o.prec_) return false;
  if (!storage_ || !o.storage_) return storage_ == o.storage_;
  if (prec_ == Prec::f32) {
    auto a = data<float>();
    auto b = o.data<float>();
    for (size_t i = 0; i < a.size(); ++i)
      if (std::bit_cast<uint32_t>(a[i]) != std::bit_cast<uint32_t>(b[i])) return false;
  } else {
    auto a = data<double>();
    auto b = o.data<double>();
    for (size_t i = 0; i < a.size(); ++i)
      if (std::bit_cast<uint64_t>(a[i]) != std::bit_cast<uint64_t>(b[i])) return false;
  }
  return true;
}

}  // namespace mof
