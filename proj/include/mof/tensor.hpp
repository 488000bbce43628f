#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mof/error.hpp"

namespace mof {

enum class Prec : uint8_t { f32 = 0, f64 = 1 };

inline const char* prec_name(Prec p) { return p == Prec::f32 ? "f32" : "f64"; }

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

/// N-dimensional numeric array, row-major, f32 or f64.
///
/// A Tensor is a cheap handle: copies share the underlying buffer. A tensor
/// either is a plain constant or carries a node handle into a Tape, in which
/// case it participates in differentiation. On-tape tensors must not outlive
/// their tape.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, Prec p);
  static Tensor full(Shape shape, double value, Prec p);
  static Tensor scalar(double value, Prec p);  // rank-0
  static Tensor from_doubles(Shape shape, const std::vector<double>& vals, Prec p);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t numel() const;
  Prec prec() const { return prec_; }

  /// Element access with conversion to/from double. Fine for setup and
  /// checks; kernels use the typed spans below.
  double at(int64_t i) const;
  void set(int64_t i, double v);
  double item() const;  // requires numel()==1

  template <typename T>
  std::span<T> data() {
    check_type<T>();
    return std::span<T>(std::get<std::vector<T>>(storage_->buf));
  }
  template <typename T>
  std::span<const T> data() const {
    check_type<T>();
    return std::span<const T>(std::get<std::vector<T>>(storage_->buf));
  }

  bool on_tape() const { return tape_ != nullptr; }
  bool requires_grad() const { return on_tape(); }
  Tape* tape() const { return tape_; }
  int64_t node() const { return node_; }

  /// Queryable NaN/Inf state; the library never hides non-finite values.
  bool all_finite() const;

  /// Deep value copy with no tape association.
  Tensor clone_values() const;
  /// Deep value copy with a new shape of equal element count.
  Tensor reshaped(Shape s) const;
  /// Same buffer, no tape association.
  Tensor detached() const;
  /// Value conversion between precisions (constants only).
  Tensor cast(Prec p) const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool bitwise_equal(const Tensor& o) const;

  /// Internal: used by the tape when registering op results and leaves.
  void bind_node(Tape* tape, int64_t node) {
    tape_ = tape;
    node_ = node;
  }

 private:
  struct Storage {
    std::variant<std::vector<float>, std::vector<double>> buf;
  };

  template <typename T>
  void check_type() const {
    if (!storage_) throw Error("tensor: undefined");
    if (!std::holds_alternative<std::vector<T>>(storage_->buf))
      throw Error("tensor: precision mismatch in typed access");
  }

  std::shared_ptr<Storage> storage_;
  Shape shape_;
  Prec prec_ = Prec::f32;
  Tape* tape_ = nullptr;
  int64_t node_ = -1;
};

}  // namespace mof
