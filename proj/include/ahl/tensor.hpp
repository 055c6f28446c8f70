#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ahl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float64 tensor with an optional gradient buffer.
//
// Tensor is a handle: copies share the same storage. Values are treated as
// immutable once an op has produced them; only parameters are updated in
// place by the optimizer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> values() const;
  std::span<double> mutable_values() const;
  double item() const;

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zero-filled gradient buffer on first use.
  std::span<double> mutable_grad() const;
  void zero_grad() const;

  // Shares the value storage but never records or receives gradients.
  Tensor detached() const;

  bool same_storage(const Tensor& other) const;

 private:
  struct Impl {
    Shape shape;
    std::shared_ptr<std::vector<double>> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  const Impl& impl() const;
  // Storage is shared between handles, so mutation does not depend on the
  // constness of a particular handle.
  Impl& shared_impl() const;

  std::shared_ptr<Impl> impl_;
};

// Ordered record of executed operations. Each entry is the backward rule of
// one op, closed over its operands and result.
class Tape {
 public:
  void record(std::function<void()> backward_rule) { rules_.push_back(std::move(backward_rule)); }
  std::size_t size() const { return rules_.size(); }
  void clear() { rules_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays the rules in reverse order.
  void backward(Tensor& loss);

 private:
  std::vector<std::function<void()>> rules_;
};

inline void backward(Tape& tape, Tensor& loss) { tape.backward(loss); }

}  // namespace ahl
