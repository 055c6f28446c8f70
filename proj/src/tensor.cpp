#include "ahl/tensor.hpp"

#include <algorithm>
#include <numeric>

#include "ahl/errors.hpp"

namespace ahl {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->values = std::make_shared<std::vector<double>>(std::move(values));
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1}, {v}, requires_grad); }

const Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return *impl_;
}

Tensor::Impl& Tensor::shared_impl() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw IndexError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return impl().values->size(); }

std::span<const double> Tensor::values() const { return *impl().values; }

std::span<double> Tensor::mutable_values() const { return *shared_impl().values; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return (*impl().values)[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

bool Tensor::has_grad() const { return !impl().grad.empty(); }

std::span<const double> Tensor::grad() const { return impl().grad; }

std::span<double> Tensor::mutable_grad() const {
  auto& im = shared_impl();
  if (im.grad.empty()) im.grad.assign(im.values->size(), 0.0);
  return im.grad;
}

void Tensor::zero_grad() const {
  auto& g = shared_impl().grad;
  std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::detached() const {
  auto impl = std::make_shared<Impl>();
  impl->shape = this->impl().shape;
  impl->values = this->impl().values;
  impl->requires_grad = false;
  return Tensor(std::move(impl));
}

bool Tensor::same_storage(const Tensor& other) const {
  return impl_ && other.impl_ && impl_->values == other.impl_->values;
}

void Tape::backward(Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) throw ContractError("backward() on a loss that does not require grad");
  loss.mutable_grad()[0] = 1.0;
  for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
}

}  // namespace ahl
