#include "bast/tensor.hpp"

#include <algorithm>
#include <sstream>
#ifdef __GLIBC__
#include <malloc.h>
#endif

BAST_NAMESPACE_BEGIN

namespace {

// Activation buffers are freed and reallocated every step; keeping them on the
// heap avoids a fresh zero-filled mmap for each one.
bool tune_heap() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
#endif
  return true;
}

const bool heap_tuned = tune_heap();

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  impl_->data.assign(shape_numel(shape), Real(0));
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<Real> values, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                         " values");
  }
  impl_->shape = std::move(shape);
  impl_->data.assign(values.begin(), values.end());
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(Real value) { return Tensor(Shape{1}, std::vector<Real>{value}); }

Tensor Tensor::empty(Shape shape) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->data.resize(shape_numel(shape));
  t.impl_->shape = std::move(shape);
  return t;
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(int axis) const {
  const auto& s = shape();
  int r = static_cast<int>(s.size());
  int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<Real> Tensor::data() const {
  shape();
  return impl_->data;
}

Real Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  shape();
  impl_->requires_grad = flag;
}

std::span<Real> Tensor::grad() const {
  shape();
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), Real(0));
  return impl_->grad;
}

bool Tensor::has_grad() const { return impl_ && impl_->grad.size() == impl_->data.size(); }

void Tensor::zero_grad() {
  shape();
  std::fill(impl_->grad.begin(), impl_->grad.end(), Real(0));
}

Tensor Tensor::clone() const {
  Tensor t = empty(shape());
  std::copy(impl_->data.begin(), impl_->data.end(), t.impl_->data.begin());
  return t;
}

bool Graph::tracks(std::initializer_list<const Tensor*> inputs) const {
  if (!recording_) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

void Graph::record(Tensor output, std::function<void()> backward) {
  if (consumed_) throw ContractError("graph already consumed by backward(); record a new graph");
  output.set_requires_grad(true);
  ops_.push_back(std::move(backward));
}

void Graph::backward(Tensor loss) {
  if (loss.numel() != 1) throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  if (consumed_) throw ContractError("backward() called twice on the same graph");
  if (!recording_) throw ContractError("backward() on a graph recorded with recording disabled");
  consumed_ = true;
  if (!loss.requires_grad()) return;
  loss.grad()[0] += Real(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  ops_.clear();
}

BAST_NAMESPACE_END
