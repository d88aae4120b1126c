#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bast/errors.hpp"
#include "bast/real.hpp"

BAST_NAMESPACE_BEGIN

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor with an optional gradient buffer.
//
// Tensor is a handle: copies alias the same storage. Parameter sharing between
// model branches is expressed by copying the handle.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<Real> values, bool requires_grad = false);

  static Tensor scalar(Real value);
  // Values are left unset; the caller must write every element.
  static Tensor empty(Shape shape);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Extent of axis `axis`; negative values count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const;

  // Handle semantics: a const Tensor still grants access to its storage.
  std::span<Real> data() const;
  Real item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  // Gradient buffer, allocated (zero-filled) on first access.
  std::span<Real> grad() const;
  bool has_grad() const;
  void zero_grad();

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  // Deep copy of the values, detached from any gradient.
  Tensor clone() const;

 private:
  // Leaves elements default-initialized, i.e. unset for arithmetic types.
  template <class T>
  struct DefaultInitAllocator : std::allocator<T> {
    template <class U>
    struct rebind {
      using other = DefaultInitAllocator<U>;
    };
    using std::allocator<T>::allocator;
    template <class U, class... Args>
    void construct(U* p, Args&&... args) {
      if constexpr (sizeof...(Args) == 0) {
        ::new (static_cast<void*>(p)) U;
      } else {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
      }
    }
  };

  struct Impl {
    Shape shape;
    std::vector<Real, DefaultInitAllocator<Real>> data;
    mutable std::vector<Real> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Operation tape for reverse-mode differentiation.
//
// Operations are appended in execution order, so walking the tape backwards
// visits every operation after all of its consumers. A graph can be consumed
// by backward() only once.
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return ops_.size(); }

  // True when an op over `inputs` must be recorded.
  bool tracks(std::initializer_list<const Tensor*> inputs) const;

  // Appends an op. `backward` reads the output gradient and accumulates into
  // the gradients of the op inputs that require them.
  void record(Tensor output, std::function<void()> backward);

  void backward(Tensor loss);

 private:
  bool recording_;
  bool consumed_ = false;
  std::vector<std::function<void()>> ops_;
};

BAST_NAMESPACE_END
