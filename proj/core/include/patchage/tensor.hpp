#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace patchage {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // non-empty iff requires_grad
  bool requires_grad = false;
};
}  // namespace detail

// Dense row-major float64 tensor. Copies share storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);
  // Keeps one-element literals such as {0.0} from binding to requires_grad.
  Tensor(Shape shape, std::initializer_list<double> values, bool requires_grad = false)
      : Tensor(std::move(shape), std::vector<double>(values), requires_grad) {}

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> values() const;
  // Direct mutation is reserved for initialization and optimizer updates.
  std::span<double> mutable_values() const;
  double item() const;

  bool requires_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad() const;
  void zero_grad() const;

  Tensor clone() const;
  bool same_storage(const Tensor& other) const noexcept { return node_ == other.node_; }

  // Internal handle used by the tape.
  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// Records differentiable operations executed while it is active on the current thread.
// backward() replays the recorded adjoints in reverse order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(Tensor output, std::function<void()> adjoint);

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every tensor that
  // requires them. Intermediate gradients are reset first; leaf gradients accumulate.
  // The tape is cleared afterwards unless retain is set.
  void backward(const Tensor& loss, bool retain = false);

  std::size_t size() const noexcept { return entries_.size(); }
  void clear() noexcept { entries_.clear(); }

  // Tape active on this thread, or nullptr when gradients are not being recorded.
  static Tape* active() noexcept;

 private:
  friend class TapeScope;
  struct Entry {
    Tensor output;
    std::function<void()> adjoint;
  };
  std::vector<Entry> entries_;
};

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// True when an op on these inputs must be recorded.
bool should_record(std::initializer_list<const Tensor*> inputs);

}  // namespace patchage
