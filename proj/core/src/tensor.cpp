#include "patchage/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "patchage/error.hpp"

namespace patchage {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

void validate_shape(const Shape& shape) {
  for (auto extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, bool requires_grad) {
  validate_shape(shape);
  node_ = std::make_shared<detail::TensorNode>();
  node_->data.assign(shape_numel(shape), 0.0);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
  if (requires_grad) node_->grad.assign(node_->data.size(), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  validate_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor of shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  node_ = std::make_shared<detail::TensorNode>();
  node_->shape = std::move(shape);
  node_->data = std::move(values);
  node_->requires_grad = requires_grad;
  if (requires_grad) node_->grad.assign(node_->data.size(), 0.0);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  std::fill(t.node_->data.begin(), t.node_->data.end(), value);
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw ShapeError("use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::values() const {
  shape();
  return node_->data;
}

std::span<double> Tensor::mutable_values() const {
  shape();
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

std::span<const double> Tensor::grad() const {
  if (!requires_grad()) throw ShapeError("grad() on a tensor that does not require gradients");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() const {
  if (!requires_grad()) throw ShapeError("grad() on a tensor that does not require gradients");
  return node_->grad;
}

void Tensor::zero_grad() const {
  if (requires_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  return Tensor(shape(), node_->data, node_->requires_grad);
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() noexcept { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t && t->requires_grad(); });
}

void Tape::record(Tensor output, std::function<void()> adjoint) {
  entries_.push_back({std::move(output), std::move(adjoint)});
}

void Tape::backward(const Tensor& loss, bool retain) {
  if (!loss.requires_grad()) throw ShapeError("backward() on a tensor that does not require gradients");
  if (loss.numel() != 1) throw ShapeError("backward() needs a scalar loss, got " + shape_str(loss.shape()));

  for (auto& entry : entries_) entry.output.zero_grad();
  // The loss may be a leaf that was never recorded.
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->adjoint();
  if (!retain) entries_.clear();
}

}  // namespace patchage
