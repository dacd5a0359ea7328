#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vitl {

using Shape = std::vector<size_t>;

inline size_t numel(const Shape& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major storage plus an optional same-size gradient buffer.
// node_id identifies the tensor inside the tape that last saw it.
template <class S>
struct TensorData {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;
  const void* tape_tag = nullptr;
  int node_id = -1;

  size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

// Value-semantic handle; copies share storage.
template <class S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.p = std::make_shared<TensorData<S>>();
    t.p->value.assign(numel(shape), S(0));
    t.p->shape = std::move(shape);
    return t;
  }

  static Tensor from(Shape shape, std::vector<S> data) {
    if (numel(shape) != data.size())
      throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    Tensor t;
    t.p = std::make_shared<TensorData<S>>();
    t.p->shape = std::move(shape);
    t.p->value = std::move(data);
    return t;
  }

  static Tensor scalar(S v) { return from({1}, {v}); }

  bool defined() const { return p != nullptr; }
  const Shape& shape() const { return p->shape; }
  size_t size() const { return p->value.size(); }
  size_t dim(size_t i) const { return p->shape[i]; }
  size_t rank() const { return p->shape.size(); }

  S* data() { return p->value.data(); }
  const S* data() const { return p->value.data(); }
  S& at(size_t i) { return p->value[i]; }
  S at(size_t i) const { return p->value[i]; }

  void ensure_grad() const { p->ensure_grad(); }
  void zero_grad() const { p->grad.assign(p->value.size(), S(0)); }
  S* grad_data() const { return p->grad.data(); }
  std::vector<S>& grad() const { return p->grad; }

  std::shared_ptr<TensorData<S>> p;
};

// Ordered record of executed operations. Ops append themselves during the
// forward pass together with a closure that propagates output gradients to
// input gradients; backward() replays the closures in reverse, which visits
// every node exactly once because the record is in execution order.
template <class S>
class Tape {
 public:
  struct OpRecord {
    std::vector<int> input_ids;
    int output_id;
    std::function<void()> backprop;
  };

  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  // Registers a tensor with this tape, assigning a node id on first sight.
  int watch(const Tensor<S>& t) {
    if (t.p->tape_tag != this) {
      t.p->tape_tag = this;
      t.p->node_id = next_id_++;
    }
    return t.p->node_id;
  }

  // Watches inputs before the output so node ids reflect execution order.
  void record_op(const std::vector<Tensor<S>>& inputs, const Tensor<S>& output,
                 std::function<void()> backprop) {
    if (!recording_) return;
    std::vector<int> ids;
    ids.reserve(inputs.size());
    for (const auto& t : inputs) ids.push_back(watch(t));
    const int out_id = watch(output);
    ops_.push_back(OpRecord{std::move(ids), out_id, std::move(backprop)});
  }

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  // participating tensor. loss must be a scalar recorded on this tape.
  void backward(const Tensor<S>& loss) {
    if (loss.size() != 1)
      throw std::invalid_argument("backward expects a scalar loss, got " + shape_str(loss.shape()));
    if (loss.p->tape_tag != this)
      throw std::invalid_argument("backward: loss was not computed on this tape");
    loss.ensure_grad();
    loss.p->grad[0] = S(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) it->backprop();
  }

  const std::vector<OpRecord>& ops() const { return ops_; }
  size_t num_ops() const { return ops_.size(); }
  int num_nodes() const { return next_id_; }

 private:
  std::vector<OpRecord> ops_;
  int next_id_ = 0;
  bool recording_ = true;
};

}  // namespace vitl
