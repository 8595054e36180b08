#pragma once

// Minimal reverse-mode automatic differentiation over dense double tensors.
// A Graph records every operation applied to its Vars; Graph::backward()
// replays the recorded closures in reverse to accumulate gradients.
//
// Layout conventions (row-major, last axis fastest):
//   conv3d input   {rows, cols, depth, channels}
//   conv3d kernel  {kh, kw, kd, channels_in, channels_out}
//   pointwise      input {rows, cols, features}, weight {features, features_out}
//   dense          x {n}, weight {m, n}, bias {m}

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace bcg::ad {

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double item() const;

  void fill(double v);
  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && values_ == other.values_;
  }

 private:
  Shape shape_;
  std::vector<double> values_;
};

// Named trainable tensor. `kind` records the layer family for checkpoints.
struct Parameter {
  std::string name;
  std::string kind;
  Tensor value;
};

class Graph;

class Var {
 public:
  Var() = default;

  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }
  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Graph;
  Var(Graph* graph, int id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  using Backward = std::function<void(Graph&, Var self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Differentiable leaf (inputs under gradient check, for instance).
  Var leaf(Tensor value);
  // One node per Parameter per graph, so every use shares one storage.
  Var param(const Parameter& p, bool trainable = true);
  // Same value, no gradient flows back through the result.
  Var detach(Var v);

  // Seeds d(root)/d(root) = 1; root must hold exactly one value.
  void backward(Var root);

  const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].value; }
  // Zero tensor of the right shape when no gradient reached the node.
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].requires_grad; }

  // Gradient accumulated for a trainable parameter; zeros if it was unused.
  Tensor param_grad(const Parameter& p) const;
  // Node that holds `p` in this graph, if registered.
  const Var* find_param(const Parameter& p) const;

  std::size_t size() const { return nodes_.size(); }

  // Op construction. `backward` runs only if the node requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, Backward backward);
  Tensor& grad_accumulator(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    bool requires_grad = false;
  };

  Var add_node(Tensor value, bool requires_grad);

  mutable std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, Var> params_;
};

// Output window over the first two data axes; rows/cols < 0 mean "to the end".
struct Window {
  int row0 = 0;
  int col0 = 0;
  int rows = -1;
  int cols = -1;
};

// Stride 1, zero "same" padding on all three data axes.
Var conv3d(Var input, Var kernel, Var bias, Window window = {});
// 1x1 spatial convolution, a per-pixel linear map.
Var conv2d_pointwise(Var input, Var weight, Var bias);

// ECA kernel size: nearest odd integer at or above (log2(ch) + 1) / 2, at least 3.
int eca_kernel_size(int channels);
// Efficient channel attention over the last axis: global average per channel,
// 1-D convolution across channels (zero padded), sigmoid gate, rescale.
Var eca(Var input, Var weight, Var bias);

Var dense(Var x, Var weight, Var bias);
Var matvec(Var matrix, Var x);
Var relu(Var x);
Var sigmoid(Var x);
Var softmax(Var x);
// Concatenation along the last axis; leading axes must agree.
Var concat_channels(Var a, Var b);
Var reshape(Var x, Shape shape);
Var pick(Var x, std::size_t index);
Var add(Var a, Var b);
Var scale(Var x, double factor);
Var sum(Var x);

// s_i / (sum(s) + eps).
Var sum_to_one(Var s, double eps = 1e-8);
// 1 - cos(target, estimate); a zero-norm operand gives 1 with zero gradient.
Var cos_loss(Var target, Var estimate);
// -alpha_t (1 - p_t)^gamma log(p_t) with p clamped to [1e-7, 1 - 1e-7].
Var focal_loss(Var p_changed, int label, double alpha, double gamma);

}  // namespace bcg::ad
