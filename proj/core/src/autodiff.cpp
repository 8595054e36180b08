#include "bcg/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>
#include <type_traits>

#include "bcg/error.hpp"

namespace bcg::ad {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (const int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  return out.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (const int d : shape_) require(d >= 1, ErrorKind::kData, "tensor dims must be positive");
  values_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  require(values_.size() == shape_size(shape_), ErrorKind::kData,
          "tensor value count does not match shape " + shape_string(shape_));
}

double Tensor::item() const {
  require(values_.size() == 1, ErrorKind::kData, "item() on a tensor of size " +
                                                     std::to_string(values_.size()));
  return values_[0];
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  require(shape_size(shape) == values_.size(), ErrorKind::kData,
          "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), values_);
}

const Tensor& Var::value() const { return graph_->value(*this); }
const Tensor& Var::grad() const { return graph_->grad(*this); }

Var Graph::add_node(Tensor value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::constant(Tensor value) { return add_node(std::move(value), false); }
Var Graph::leaf(Tensor value) { return add_node(std::move(value), true); }

Var Graph::param(const Parameter& p, bool trainable) {
  const auto it = params_.find(&p);
  if (it != params_.end()) return it->second;
  const Var v = add_node(p.value, trainable);
  params_.emplace(&p, v);
  return v;
}

const Var* Graph::find_param(const Parameter& p) const {
  const auto it = params_.find(&p);
  return it == params_.end() ? nullptr : &it->second;
}

Var Graph::detach(Var v) { return constant(value(v)); }

Var Graph::record(Tensor value, std::initializer_list<Var> parents, Backward backward) {
  bool needs = false;
  for (const Var& p : parents) {
    require(p.graph() == this, ErrorKind::kData, "operands belong to different graphs");
    needs = needs || requires_grad(p);
  }
  const Var out = add_node(std::move(value), needs);
  if (needs) nodes_.back().backward = std::move(backward);
  return out;
}

Tensor& Graph::grad_accumulator(Var v) {
  Node& node = nodes_[static_cast<std::size_t>(v.id())];
  if (node.grad.empty()) node.grad = Tensor(node.value.shape(), 0.0);
  return node.grad;
}

const Tensor& Graph::grad(Var v) const {
  Node& node = nodes_[static_cast<std::size_t>(v.id())];
  if (node.grad.empty()) node.grad = Tensor(node.value.shape(), 0.0);
  return node.grad;
}

Tensor Graph::param_grad(const Parameter& p) const {
  const Var* v = find_param(p);
  if (!v) return Tensor(p.value.shape(), 0.0);
  return grad(*v);
}

void Graph::backward(Var root) {
  require(root.graph() == this, ErrorKind::kData, "backward root from another graph");
  require(value(root).size() == 1, ErrorKind::kData, "backward root must be a scalar");
  if (!requires_grad(root)) return;
  grad_accumulator(root)[0] += 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad || !node.backward || node.grad.empty()) continue;
    // Copy the closure: it may append to nodes_ only through accessors that
    // do not resize, but keep the call independent of the node reference.
    const Backward fn = node.backward;
    fn(*this, Var(this, id));
  }
}

namespace {

void check_rank(Var v, int rank, const char* op) {
  require(v.value().rank() == rank, ErrorKind::kData,
          std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
              shape_string(v.shape()));
}

}  // namespace

namespace {

struct ConvGeometry {
  int h, w, depth, ci, kh, kw, kd, co;
  Window window;
  // Zero-padded input extents.
  int hp() const { return h + kh - 1; }
  int wp() const { return w + kw - 1; }
  int dp() const { return depth + kd - 1; }
  std::size_t padded_size() const {
    return static_cast<std::size_t>(hp()) * wp() * dp() * ci;
  }
  std::size_t padded_index(int r, int c, int d) const {
    return ((static_cast<std::size_t>(r) * wp() + c) * dp() + d) * ci;
  }
};

std::vector<double> pad_input(const double* input, const ConvGeometry& g) {
  std::vector<double> out(g.padded_size(), 0.0);
  const std::size_t run = static_cast<std::size_t>(g.depth) * g.ci;
  for (int r = 0; r < g.h; ++r)
    for (int c = 0; c < g.w; ++c)
      std::copy_n(input + (static_cast<std::size_t>(r) * g.w + c) * run, run,
                  out.data() + g.padded_index(r + g.kh / 2, c + g.kw / 2, g.kd / 2));
  return out;
}

// For output (r, c, d) and spatial tap (i, j), the kd * ci input values and
// the matching kernel rows are both contiguous.
template <int CO>
void conv_forward(const double* xpad, const double* kernel, const double* bias,
                  const ConvGeometry& g, int co, double* out) {
  constexpr int kRows = CO > 0 ? CO : Eigen::Dynamic;
  using Vec = Eigen::Matrix<double, kRows, 1>;
  using ConstMap = Eigen::Map<const Vec>;
  const int n = CO > 0 ? CO : co;
  const int run = g.kd * g.ci;
  Vec acc(n);
  const ConstMap b(bias, n);
  for (int orow = 0; orow < g.window.rows; ++orow) {
    const int r = g.window.row0 + orow;
    for (int ocol = 0; ocol < g.window.cols; ++ocol) {
      const int c = g.window.col0 + ocol;
      for (int d = 0; d < g.depth; ++d) {
        acc = b;
        for (int i = 0; i < g.kh; ++i)
          for (int j = 0; j < g.kw; ++j) {
            const double* xs = xpad + g.padded_index(r + i, c + j, d);
            const double* ks = kernel + static_cast<std::size_t>(i * g.kw + j) * run * n;
            for (int t = 0; t < run; ++t)
              acc.noalias() += xs[t] * ConstMap(ks + static_cast<std::size_t>(t) * n, n);
          }
        Eigen::Map<Vec>(out, n) = acc;
        out += n;
      }
    }
  }
}

template <int CO>
void conv_backward(const double* xpad, const double* kernel, const double* gout,
                   const ConvGeometry& g, int co, double* gxpad, double* gkernel) {
  constexpr int kRows = CO > 0 ? CO : Eigen::Dynamic;
  using Vec = Eigen::Matrix<double, kRows, 1>;
  const int n = CO > 0 ? CO : co;
  const int run = g.kd * g.ci;
  for (int orow = 0; orow < g.window.rows; ++orow) {
    const int r = g.window.row0 + orow;
    for (int ocol = 0; ocol < g.window.cols; ++ocol) {
      const int c = g.window.col0 + ocol;
      for (int d = 0; d < g.depth; ++d) {
        const Vec go = Eigen::Map<const Vec>(gout, n);
        gout += n;
        for (int i = 0; i < g.kh; ++i)
          for (int j = 0; j < g.kw; ++j) {
            const std::size_t xoff = g.padded_index(r + i, c + j, d);
            const std::size_t koff = static_cast<std::size_t>(i * g.kw + j) * run * n;
            for (int t = 0; t < run; ++t) {
              const std::size_t row = koff + static_cast<std::size_t>(t) * n;
              if (gxpad) gxpad[xoff + t] += go.dot(Eigen::Map<const Vec>(kernel + row, n));
              if (gkernel) Eigen::Map<Vec>(gkernel + row, n).noalias() += xpad[xoff + t] * go;
            }
          }
      }
    }
  }
}

template <typename F>
void dispatch_channels(int co, F&& f) {
  switch (co) {
    case 1: f(std::integral_constant<int, 1>{}); break;
    case 2: f(std::integral_constant<int, 2>{}); break;
    case 4: f(std::integral_constant<int, 4>{}); break;
    case 8: f(std::integral_constant<int, 8>{}); break;
    case 16: f(std::integral_constant<int, 16>{}); break;
    default: f(std::integral_constant<int, 0>{}); break;
  }
}

}  // namespace

Var conv3d(Var input, Var kernel, Var bias, Window window) {
  check_rank(input, 4, "conv3d");
  check_rank(kernel, 5, "conv3d kernel");
  const Tensor& in = input.value();
  const Tensor& k = kernel.value();
  ConvGeometry geo{in.dim(0), in.dim(1), in.dim(2), in.dim(3),
                   k.dim(0),  k.dim(1),  k.dim(2),  k.dim(4), window};
  if (k.dim(3) != geo.ci)
    fail(ErrorKind::kData, "conv3d: kernel expects " + std::to_string(k.dim(3)) +
                               " input channels, got " + std::to_string(geo.ci));
  require(geo.kh % 2 == 1 && geo.kw % 2 == 1 && geo.kd % 2 == 1, ErrorKind::kData,
          "conv3d: kernel dims must be odd");
  require(bias.value().size() == static_cast<std::size_t>(geo.co), ErrorKind::kData,
          "conv3d: bias size mismatch");
  require(geo.co <= 64, ErrorKind::kData, "conv3d: at most 64 output channels");
  Window& win = geo.window;
  if (win.rows < 0) win.rows = geo.h - win.row0;
  if (win.cols < 0) win.cols = geo.w - win.col0;
  require(win.row0 >= 0 && win.col0 >= 0 && win.rows >= 1 && win.cols >= 1 &&
              win.row0 + win.rows <= geo.h && win.col0 + win.cols <= geo.w,
          ErrorKind::kData, "conv3d: output window outside input");

  auto xpad = std::make_shared<std::vector<double>>(pad_input(in.data(), geo));
  Tensor out({win.rows, win.cols, geo.depth, geo.co});
  dispatch_channels(geo.co, [&](auto tag) {
    conv_forward<decltype(tag)::value>(xpad->data(), k.data(), bias.value().data(), geo, geo.co,
                                       out.data());
  });

  Graph& g = *input.graph();
  return g.record(std::move(out), {input, kernel, bias}, [=](Graph& g, Var self) {
    const Tensor& gout = g.grad(self);
    if (g.requires_grad(bias)) {
      double* gb = g.grad_accumulator(bias).data();
      for (std::size_t o = 0; o < gout.size(); o += geo.co)
        for (int q = 0; q < geo.co; ++q) gb[q] += gout[o + q];
    }
    const bool need_in = g.requires_grad(input);
    const bool need_k = g.requires_grad(kernel);
    if (!need_in && !need_k) return;
    std::vector<double> gxpad(need_in ? geo.padded_size() : 0, 0.0);
    double* gk = need_k ? g.grad_accumulator(kernel).data() : nullptr;
    dispatch_channels(geo.co, [&](auto tag) {
      conv_backward<decltype(tag)::value>(xpad->data(), g.value(kernel).data(), gout.data(), geo,
                                          geo.co, need_in ? gxpad.data() : nullptr, gk);
    });
    if (!need_in) return;
    double* gi = g.grad_accumulator(input).data();
    const std::size_t run = static_cast<std::size_t>(geo.depth) * geo.ci;
    for (int r = 0; r < geo.h; ++r)
      for (int c = 0; c < geo.w; ++c) {
        const double* src = gxpad.data() + geo.padded_index(r + geo.kh / 2, c + geo.kw / 2, geo.kd / 2);
        double* dst = gi + (static_cast<std::size_t>(r) * geo.w + c) * run;
        for (std::size_t t = 0; t < run; ++t) dst[t] += src[t];
      }
  });
}

Var conv2d_pointwise(Var input, Var weight, Var bias) {
  check_rank(input, 3, "conv2d_pointwise");
  check_rank(weight, 2, "conv2d_pointwise weight");
  const Tensor& in = input.value();
  const Tensor& wt = weight.value();
  const int h = in.dim(0), w = in.dim(1), f = in.dim(2), fo = wt.dim(1);
  require(wt.dim(0) == f, ErrorKind::kData, "conv2d_pointwise: weight expects " +
                                                std::to_string(wt.dim(0)) + " features, got " +
                                                std::to_string(f));
  require(bias.value().size() == static_cast<std::size_t>(fo), ErrorKind::kData,
          "conv2d_pointwise: bias size mismatch");
  const std::size_t pixels = static_cast<std::size_t>(h) * w;
  Tensor out({h, w, fo});
  for (std::size_t p = 0; p < pixels; ++p) {
    double* o = out.data() + p * fo;
    const double* x = in.data() + p * f;
    for (int q = 0; q < fo; ++q) o[q] = bias.value()[q];
    for (int a = 0; a < f; ++a) {
      const double xv = x[a];
      const double* wr = wt.data() + static_cast<std::size_t>(a) * fo;
      for (int q = 0; q < fo; ++q) o[q] += xv * wr[q];
    }
  }
  return input.graph()->record(std::move(out), {input, weight, bias}, [=](Graph& g, Var self) {
    const Tensor& gout = g.grad(self);
    const Tensor& in = g.value(input);
    const Tensor& wt = g.value(weight);
    if (g.requires_grad(bias)) {
      Tensor& gb = g.grad_accumulator(bias);
      for (std::size_t p = 0; p < pixels; ++p)
        for (int q = 0; q < fo; ++q) gb[q] += gout[p * fo + q];
    }
    if (g.requires_grad(weight)) {
      Tensor& gw = g.grad_accumulator(weight);
      for (std::size_t p = 0; p < pixels; ++p)
        for (int a = 0; a < f; ++a) {
          const double xv = in[p * f + a];
          for (int q = 0; q < fo; ++q) gw[static_cast<std::size_t>(a) * fo + q] += xv * gout[p * fo + q];
        }
    }
    if (g.requires_grad(input)) {
      Tensor& gi = g.grad_accumulator(input);
      for (std::size_t p = 0; p < pixels; ++p)
        for (int a = 0; a < f; ++a) {
          double s = 0.0;
          for (int q = 0; q < fo; ++q) s += wt[static_cast<std::size_t>(a) * fo + q] * gout[p * fo + q];
          gi[p * f + a] += s;
        }
    }
  });
}

int eca_kernel_size(int channels) {
  require(channels >= 1, ErrorKind::kData, "eca: channels must be positive");
  const int t = static_cast<int>(std::abs((std::log2(static_cast<double>(channels)) + 1.0) / 2.0));
  const int odd = t % 2 == 1 ? t : t + 1;
  return std::max(3, odd);
}

Var eca(Var input, Var weight, Var bias) {
  const Tensor& in = input.value();
  require(in.rank() >= 1, ErrorKind::kData, "eca: empty input");
  const int ch = in.dim(in.rank() - 1);
  const int k = static_cast<int>(weight.value().size());
  require(k % 2 == 1, ErrorKind::kData, "eca: kernel size must be odd");
  require(bias.value().size() == 1, ErrorKind::kData, "eca: bias must be a scalar");
  const std::size_t count = in.size() / static_cast<std::size_t>(ch);
  const int half = k / 2;

  std::vector<double> avg(static_cast<std::size_t>(ch), 0.0);
  for (std::size_t i = 0; i < count; ++i)
    for (int c = 0; c < ch; ++c) avg[c] += in[i * ch + c];
  for (double& a : avg) a /= static_cast<double>(count);

  std::vector<double> gate(static_cast<std::size_t>(ch));
  for (int c = 0; c < ch; ++c) {
    double z = bias.value()[0];
    for (int t = 0; t < k; ++t) {
      const int src = c + t - half;
      if (src >= 0 && src < ch) z += weight.value()[t] * avg[src];
    }
    gate[c] = 1.0 / (1.0 + std::exp(-z));
  }

  Tensor out(in.shape());
  for (std::size_t i = 0; i < count; ++i)
    for (int c = 0; c < ch; ++c) out[i * ch + c] = in[i * ch + c] * gate[c];

  return input.graph()->record(std::move(out), {input, weight, bias},
                               [=](Graph& g, Var self) {
    const Tensor& gout = g.grad(self);
    const Tensor& in = g.value(input);
    const Tensor& wt = g.value(weight);
    std::vector<double> dgate(static_cast<std::size_t>(ch), 0.0);
    for (std::size_t i = 0; i < count; ++i)
      for (int c = 0; c < ch; ++c) dgate[c] += gout[i * ch + c] * in[i * ch + c];
    std::vector<double> dz(static_cast<std::size_t>(ch));
    for (int c = 0; c < ch; ++c) dz[c] = dgate[c] * gate[c] * (1.0 - gate[c]);
    if (g.requires_grad(bias)) {
      double s = 0.0;
      for (const double v : dz) s += v;
      g.grad_accumulator(bias)[0] += s;
    }
    if (g.requires_grad(weight)) {
      Tensor& gw = g.grad_accumulator(weight);
      for (int c = 0; c < ch; ++c)
        for (int t = 0; t < k; ++t) {
          const int src = c + t - half;
          if (src >= 0 && src < ch) gw[t] += dz[c] * avg[src];
        }
    }
    if (g.requires_grad(input)) {
      std::vector<double> davg(static_cast<std::size_t>(ch), 0.0);
      for (int c = 0; c < ch; ++c)
        for (int t = 0; t < k; ++t) {
          const int src = c + t - half;
          if (src >= 0 && src < ch) davg[src] += dz[c] * wt[t];
        }
      Tensor& gi = g.grad_accumulator(input);
      const double inv = 1.0 / static_cast<double>(count);
      for (std::size_t i = 0; i < count; ++i)
        for (int c = 0; c < ch; ++c)
          gi[i * ch + c] += gout[i * ch + c] * gate[c] + davg[c] * inv;
    }
  });
}

Var matvec(Var matrix, Var x) {
  check_rank(matrix, 2, "matvec");
  const Tensor& m = matrix.value();
  const Tensor& v = x.value();
  const int rows = m.dim(0), cols = m.dim(1);
  require(v.size() == static_cast<std::size_t>(cols), ErrorKind::kData,
          "matvec: matrix has " + std::to_string(cols) + " columns, vector " +
              std::to_string(v.size()) + " entries");
  Tensor out({rows});
  for (int i = 0; i < rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < cols; ++j) s += m[static_cast<std::size_t>(i) * cols + j] * v[j];
    out[i] = s;
  }
  return matrix.graph()->record(std::move(out), {matrix, x}, [=](Graph& g, Var self) {
    const Tensor& gout = g.grad(self);
    const Tensor& m = g.value(matrix);
    const Tensor& v = g.value(x);
    if (g.requires_grad(matrix)) {
      Tensor& gm = g.grad_accumulator(matrix);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) gm[static_cast<std::size_t>(i) * cols + j] += gout[i] * v[j];
    }
    if (g.requires_grad(x)) {
      Tensor& gv = g.grad_accumulator(x);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) gv[j] += gout[i] * m[static_cast<std::size_t>(i) * cols + j];
    }
  });
}

Var dense(Var x, Var weight, Var bias) {
  require(bias.value().size() == static_cast<std::size_t>(weight.value().dim(0)),
          ErrorKind::kData, "dense: bias size mismatch");
  return add(matvec(weight, reshape(x, {static_cast<int>(x.value().size())})), bias);
}

namespace {

template <typename Forward, typename Derivative>
Var elementwise(Var x, Forward f, Derivative df) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return x.graph()->record(std::move(out), {x}, [=](Graph& g, Var self) {
    const Tensor& gout = g.grad(self);
    const Tensor& in = g.value(x);
    const Tensor& out = g.value(self);
    Tensor& gi = g.grad_accumulator(x);
    for (std::size_t i = 0; i < in.size(); ++i) gi[i] += gout[i] * df(in[i], out[i]);
  });
}

}  // namespace

Var relu(Var x) {
  return elementwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
  return elementwise(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var softmax(Var x) {
  const Tensor& in = x.value();
  const double peak = *std::max_element(in.values().begin(), in.values().end());
  Tensor out(in.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - peak);
    total += out[i];
  }
  for (std::size_t i = 0; i < in.size(); ++i) out[i] /= total;
  return x.graph()->record(std::move(out), {x}, [=](Graph& g, Var self) {
    const Tensor& gout = g.grad(self);
    const Tensor& y = g.value(self);
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += gout[i] * y[i];
    Tensor& gi = g.grad_accumulator(x);
    for (std::size_t i = 0; i < y.size(); ++i) gi[i] += y[i] * (gout[i] - dot);
  });
}

Var concat_channels(Var a, Var b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  require(ta.rank() == tb.rank() && ta.rank() >= 1, ErrorKind::kData,
          "concat_channels: rank mismatch");
  for (int i = 0; i + 1 < ta.rank(); ++i)
    require(ta.dim(i) == tb.dim(i), ErrorKind::kData,
            "concat_channels: leading shapes differ (" + shape_string(ta.shape()) + " vs " +
                shape_string(tb.shape()) + ")");
  const int ca = ta.dim(ta.rank() - 1), cb = tb.dim(tb.rank() - 1);
  Shape shape = ta.shape();
  shape.back() = ca + cb;
  const std::size_t rows = ta.size() / static_cast<std::size_t>(ca);
  Tensor out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(ta.data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(tb.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  return a.graph()->record(std::move(out), {a, b}, [=](Graph& g, Var self) {
    const Tensor& gout = g.grad(self);
    if (g.requires_grad(a)) {
      Tensor& ga = g.grad_accumulator(a);
      for (std::size_t r = 0; r < rows; ++r)
        for (int c = 0; c < ca; ++c) ga[r * ca + c] += gout[r * (ca + cb) + c];
    }
    if (g.requires_grad(b)) {
      Tensor& gb = g.grad_accumulator(b);
      for (std::size_t r = 0; r < rows; ++r)
        for (int c = 0; c < cb; ++c) gb[r * cb + c] += gout[r * (ca + cb) + ca + c];
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.graph()->record(std::move(out), {x}, [=](Graph& g, Var self) {
    const Tensor& gout = g.grad(self);
    Tensor& gi = g.grad_accumulator(x);
    for (std::size_t i = 0; i < gout.size(); ++i) gi[i] += gout[i];
  });
}

Var pick(Var x, std::size_t index) {
  require(index < x.value().size(), ErrorKind::kData, "pick: index out of range");
  return x.graph()->record(Tensor::scalar(x.value()[index]), {x}, [=](Graph& g, Var self) {
    g.grad_accumulator(x)[index] += g.grad(self)[0];
  });
}

Var add(Var a, Var b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  require(ta.size() == tb.size(), ErrorKind::kData,
          "add: size mismatch " + shape_string(ta.shape()) + " vs " + shape_string(tb.shape()));
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < ta.size(); ++i) out[i] = ta[i] + tb[i];
  return a.graph()->record(std::move(out), {a, b}, [=](Graph& g, Var self) {
    const Tensor& gout = g.grad(self);
    if (g.requires_grad(a)) {
      Tensor& ga = g.grad_accumulator(a);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
    }
    if (g.requires_grad(b)) {
      Tensor& gb = g.grad_accumulator(b);
      for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i];
    }
  });
}

Var scale(Var x, double factor) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * factor;
  return x.graph()->record(std::move(out), {x}, [=](Graph& g, Var self) {
    const Tensor& gout = g.grad(self);
    Tensor& gi = g.grad_accumulator(x);
    for (std::size_t i = 0; i < gout.size(); ++i) gi[i] += gout[i] * factor;
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (const double v : x.value().values()) s += v;
  return x.graph()->record(Tensor::scalar(s), {x}, [=](Graph& g, Var self) {
    const double go = g.grad(self)[0];
    Tensor& gi = g.grad_accumulator(x);
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go;
  });
}

Var sum_to_one(Var s, double eps) {
  const Tensor& in = s.value();
  double total = 0.0;
  for (const double v : in.values()) total += v;
  const double denom = total + eps;
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] / denom;
  return s.graph()->record(std::move(out), {s}, [=](Graph& g, Var self) {
    const Tensor& gout = g.grad(self);
    const Tensor& y = g.value(self);
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += gout[i] * y[i];
    Tensor& gi = g.grad_accumulator(s);
    for (std::size_t i = 0; i < y.size(); ++i) gi[i] += (gout[i] - dot) / denom;
  });
}

Var cos_loss(Var target, Var estimate) {
  const Tensor& x = target.value();
  const Tensor& y = estimate.value();
  require(x.size() == y.size(), ErrorKind::kData, "cos_loss: length mismatch");
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xy += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  const bool degenerate = xx == 0.0 || yy == 0.0;
  const double nx = std::sqrt(xx), ny = std::sqrt(yy);
  const double cosine = degenerate ? 0.0 : xy / (nx * ny);
  return target.graph()->record(Tensor::scalar(1.0 - cosine), {target, estimate},
                                [=](Graph& g, Var self) {
    if (degenerate) return;
    const double go = g.grad(self)[0];
    const Tensor& x = g.value(target);
    const Tensor& y = g.value(estimate);
    // d cos / dy = x / (|x||y|) - cos * y / |y|^2
    if (g.requires_grad(estimate)) {
      Tensor& gy = g.grad_accumulator(estimate);
      for (std::size_t i = 0; i < y.size(); ++i)
        gy[i] -= go * (x[i] / (nx * ny) - cosine * y[i] / yy);
    }
    if (g.requires_grad(target)) {
      Tensor& gx = g.grad_accumulator(target);
      for (std::size_t i = 0; i < x.size(); ++i)
        gx[i] -= go * (y[i] / (nx * ny) - cosine * x[i] / xx);
    }
  });
}

Var focal_loss(Var p_changed, int label, double alpha, double gamma) {
  require(p_changed.value().size() == 1, ErrorKind::kData, "focal_loss: p must be a scalar");
  require(label == 0 || label == 1, ErrorKind::kData, "focal_loss: label must be 0 or 1");
  constexpr double kLo = 1e-7, kHi = 1.0 - 1e-7;
  const double raw = p_changed.value()[0];
  const bool clamped = raw < kLo || raw > kHi;
  const double p = std::clamp(raw, kLo, kHi);
  const double pt = label == 1 ? p : 1.0 - p;
  const double at = label == 1 ? alpha : 1.0 - alpha;
  const double loss = -at * std::pow(1.0 - pt, gamma) * std::log(pt);
  return p_changed.graph()->record(Tensor::scalar(loss), {p_changed}, [=](Graph& g, Var self) {
    if (clamped) return;
    // dL/dpt = at * [gamma (1-pt)^(gamma-1) log pt - (1-pt)^gamma / pt]
    const double one_minus = 1.0 - pt;
    const double mod_grad = gamma == 0.0 ? 0.0 : gamma * std::pow(one_minus, gamma - 1.0);
    const double dpt = at * (mod_grad * std::log(pt) - std::pow(one_minus, gamma) / pt);
    const double dp = label == 1 ? dpt : -dpt;
    g.grad_accumulator(p_changed)[0] += g.grad(self)[0] * dp;
  });
}

}  // namespace bcg::ad
