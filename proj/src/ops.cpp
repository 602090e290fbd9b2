#include "mozoo/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "mozoo/errors.hpp"

namespace mozoo {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Graph& graph_of(const Var& a, const Var& b) {
  if (&a.graph() != &b.graph()) throw ContractError("operands belong to different graphs");
  return a.graph();
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Maps each element of a tensor shaped `out` to the element of `in` it reads
// from under trailing-dimension broadcasting.
class BroadcastMap {
 public:
  BroadcastMap(const Shape& out, const Shape& in) : n_in_(shape_numel(in)) {
    if (in == out) {
      kind_ = Kind::identity;
      return;
    }
    const std::size_t lead = out.size() - in.size();
    if (std::equal(in.begin(), in.end(), out.begin() + static_cast<std::ptrdiff_t>(lead))) {
      kind_ = Kind::suffix;
      return;
    }
    kind_ = Kind::general;
    const std::size_t n = shape_numel(out);
    index_.resize(n);
    std::vector<std::size_t> stride(out.size(), 0);
    std::size_t s = 1;
    for (std::size_t i = in.size(); i-- > 0;) {
      stride[i + lead] = in[i] == 1 ? 0 : s;
      s *= in[i];
    }
    std::vector<std::size_t> counter(out.size(), 0);
    std::size_t src = 0;
    for (std::size_t flat = 0; flat < n; ++flat) {
      index_[flat] = src;
      for (std::size_t ax = out.size(); ax-- > 0;) {
        ++counter[ax];
        src += stride[ax];
        if (counter[ax] < out[ax]) break;
        src -= stride[ax] * counter[ax];
        counter[ax] = 0;
      }
    }
  }

  std::size_t operator()(std::size_t i) const {
    switch (kind_) {
      case Kind::identity:
        return i;
      case Kind::suffix:
        return i % n_in_;
      default:
        return index_[i];
    }
  }

  bool identity() const { return kind_ == Kind::identity; }

 private:
  enum class Kind { identity, suffix, general };
  Kind kind_ = Kind::identity;
  std::size_t n_in_;
  std::vector<std::size_t> index_;
};

// Sums `grad` (shaped like the broadcast output) back into the input's shape.
Tensor reduce_to(const Tensor& grad, const Shape& in_shape, const BroadcastMap& map) {
  if (map.identity()) return grad;
  std::vector<double> acc(shape_numel(in_shape), 0.0);
  for (std::size_t i = 0; i < grad.numel(); ++i) acc[map(i)] += grad[i];
  Tensor out(in_shape);
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i]);
  return out;
}

template <typename F>
Tensor elementwise(const Tensor& a, const Tensor& b, const Shape& out_shape, const BroadcastMap& ma,
                   const BroadcastMap& mb, F f) {
  Tensor out(out_shape);
  float* o = out.ptr();
  const float* pa = a.ptr();
  const float* pb = b.ptr();
  const std::size_t n = out.numel();
  if (ma.identity() && mb.identity()) {
    for (std::size_t i = 0; i < n; ++i) o[i] = f(pa[i], pb[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) o[i] = f(pa[ma(i)], pb[mb(i)]);
  }
  return out;
}

Shape rows_shape(const Tensor& t, std::size_t& rows, std::size_t& cols) {
  if (t.rank() == 0) throw DimensionError("expected rank >= 1");
  cols = t.shape().back();
  rows = t.numel() / cols;
  return t.shape();
}

}  // namespace

namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(1)});
  MapMat(out.ptr(), a.dim(0), b.dim(1)).noalias() =
      ConstMapMat(a.ptr(), a.dim(0), a.dim(1)) * ConstMapMat(b.ptr(), b.dim(0), b.dim(1));
  return out;
}

Tensor transpose2d(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose2d expects rank 2, got " + shape_str(a.shape()));
  Tensor out({a.dim(1), a.dim(0)});
  MapMat(out.ptr(), a.dim(1), a.dim(0)) = ConstMapMat(a.ptr(), a.dim(0), a.dim(1)).transpose();
  return out;
}

Tensor softmax_lastdim(const Tensor& x) {
  if (x.rank() == 0) throw DimensionError("softmax on a scalar");
  std::size_t rows = 0, cols = 0;
  rows_shape(x, rows, cols);
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* in = x.ptr() + r * cols;
    float* o = out.ptr() + r * cols;
    const float m = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double e = std::exp(static_cast<double>(in[c]) - m);
      o[c] = static_cast<float>(e);
      total += e;
    }
    const double inv = 1.0 / total;
    for (std::size_t c = 0; c < cols; ++c) o[c] = static_cast<float>(o[c] * inv);
  }
  return out;
}

}  // namespace kernels

namespace ops {

Var add(const Var& a, const Var& b) {
  Graph& g = graph_of(a, b);
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  auto ma = std::make_shared<BroadcastMap>(out_shape, a.shape());
  auto mb = std::make_shared<BroadcastMap>(out_shape, b.shape());
  Tensor out = elementwise(a.value(), b.value(), out_shape, *ma, *mb,
                           [](float x, float y) { return x + y; });
  return g.record("add", std::move(out), {a, b}, [ma, mb](Node& n) {
    Node* a = n.inputs[0];
    Node* b = n.inputs[1];
    if (a->requires_grad) a->accumulate(reduce_to(n.grad, a->value.shape(), *ma));
    if (b->requires_grad) b->accumulate(reduce_to(n.grad, b->value.shape(), *mb));
  });
}

Var sub(const Var& a, const Var& b) {
  Graph& g = graph_of(a, b);
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  auto ma = std::make_shared<BroadcastMap>(out_shape, a.shape());
  auto mb = std::make_shared<BroadcastMap>(out_shape, b.shape());
  Tensor out = elementwise(a.value(), b.value(), out_shape, *ma, *mb,
                           [](float x, float y) { return x - y; });
  return g.record("sub", std::move(out), {a, b}, [ma, mb](Node& n) {
    Node* a = n.inputs[0];
    Node* b = n.inputs[1];
    if (a->requires_grad) a->accumulate(reduce_to(n.grad, a->value.shape(), *ma));
    if (b->requires_grad) {
      Tensor neg = n.grad;
      for (auto& v : neg.data()) v = -v;
      b->accumulate(reduce_to(neg, b->value.shape(), *mb));
    }
  });
}

Var mul(const Var& a, const Var& b) {
  Graph& g = graph_of(a, b);
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  auto ma = std::make_shared<BroadcastMap>(out_shape, a.shape());
  auto mb = std::make_shared<BroadcastMap>(out_shape, b.shape());
  Tensor out = elementwise(a.value(), b.value(), out_shape, *ma, *mb,
                           [](float x, float y) { return x * y; });
  return g.record("mul", std::move(out), {a, b}, [ma, mb](Node& n) {
    Node* a = n.inputs[0];
    Node* b = n.inputs[1];
    const std::size_t count = n.grad.numel();
    if (a->requires_grad) {
      Tensor ga(n.value.shape());
      for (std::size_t i = 0; i < count; ++i) ga[i] = n.grad[i] * b->value[(*mb)(i)];
      a->accumulate(reduce_to(ga, a->value.shape(), *ma));
    }
    if (b->requires_grad) {
      Tensor gb(n.value.shape());
      for (std::size_t i = 0; i < count; ++i) gb[i] = n.grad[i] * a->value[(*ma)(i)];
      b->accumulate(reduce_to(gb, b->value.shape(), *mb));
    }
  });
}

Var scale(const Var& x, float factor) {
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  return x.graph().record("scale", std::move(out), {x}, [factor](Node& n) {
    Tensor g = n.grad;
    for (auto& v : g.data()) v *= factor;
    n.inputs[0]->accumulate(g);
  });
}

Var add_scalar(const Var& x, float value) {
  Tensor out = x.value();
  for (auto& v : out.data()) v += value;
  return x.graph().record("add_scalar", std::move(out), {x},
                          [](Node& n) { n.inputs[0]->accumulate(n.grad); });
}

Var matmul(const Var& a, const Var& b) {
  Graph& g = graph_of(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2 || sa[sa.size() - 1] != sb[sb.size() - 2]) {
    throw DimensionError("matmul shape mismatch: " + shape_str(sa) + " x " + shape_str(sb));
  }
  const std::size_t m = sa[sa.size() - 2], k = sa.back(), n = sb.back();
  const Shape batch_a(sa.begin(), sa.end() - 2);
  const Shape batch_b(sb.begin(), sb.end() - 2);
  Shape batch;
  try {
    batch = broadcast_shape(batch_a, batch_b);
  } catch (const DimensionError&) {
    throw DimensionError("matmul batch mismatch: " + shape_str(sa) + " x " + shape_str(sb));
  }
  auto ma = std::make_shared<BroadcastMap>(batch, batch_a);
  auto mb = std::make_shared<BroadcastMap>(batch, batch_b);
  const std::size_t nbatch = shape_numel(batch);

  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out(out_shape);
  for (std::size_t i = 0; i < nbatch; ++i) {
    MapMat(out.ptr() + i * m * n, m, n).noalias() =
        ConstMapMat(a.value().ptr() + (*ma)(i) * m * k, m, k) *
        ConstMapMat(b.value().ptr() + (*mb)(i) * k * n, k, n);
  }
  return g.record("matmul", std::move(out), {a, b}, [ma, mb, nbatch, m, k, n](Node& node) {
    Node* a = node.inputs[0];
    Node* b = node.inputs[1];
    if (a->requires_grad) {
      Tensor& ga = a->grad_buffer();
      for (std::size_t i = 0; i < nbatch; ++i) {
        MapMat(ga.ptr() + (*ma)(i) * m * k, m, k).noalias() +=
            ConstMapMat(node.grad.ptr() + i * m * n, m, n) *
            ConstMapMat(b->value.ptr() + (*mb)(i) * k * n, k, n).transpose();
      }
    }
    if (b->requires_grad) {
      Tensor& gb = b->grad_buffer();
      for (std::size_t i = 0; i < nbatch; ++i) {
        MapMat(gb.ptr() + (*mb)(i) * k * n, k, n).noalias() +=
            ConstMapMat(a->value.ptr() + (*ma)(i) * m * k, m, k).transpose() *
            ConstMapMat(node.grad.ptr() + i * m * n, m, n);
      }
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  const Shape& sx = x.shape();
  if (sx.empty() || w.shape().size() != 2 || sx.back() != w.shape()[0]) {
    throw DimensionError("linear shape mismatch: " + shape_str(sx) + " x " + shape_str(w.shape()));
  }
  const std::size_t in = w.shape()[0], outd = w.shape()[1];
  if (bias && bias.shape() != Shape{outd}) {
    throw DimensionError("linear bias " + shape_str(bias.shape()) + " for output width " +
                         std::to_string(outd));
  }
  const std::size_t rows = x.value().numel() / in;
  Shape out_shape = sx;
  out_shape.back() = outd;
  Tensor out(out_shape);
  MapMat y(out.ptr(), rows, outd);
  y.noalias() = ConstMapMat(x.value().ptr(), rows, in) * ConstMapMat(w.value().ptr(), in, outd);
  if (bias) y.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias.value().ptr(), outd);

  std::vector<Var> inputs{x, w};
  if (bias) inputs.push_back(bias);
  return x.graph().record("linear", std::move(out), inputs, [rows, in, outd](Node& n) {
    Node* x = n.inputs[0];
    Node* w = n.inputs[1];
    ConstMapMat gy(n.grad.ptr(), rows, outd);
    if (x->requires_grad) {
      MapMat(x->grad_buffer().ptr(), rows, in).noalias() +=
          gy * ConstMapMat(w->value.ptr(), in, outd).transpose();
    }
    if (w->requires_grad) {
      MapMat(w->grad_buffer().ptr(), in, outd).noalias() +=
          ConstMapMat(x->value.ptr(), rows, in).transpose() * gy;
    }
    if (n.inputs.size() > 2 && n.inputs[2]->requires_grad) {
      Tensor gb({outd});
      std::vector<double> acc(outd, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        const float* src = n.grad.ptr() + r * outd;
        for (std::size_t c = 0; c < outd; ++c) acc[c] += src[c];
      }
      for (std::size_t c = 0; c < outd; ++c) gb[c] = static_cast<float>(acc[c]);
      n.inputs[2]->accumulate(gb);
    }
  });
}

Var silu(const Var& x) {
  Tensor out(x.shape());
  const float* in = x.value().ptr();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = in[i] / (1.0f + std::exp(-in[i]));
  return x.graph().record("silu", std::move(out), {x}, [](Node& n) {
    Node* x = n.inputs[0];
    Tensor g(x->value.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const float v = x->value[i];
      const float s = 1.0f / (1.0f + std::exp(-v));
      g[i] = n.grad[i] * s * (1.0f + v * (1.0f - s));
    }
    x->accumulate(g);
  });
}

Var square(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v *= v;
  return x.graph().record("square", std::move(out), {x}, [](Node& n) {
    Node* x = n.inputs[0];
    Tensor g(x->value.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] = 2.0f * x->value[i] * n.grad[i];
    x->accumulate(g);
  });
}

Var softmax_lastdim(const Var& x) {
  if (x.shape().empty()) throw DimensionError("softmax on a scalar");
  Tensor out = kernels::softmax_lastdim(x.value());
  return x.graph().record("softmax", std::move(out), {x}, [](Node& n) {
    std::size_t rows = 0, cols = 0;
    rows_shape(n.value, rows, cols);
    Tensor g(n.value.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      const float* y = n.value.ptr() + r * cols;
      const float* dy = n.grad.ptr() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += static_cast<double>(dy[c]) * y[c];
      float* dx = g.ptr() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) dx[c] = static_cast<float>(y[c] * (dy[c] - dot));
    }
    n.inputs[0]->accumulate(g);
  });
}

namespace {

struct NormStats {
  Tensor xhat;
  std::vector<float> inv_std;
};

NormStats normalize_rows(const Tensor& x, float eps) {
  if (!(eps > 0.0f)) throw ContractError("layer_norm eps must be positive");
  std::size_t rows = 0, cols = 0;
  rows_shape(x, rows, cols);
  NormStats s{Tensor(x.shape()), std::vector<float>(rows)};
  for (std::size_t r = 0; r < rows; ++r) {
    const float* in = x.ptr() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += in[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = in[c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    s.inv_std[r] = static_cast<float>(inv);
    float* o = s.xhat.ptr() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) o[c] = static_cast<float>((in[c] - mean) * inv);
  }
  return s;
}

// dx for y = xhat given dxhat, per row.
void normalize_backward(const Tensor& xhat, const std::vector<float>& inv_std, const float* dxhat,
                        float* dx) {
  const std::size_t cols = xhat.shape().back();
  const std::size_t rows = xhat.numel() / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xh = xhat.ptr() + r * cols;
    const float* d = dxhat + r * cols;
    double mean_d = 0.0, mean_dx = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      mean_d += d[c];
      mean_dx += static_cast<double>(d[c]) * xh[c];
    }
    mean_d /= static_cast<double>(cols);
    mean_dx /= static_cast<double>(cols);
    float* o = dx + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = static_cast<float>(inv_std[r] * (d[c] - mean_d - xh[c] * mean_dx));
    }
  }
}

}  // namespace

Var layer_norm(const Var& x, float eps) {
  if (x.shape().empty()) throw DimensionError("layer_norm on a scalar");
  auto stats = std::make_shared<NormStats>(normalize_rows(x.value(), eps));
  Tensor out = stats->xhat;
  return x.graph().record("layer_norm", std::move(out), {x}, [stats](Node& n) {
    Tensor g(n.value.shape());
    normalize_backward(stats->xhat, stats->inv_std, n.grad.ptr(), g.ptr());
    n.inputs[0]->accumulate(g);
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, float eps) {
  if (x.shape().empty()) throw DimensionError("layer_norm on a scalar");
  const std::size_t cols = x.shape().back();
  if (gain.shape() != Shape{cols} || bias.shape() != Shape{cols}) {
    throw DimensionError("layer_norm gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()) + " for rows of width " + std::to_string(cols));
  }
  auto stats = std::make_shared<NormStats>(normalize_rows(x.value(), eps));
  Tensor out(x.shape());
  const std::size_t rows = out.numel() / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = stats->xhat[r * cols + c] * gain.value()[c] + bias.value()[c];
    }
  }
  return x.graph().record("layer_norm", std::move(out), {x, gain, bias}, [stats, rows, cols](Node& n) {
    Node* x = n.inputs[0];
    Node* gain = n.inputs[1];
    Node* bias = n.inputs[2];
    if (x->requires_grad) {
      Tensor dxhat(n.value.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          dxhat[r * cols + c] = n.grad[r * cols + c] * gain->value[c];
        }
      }
      Tensor g(n.value.shape());
      normalize_backward(stats->xhat, stats->inv_std, dxhat.ptr(), g.ptr());
      x->accumulate(g);
    }
    if (gain->requires_grad || bias->requires_grad) {
      std::vector<double> dg(cols, 0.0), db(cols, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const double gy = n.grad[r * cols + c];
          dg[c] += gy * stats->xhat[r * cols + c];
          db[c] += gy;
        }
      }
      Tensor tg({cols}), tb({cols});
      for (std::size_t c = 0; c < cols; ++c) {
        tg[c] = static_cast<float>(dg[c]);
        tb[c] = static_cast<float>(db[c]);
      }
      if (gain->requires_grad) gain->accumulate(tg);
      if (bias->requires_grad) bias->accumulate(tb);
    }
  });
}

Var sum(const Var& x) {
  double acc = 0.0;
  for (float v : x.value().data()) acc += v;
  return x.graph().record("sum", Tensor::scalar(static_cast<float>(acc)), {x}, [](Node& n) {
    n.inputs[0]->accumulate(Tensor(n.inputs[0]->value.shape(), n.grad.item()));
  });
}

Var mean(const Var& x) {
  double acc = 0.0;
  for (float v : x.value().data()) acc += v;
  const double count = static_cast<double>(x.value().numel());
  return x.graph().record("mean", Tensor::scalar(static_cast<float>(acc / count)), {x},
                          [count](Node& n) {
                            n.inputs[0]->accumulate(Tensor(
                                n.inputs[0]->value.shape(),
                                static_cast<float>(n.grad.item() / count)));
                          });
}

Var mse(const Var& a, const Var& b) {
  Graph& g = graph_of(a, b);
  if (a.shape() != b.shape()) {
    throw DimensionError("mse shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t count = a.value().numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = static_cast<double>(a.value()[i]) - b.value()[i];
    acc += d * d;
  }
  return g.record("mse", Tensor::scalar(static_cast<float>(acc / count)), {a, b}, [count](Node& n) {
    Node* a = n.inputs[0];
    Node* b = n.inputs[1];
    const double k = 2.0 * n.grad.item() / static_cast<double>(count);
    Tensor ga(a->value.shape());
    for (std::size_t i = 0; i < count; ++i) {
      ga[i] = static_cast<float>(k * (static_cast<double>(a->value[i]) - b->value[i]));
    }
    if (b->requires_grad) {
      Tensor gb = ga;
      for (auto& v : gb.data()) v = -v;
      b->accumulate(gb);
    }
    if (a->requires_grad) a->accumulate(ga);
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.graph().record("reshape", std::move(out), {x}, [](Node& n) {
    n.inputs[0]->accumulate(n.grad.reshaped(n.inputs[0]->value.shape()));
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  const Shape& first = parts.front().shape();
  if (first.empty()) throw DimensionError("concat_rows needs rank >= 1");
  Shape tail(first.begin() + 1, first.end());
  std::size_t rows = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(tail.begin(), tail.end(), s.begin() + 1)) {
      throw DimensionError("concat_rows trailing mismatch: " + shape_str(first) + " vs " + shape_str(s));
    }
    rows += s[0];
  }
  Shape out_shape = first;
  out_shape[0] = rows;
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.ptr() + offset);
    offset += p.value().numel();
  }
  return parts.front().graph().record("concat_rows", std::move(out), parts, [](Node& n) {
    std::size_t offset = 0;
    for (Node* in : n.inputs) {
      const std::size_t count = in->value.numel();
      if (in->requires_grad) {
        Tensor& g = in->grad_buffer();
        for (std::size_t i = 0; i < count; ++i) g[i] += n.grad[offset + i];
      }
      offset += count;
    }
  });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (s.empty() || begin >= end || end > s[0]) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") of " + shape_str(s));
  }
  const std::size_t width = x.value().numel() / s[0];
  Shape out_shape = s;
  out_shape[0] = end - begin;
  Tensor out(out_shape);
  std::copy(x.value().ptr() + begin * width, x.value().ptr() + end * width, out.ptr());
  return x.graph().record("slice_rows", std::move(out), {x}, [begin, width](Node& n) {
    Tensor& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < n.grad.numel(); ++i) g[begin * width + i] += n.grad[i];
  });
}

Var row(const Var& x, std::size_t index) {
  if (x.shape().size() != 2) throw DimensionError("row() expects rank 2, got " + shape_str(x.shape()));
  return reshape(slice_rows(x, index, index + 1), Shape{x.shape()[1]});
}

Var gather(const Var& x, std::shared_ptr<const std::vector<std::size_t>> index, Shape shape) {
  if (shape_numel(shape) != index->size()) {
    throw DimensionError("gather of " + std::to_string(index->size()) + " elements into " + shape_str(shape));
  }
  Tensor out(std::move(shape));
  const std::size_t n = x.value().numel();
  for (std::size_t i = 0; i < index->size(); ++i) {
    const std::size_t src = (*index)[i];
    if (src >= n) throw DimensionError("gather index out of range");
    out[i] = x.value()[src];
  }
  return x.graph().record("gather", std::move(out), {x}, [index](Node& node) {
    Tensor& g = node.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < index->size(); ++i) g[(*index)[i]] += node.grad[i];
  });
}

}  // namespace ops
}  // namespace mozoo
