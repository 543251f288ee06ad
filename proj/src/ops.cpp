// SPDX-License-Identifier: Apache-2.0
#include "vcwe/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "vcwe/error.hpp"

namespace vcwe::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap cmat(const Tensor& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return ConstMatMap(t.data().data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MatMap mmat(Tensor& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MatMap(t.data().data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

void require_rank(const char* op, const Var& v, std::size_t rank) {
  if (v.value().rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(v.shape()));
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid_scalar(double x) { return x < 0 ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x)); }

template <class F, class D>
Var unary(const char* op, Var x, F f, D derivative) {
  Tensor out(x.shape());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  Node* a = x.node();
  return x.graph().record(op, std::move(out), {x}, [a, derivative](Node& self) {
    if (!a->requires_grad) return;
    Tensor& ga = a->grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * derivative(a->value[i], self.value[i]);
  });
}

}  // namespace

// ------------------------------------------------------------- element-wise

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  out += b.value();
  Node *na = a.node(), *nb = b.node();
  return a.graph().record("add", std::move(out), {a, b}, [na, nb](Node& self) {
    if (na->requires_grad) na->grad_buffer() += self.grad;
    if (nb->requires_grad) nb->grad_buffer() += self.grad;
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  Node *na = a.node(), *nb = b.node();
  return a.graph().record("sub", std::move(out), {a, b}, [na, nb](Node& self) {
    if (na->requires_grad) na->grad_buffer() += self.grad;
    if (nb->requires_grad) {
      Tensor& g = nb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  Node *na = a.node(), *nb = b.node();
  return a.graph().record("mul", std::move(out), {a, b}, [na, nb](Node& self) {
    if (na->requires_grad) {
      Tensor& g = na->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb->value[i];
    }
    if (nb->requires_grad) {
      Tensor& g = nb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na->value[i];
    }
  });
}

Var scale(Var a, double factor) {
  return unary("scale", a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var sigmoid(Var x) {
  return unary("sigmoid", x, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var log_sigmoid(Var x) {
  return unary("log_sigmoid", x, log_sigmoid_scalar, [](double v, double) { return sigmoid_scalar(-v); });
}

Var softmax(Var x) {
  require_rank("softmax", x, 1);
  const auto in = x.value().data();
  if (in.empty()) throw ShapeError("softmax of an empty tensor");
  const double hi = *std::max_element(in.begin(), in.end());
  Tensor out(x.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - hi);
    total += out[i];
  }
  for (std::size_t i = 0; i < in.size(); ++i) out[i] /= total;
  Node* a = x.node();
  return x.graph().record("softmax", std::move(out), {x}, [a](Node& self) {
    if (!a->requires_grad) return;
    double inner = 0.0;
    for (std::size_t i = 0; i < self.value.size(); ++i) inner += self.grad[i] * self.value[i];
    Tensor& g = a->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.value[i] * (self.grad[i] - inner);
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  Node* a = x.node();
  return x.graph().record("sum", Tensor::scalar(total), {x}, [a](Node& self) {
    if (!a->requires_grad) return;
    const double g = self.grad[0];
    for (double& v : a->grad_buffer().data()) v += g;
  });
}

// ------------------------------------------------------------------- layout

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  Node* a = x.node();
  return x.graph().record("reshape", std::move(out), {x}, [a](Node& self) {
    if (!a->requires_grad) return;
    Tensor& g = a->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var transpose(Var m) {
  require_rank("transpose", m, 2);
  const std::size_t r = m.shape()[0], c = m.shape()[1];
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = m.value().at(i, j);
  Node* a = m.node();
  return m.graph().record("transpose", std::move(out), {m}, [a, r, c](Node& self) {
    if (!a->requires_grad) return;
    Tensor& g = a->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g.at(i, j) += self.grad.at(j, i);
  });
}

Var concat(Var a, Var b) {
  require_rank("concat", a, 1);
  require_rank("concat", b, 1);
  const std::size_t na = a.size(), nb = b.size();
  std::vector<double> data(a.value().values());
  data.insert(data.end(), b.value().values().begin(), b.value().values().end());
  Node *pa = a.node(), *pb = b.node();
  return a.graph().record("concat", Tensor(Shape{na + nb}, std::move(data)), {a, b}, [pa, pb, na](Node& self) {
    if (pa->requires_grad) {
      Tensor& g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      Tensor& g = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[na + i];
    }
  });
}

Var slice(Var x, std::size_t begin, std::size_t end) {
  require_rank("slice", x, 1);
  if (begin > end || end > x.size())
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") outside " +
                     shape_string(x.shape()));
  const auto src = x.value().values();
  Tensor out(Shape{end - begin}, std::vector<double>(src.begin() + static_cast<std::ptrdiff_t>(begin),
                                                     src.begin() + static_cast<std::ptrdiff_t>(end)));
  Node* a = x.node();
  return x.graph().record("slice", std::move(out), {x}, [a, begin](Node& self) {
    if (!a->requires_grad) return;
    Tensor& g = a->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin + i] += self.grad[i];
  });
}

Var row(Var m, std::size_t i) {
  require_rank("row", m, 2);
  const std::size_t index[] = {i};
  return reshape(gather_rows(m, index), Shape{m.shape()[1]});
}

Var stack(std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack of zero rows");
  const std::size_t width = rows.front().size();
  Tensor out(Shape{rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require_rank("stack", rows[r], 1);
    if (rows[r].size() != width) throw ShapeError("stack: rows of unequal length");
    std::copy(rows[r].value().data().begin(), rows[r].value().data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  std::vector<Node*> inputs;
  for (const auto& v : rows) inputs.push_back(v.node());
  return rows.front().graph().record("stack", std::move(out), rows, [inputs, width](Node& self) {
    for (std::size_t r = 0; r < inputs.size(); ++r) {
      if (!inputs[r]->requires_grad) continue;
      Tensor& g = inputs[r]->grad_buffer();
      for (std::size_t j = 0; j < width; ++j) g[j] += self.grad[r * width + j];
    }
  });
}

Var gather_rows(Var m, std::span<const std::size_t> index) {
  require_rank("gather_rows", m, 2);
  const std::size_t rows = m.shape()[0], width = m.shape()[1];
  Tensor out(Shape{index.size(), width});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) throw ShapeError("gather_rows: index " + std::to_string(index[i]) + " out of range");
    for (std::size_t j = 0; j < width; ++j) out[i * width + j] = m.value()[index[i] * width + j];
  }
  Node* a = m.node();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return m.graph().record("gather_rows", std::move(out), {m}, [a, idx = std::move(idx), width](Node& self) {
    if (!a->requires_grad) return;
    Tensor& g = a->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < width; ++j) g[idx[i] * width + j] += self.grad[i * width + j];
  });
}

Var rowwise_dot(Var a, Var b) {
  require_rank("rowwise_dot", a, 2);
  require_same_shape("rowwise_dot", a, b);
  const std::size_t n = a.shape()[0], d = a.shape()[1];
  Tensor out(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += a.value()[i * d + j] * b.value()[i * d + j];
    out[i] = s;
  }
  Node *na = a.node(), *nb = b.node();
  return a.graph().record("rowwise_dot", std::move(out), {a, b}, [na, nb, n, d](Node& self) {
    if (na->requires_grad) {
      Tensor& g = na->grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[i] * nb->value[i * d + j];
    }
    if (nb->requires_grad) {
      Tensor& g = nb->grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[i] * na->value[i * d + j];
    }
  });
}

Var mean_rows(Var m) {
  require_rank("mean_rows", m, 2);
  const std::size_t n = m.shape()[0], d = m.shape()[1];
  if (n == 0) throw ShapeError("mean_rows of zero rows");
  Tensor out(Shape{d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += m.value()[i * d + j];
  for (double& v : out.data()) v /= static_cast<double>(n);
  Node* a = m.node();
  return m.graph().record("mean_rows", std::move(out), {m}, [a, n, d](Node& self) {
    if (!a->requires_grad) return;
    Tensor& g = a->grad_buffer();
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[j] * inv;
  });
}

// ------------------------------------------------------------ linear algebra

Var matmul(Var a, Var b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  if (b.shape()[0] != k)
    throw ShapeError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  Tensor out(Shape{n, m});
  mmat(out, n, m).noalias() = cmat(a.value(), n, k) * cmat(b.value(), k, m);
  Node *na = a.node(), *nb = b.node();
  return a.graph().record("matmul", std::move(out), {a, b}, [na, nb, n, k, m](Node& self) {
    const auto dc = cmat(self.grad, n, m);
    if (na->requires_grad) mmat(na->grad_buffer(), n, k).noalias() += dc * cmat(nb->value, k, m).transpose();
    if (nb->requires_grad) mmat(nb->grad_buffer(), k, m).noalias() += cmat(na->value, n, k).transpose() * dc;
  });
}

Var linear(Var x, Var weight, Var bias) {
  require_rank("linear", x, 2);
  require_rank("linear", weight, 2);
  require_rank("linear", bias, 1);
  if (bias.size() != weight.shape()[1])
    throw ShapeError("linear: bias " + shape_string(bias.shape()) + " does not match weight " +
                     shape_string(weight.shape()));
  Var xw = matmul(x, weight);
  const std::size_t n = xw.shape()[0], m = xw.shape()[1];
  Tensor out = xw.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += bias.value()[j];
  Node *nxw = xw.node(), *nbias = bias.node();
  return x.graph().record("add_bias", std::move(out), {xw, bias}, [nxw, nbias, n, m](Node& self) {
    if (nxw->requires_grad) nxw->grad_buffer() += self.grad;
    if (nbias->requires_grad) {
      Tensor& g = nbias->grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) g[j] += self.grad[i * m + j];
    }
  });
}

Var matvec(Var m, Var x) {
  require_rank("matvec", m, 2);
  require_rank("matvec", x, 1);
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  if (x.size() != cols)
    throw ShapeError("matvec: " + shape_string(m.shape()) + " x " + shape_string(x.shape()));
  Tensor out(Shape{rows});
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += m.value()[i * cols + j] * x.value()[j];
    out[i] = s;
  }
  Node *nm = m.node(), *nx = x.node();
  return m.graph().record("matvec", std::move(out), {m, x}, [nm, nx, rows, cols](Node& self) {
    if (nm->requires_grad) {
      Tensor& g = nm->grad_buffer();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) g[i * cols + j] += self.grad[i] * nx->value[j];
    }
    if (nx->requires_grad) {
      Tensor& g = nx->grad_buffer();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) g[j] += self.grad[i] * nm->value[i * cols + j];
    }
  });
}

Var dot(Var a, Var b) {
  require_rank("dot", a, 1);
  require_same_shape("dot", a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.value()[i] * b.value()[i];
  Node *na = a.node(), *nb = b.node();
  return a.graph().record("dot", Tensor::scalar(s), {a, b}, [na, nb](Node& self) {
    const double g = self.grad[0];
    if (na->requires_grad) {
      Tensor& ga = na->grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * nb->value[i];
    }
    if (nb->requires_grad) {
      Tensor& gb = nb->grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * na->value[i];
    }
  });
}

// ------------------------------------------------------------- convolution

namespace {

struct ImageDims {
  std::size_t n, c, h, w;
};

ImageDims image_dims(const char* op, const Var& x) {
  const Shape& s = x.shape();
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  throw ShapeError(std::string(op) + ": expected [C,H,W] or [N,C,H,W], got " + shape_string(s));
}

struct ConvGeometry {
  std::size_t c_in, h, w, kh, kw, stride, pad, ho, wo;
  std::size_t patch() const { return c_in * kh * kw; }
  std::size_t out_pixels() const { return ho * wo; }
};

// cols [c_in*kh*kw, ho*wo] for one image.
void im2col(const double* image, const ConvGeometry& g, double* cols) {
  const std::size_t np = g.out_pixels();
  for (std::size_t c = 0; c < g.c_in; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* dst = cols + ((c * g.kh + i) * g.kw + j) * np;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long y = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long x = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
            const bool inside = y >= 0 && x >= 0 && y < static_cast<long>(g.h) && x < static_cast<long>(g.w);
            dst[oy * g.wo + ox] = inside ? image[(c * g.h + static_cast<std::size_t>(y)) * g.w + static_cast<std::size_t>(x)] : 0.0;
          }
        }
      }
}

void col2im(const double* cols, const ConvGeometry& g, double* image_grad) {
  const std::size_t np = g.out_pixels();
  for (std::size_t c = 0; c < g.c_in; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* src = cols + ((c * g.kh + i) * g.kw + j) * np;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long y = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          if (y < 0 || y >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long x = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
            if (x < 0 || x >= static_cast<long>(g.w)) continue;
            image_grad[(c * g.h + static_cast<std::size_t>(y)) * g.w + static_cast<std::size_t>(x)] += src[oy * g.wo + ox];
          }
        }
      }
}

std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, const char* axis) {
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t padded = in + 2 * pad;
  if (k > padded || (padded - k) % stride != 0)
    throw ShapeError(std::string("conv2d: non-integral output ") + axis + " for input " + std::to_string(in) +
                     ", kernel " + std::to_string(k) + ", stride " + std::to_string(stride) + ", padding " +
                     std::to_string(pad));
  return (padded - k) / stride + 1;
}

}  // namespace

Var conv2d(Var x, Var kernels, Var bias, Conv2dOptions options) {
  const ImageDims d = image_dims("conv2d", x);
  require_rank("conv2d", kernels, 4);
  require_rank("conv2d", bias, 1);
  const Shape& ks = kernels.shape();
  const std::size_t c_out = ks[0];
  if (ks[1] != d.c)
    throw ShapeError("conv2d: kernel expects " + std::to_string(ks[1]) + " input channels, got " + std::to_string(d.c));
  if (bias.size() != c_out) throw ShapeError("conv2d: bias length must equal output channels");
  ConvGeometry g{d.c, d.h, d.w, ks[2], ks[3], options.stride, options.padding, 0, 0};
  g.ho = conv_extent(d.h, g.kh, g.stride, g.pad, "height");
  g.wo = conv_extent(d.w, g.kw, g.stride, g.pad, "width");

  const std::size_t in_size = d.c * d.h * d.w, out_size = c_out * g.out_pixels();
  Shape out_shape = x.shape().size() == 3 ? Shape{c_out, g.ho, g.wo} : Shape{d.n, c_out, g.ho, g.wo};
  Tensor out(out_shape);
  std::vector<double> cols(g.patch() * g.out_pixels());
  const auto kmat = cmat(kernels.value(), c_out, g.patch());
  for (std::size_t n = 0; n < d.n; ++n) {
    im2col(x.value().data().data() + n * in_size, g, cols.data());
    auto o = mmat(out, c_out, g.out_pixels(), n * out_size);
    o.noalias() = kmat * ConstMatMap(cols.data(), static_cast<Eigen::Index>(g.patch()),
                                     static_cast<Eigen::Index>(g.out_pixels()));
    for (std::size_t co = 0; co < c_out; ++co) o.row(static_cast<Eigen::Index>(co)).array() += bias.value()[co];
  }

  Node *nx = x.node(), *nk = kernels.node(), *nb = bias.node();
  return x.graph().record("conv2d", std::move(out), {x, kernels, bias},
                          [nx, nk, nb, g, d, c_out, in_size, out_size](Node& self) {
    std::vector<double> cols(g.patch() * g.out_pixels());
    std::vector<double> dcols(cols.size());
    for (std::size_t n = 0; n < d.n; ++n) {
      const auto dout = cmat(self.grad, c_out, g.out_pixels(), n * out_size);
      if (nk->requires_grad) {
        im2col(nx->value.data().data() + n * in_size, g, cols.data());
        mmat(nk->grad_buffer(), c_out, g.patch()).noalias() +=
            dout * ConstMatMap(cols.data(), static_cast<Eigen::Index>(g.patch()),
                               static_cast<Eigen::Index>(g.out_pixels())).transpose();
      }
      if (nb->requires_grad) {
        Tensor& gb = nb->grad_buffer();
        for (std::size_t co = 0; co < c_out; ++co) gb[co] += dout.row(static_cast<Eigen::Index>(co)).sum();
      }
      if (nx->requires_grad) {
        MatMap(dcols.data(), static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.out_pixels()))
            .noalias() = cmat(nk->value, c_out, g.patch()).transpose() * dout;
        col2im(dcols.data(), g, nx->grad_buffer().data().data() + n * in_size);
      }
    }
  });
}

Pooled maxpool2d(Var x, std::size_t window, std::size_t stride) {
  const ImageDims d = image_dims("maxpool2d", x);
  if (window == 0 || stride == 0) throw ShapeError("maxpool2d: window and stride must be positive");
  if (window > d.h || window > d.w)
    throw ShapeError("maxpool2d: window " + std::to_string(window) + " larger than input " + shape_string(x.shape()));
  const std::size_t ho = (d.h - window) / stride + 1, wo = (d.w - window) / stride + 1;
  Shape out_shape = x.shape().size() == 3 ? Shape{d.c, ho, wo} : Shape{d.n, d.c, ho, wo};
  Tensor out(out_shape);
  std::vector<std::size_t> argmax(out.size());
  const auto in = x.value().data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < d.n * d.c; ++plane) {
    const std::size_t base = plane * d.h * d.w;
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox, ++o) {
        std::size_t best = base + oy * stride * d.w + ox * stride;
        for (std::size_t i = 0; i < window; ++i)
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = base + (oy * stride + i) * d.w + ox * stride + j;
            if (in[idx] > in[best]) best = idx;
          }
        out[o] = in[best];
        argmax[o] = best;
      }
  }
  Node* nx = x.node();
  Var output = x.graph().record("maxpool2d", std::move(out), {x}, [nx, argmax](Node& self) {
    if (!nx->requires_grad) return;
    Tensor& g = nx->grad_buffer();
    for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad[i];
  });
  return {output, std::move(argmax)};
}

Var batchnorm2d(Var x, Var gamma, Var beta, RunningStats* stats, NormMode mode, double momentum, double eps) {
  require_rank("batchnorm2d", x, 4);
  const Shape& s = x.shape();
  const std::size_t n = s[0], c = s[1], plane = s[2] * s[3];
  const std::size_t count = n * plane;
  if (gamma.size() != c || beta.size() != c) throw ShapeError("batchnorm2d: gamma/beta must have one entry per channel");
  if (stats && (stats->mean.size() != c || stats->var.size() != c))
    throw ShapeError("batchnorm2d: running statistics have the wrong channel count");

  std::vector<double> mean(c, 0.0), var(c, 0.0);
  const auto in = x.value().data();
  if (mode == NormMode::train) {
    if (count < 2) throw ShapeError("batchnorm2d: train mode needs N*H*W > 1");
    for (std::size_t ch = 0; ch < c; ++ch) {
      double total = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t p = 0; p < plane; ++p) total += in[(b * c + ch) * plane + p];
      mean[ch] = total / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t p = 0; p < plane; ++p) {
          const double dev = in[(b * c + ch) * plane + p] - mean[ch];
          sq += dev * dev;
        }
      var[ch] = sq / static_cast<double>(count);
    }
    if (stats) {
      const double unbias = static_cast<double>(count) / static_cast<double>(count - 1);
      for (std::size_t ch = 0; ch < c; ++ch) {
        stats->mean[ch] = (1.0 - momentum) * stats->mean[ch] + momentum * mean[ch];
        stats->var[ch] = (1.0 - momentum) * stats->var[ch] + momentum * var[ch] * unbias;
      }
    }
  } else {
    if (!stats) throw StateError("batchnorm2d: eval mode requires running statistics");
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = stats->mean[ch];
      var[ch] = stats->var[ch];
    }
  }

  std::vector<double> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + eps);
  Tensor xhat(s);
  Tensor out(s);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t i = (b * c + ch) * plane + p;
        xhat[i] = (in[i] - mean[ch]) * inv_std[ch];
        out[i] = gamma.value()[ch] * xhat[i] + beta.value()[ch];
      }

  Node *nx = x.node(), *ng = gamma.node(), *nbeta = beta.node();
  const bool batch_stats = mode == NormMode::train;
  return x.graph().record("batchnorm2d", std::move(out), {x, gamma, beta},
                          [nx, ng, nbeta, xhat = std::move(xhat), inv_std, n, c, plane, count,
                           batch_stats](Node& self) {
    std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t i = (b * c + ch) * plane + p;
          sum_dy[ch] += self.grad[i];
          sum_dy_xhat[ch] += self.grad[i] * xhat[i];
        }
    if (ng->requires_grad) {
      Tensor& g = ng->grad_buffer();
      for (std::size_t ch = 0; ch < c; ++ch) g[ch] += sum_dy_xhat[ch];
    }
    if (nbeta->requires_grad) {
      Tensor& g = nbeta->grad_buffer();
      for (std::size_t ch = 0; ch < c; ++ch) g[ch] += sum_dy[ch];
    }
    if (!nx->requires_grad) return;
    Tensor& g = nx->grad_buffer();
    const double m = static_cast<double>(count);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double scale_ch = ng->value[ch] * inv_std[ch];
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t i = (b * c + ch) * plane + p;
          if (batch_stats)
            g[i] += scale_ch * (self.grad[i] - sum_dy[ch] / m - xhat[i] * sum_dy_xhat[ch] / m);
          else
            g[i] += scale_ch * self.grad[i];
        }
      }
  });
}

// --------------------------------------------------------------------- LSTM

LstmState lstm_cell(Var x, const LstmState& prev, const LstmWeights& w) {
  require_rank("lstm_cell", x, 1);
  require_rank("lstm_cell", prev.h, 1);
  require_rank("lstm_cell", prev.c, 1);
  require_rank("lstm_cell", w.input, 2);
  require_rank("lstm_cell", w.recurrent, 2);
  require_rank("lstm_cell", w.bias, 1);
  const std::size_t din = x.size(), h = prev.h.size();
  if (prev.c.size() != h || w.input.shape() != Shape{din, 4 * h} || w.recurrent.shape() != Shape{h, 4 * h} ||
      w.bias.size() != 4 * h)
    throw ShapeError("lstm_cell: inconsistent dimensions (input " + shape_string(x.shape()) + ", hidden " +
                     std::to_string(h) + ", W_x " + shape_string(w.input.shape()) + ", W_h " +
                     shape_string(w.recurrent.shape()) + ")");

  const auto xv = x.value().data(), hv = prev.h.value().data(), cv = prev.c.value().data();
  const auto wx = w.input.value().data(), wh = w.recurrent.value().data(), bv = w.bias.value().data();
  // gates: [i | f | g | o] after activation.
  std::vector<double> gates(4 * h);
  for (std::size_t k = 0; k < 4 * h; ++k) {
    double z = bv[k];
    for (std::size_t j = 0; j < din; ++j) z += xv[j] * wx[j * 4 * h + k];
    for (std::size_t j = 0; j < h; ++j) z += hv[j] * wh[j * 4 * h + k];
    gates[k] = (k >= 2 * h && k < 3 * h) ? std::tanh(z) : sigmoid_scalar(z);
  }
  Tensor packed(Shape{2 * h});  // [h_t | c_t]
  std::vector<double> tanh_c(h);
  for (std::size_t j = 0; j < h; ++j) {
    const double c_t = gates[h + j] * cv[j] + gates[j] * gates[2 * h + j];
    tanh_c[j] = std::tanh(c_t);
    packed[j] = gates[3 * h + j] * tanh_c[j];
    packed[h + j] = c_t;
  }

  Node *nx = x.node(), *nh = prev.h.node(), *nc = prev.c.node();
  Node *nwx = w.input.node(), *nwh = w.recurrent.node(), *nb = w.bias.node();
  const Var inputs[] = {x, prev.h, prev.c, w.input, w.recurrent, w.bias};
  Var cell = x.graph().record("lstm_cell", std::move(packed), inputs,
                              [=, gates = std::move(gates), tanh_c = std::move(tanh_c)](Node& self) {
    std::vector<double> dz(4 * h);
    std::vector<double> dc_prev(h);
    for (std::size_t j = 0; j < h; ++j) {
      const double i_g = gates[j], f_g = gates[h + j], g_g = gates[2 * h + j], o_g = gates[3 * h + j];
      const double dh = self.grad[j];
      const double dc = self.grad[h + j] + dh * o_g * (1.0 - tanh_c[j] * tanh_c[j]);
      dz[j] = dc * g_g * i_g * (1.0 - i_g);
      dz[h + j] = dc * nc->value[j] * f_g * (1.0 - f_g);
      dz[2 * h + j] = dc * i_g * (1.0 - g_g * g_g);
      dz[3 * h + j] = dh * tanh_c[j] * o_g * (1.0 - o_g);
      dc_prev[j] = dc * f_g;
    }
    const std::size_t width = 4 * h;
    if (nx->requires_grad) {
      Tensor& g = nx->grad_buffer();
      for (std::size_t j = 0; j < din; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < width; ++k) s += nwx->value[j * width + k] * dz[k];
        g[j] += s;
      }
    }
    if (nh->requires_grad) {
      Tensor& g = nh->grad_buffer();
      for (std::size_t j = 0; j < h; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < width; ++k) s += nwh->value[j * width + k] * dz[k];
        g[j] += s;
      }
    }
    if (nc->requires_grad) {
      Tensor& g = nc->grad_buffer();
      for (std::size_t j = 0; j < h; ++j) g[j] += dc_prev[j];
    }
    if (nwx->requires_grad) {
      Tensor& g = nwx->grad_buffer();
      for (std::size_t j = 0; j < din; ++j)
        for (std::size_t k = 0; k < width; ++k) g[j * width + k] += nx->value[j] * dz[k];
    }
    if (nwh->requires_grad) {
      Tensor& g = nwh->grad_buffer();
      for (std::size_t j = 0; j < h; ++j)
        for (std::size_t k = 0; k < width; ++k) g[j * width + k] += nh->value[j] * dz[k];
    }
    if (nb->requires_grad) {
      Tensor& g = nb->grad_buffer();
      for (std::size_t k = 0; k < width; ++k) g[k] += dz[k];
    }
  });
  return {slice(cell, 0, h), slice(cell, h, 2 * h)};
}

}  // namespace vcwe::ad
