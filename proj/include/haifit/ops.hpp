#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "haifit/autograd.hpp"

namespace haifit::ops {

template <typename Scalar>
using V = Var<Scalar>;

namespace detail {

template <typename Scalar>
Tensor<Scalar> scalar_tensor(Scalar v) {
  return Tensor<Scalar>(Shape{1, 1, 1, 1}, v);
}

inline Index conv_out(Index in, Index k, Index stride, Index pad) { return (in + 2 * pad - k) / stride + 1; }

template <typename Scalar>
void im2col(const Scalar* src, Index channels, Index h, Index w, Index k, Index stride, Index pad, Index oh,
            Index ow, Scalar* col) {
  for (Index c = 0; c < channels; ++c) {
    const Scalar* plane = src + c * h * w;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        Scalar* row = col + ((c * k + ky) * k + kx) * oh * ow;
        for (Index oy = 0; oy < oh; ++oy) {
          const Index iy = oy * stride - pad + ky;
          Scalar* dst = row + oy * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, Scalar(0));
            continue;
          }
          for (Index ox = 0; ox < ow; ++ox) {
            const Index ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? plane[iy * w + ix] : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const Scalar* col, Index channels, Index h, Index w, Index k, Index stride, Index pad, Index oh,
            Index ow, Scalar* dst) {
  for (Index c = 0; c < channels; ++c) {
    Scalar* plane = dst + c * h * w;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Scalar* row = col + ((c * k + ky) * k + kx) * oh * ow;
        for (Index oy = 0; oy < oh; ++oy) {
          const Index iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (Index ox = 0; ox < ow; ++ox) {
            const Index ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) plane[iy * w + ix] += row[oy * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename Scalar>
V<Scalar> add(const V<Scalar>& a, const V<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<Scalar> out(a.shape());
  out.vec() = a.value().vec() + b.value().vec();
  return V<Scalar>::make(std::move(out), {a, b}, [](Node<Scalar>& self) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (self.parent(i).requires_grad) self.parent(i).grad_buffer().vec() += self.grad.vec();
    }
  });
}

template <typename Scalar>
V<Scalar> sub(const V<Scalar>& a, const V<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<Scalar> out(a.shape());
  out.vec() = a.value().vec() - b.value().vec();
  return V<Scalar>::make(std::move(out), {a, b}, [](Node<Scalar>& self) {
    if (self.parent(0).requires_grad) self.parent(0).grad_buffer().vec() += self.grad.vec();
    if (self.parent(1).requires_grad) self.parent(1).grad_buffer().vec() -= self.grad.vec();
  });
}

template <typename Scalar>
V<Scalar> mul(const V<Scalar>& a, const V<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<Scalar> out(a.shape());
  out.array() = a.value().array() * b.value().array();
  return V<Scalar>::make(std::move(out), {a, b}, [](Node<Scalar>& self) {
    auto& pa = self.parent(0);
    auto& pb = self.parent(1);
    if (pa.requires_grad) pa.grad_buffer().array() += self.grad.array() * pb.value.array();
    if (pb.requires_grad) pb.grad_buffer().array() += self.grad.array() * pa.value.array();
  });
}

/// x * k for a constant k.
template <typename Scalar>
V<Scalar> scale(const V<Scalar>& x, Scalar k) {
  Tensor<Scalar> out(x.shape());
  out.vec() = x.value().vec() * k;
  return V<Scalar>::make(std::move(out), {x}, [k](Node<Scalar>& self) {
    self.parent(0).grad_buffer().vec() += self.grad.vec() * k;
  });
}

/// x * s where s is a 1-element variable (a learnable gain).
template <typename Scalar>
V<Scalar> scale_by(const V<Scalar>& x, const V<Scalar>& s) {
  if (s.value().size() != 1) throw Error(ErrorKind::Shape, "scale_by expects a scalar gain");
  const Scalar k = s.value()[0];
  Tensor<Scalar> out(x.shape());
  out.vec() = x.value().vec() * k;
  return V<Scalar>::make(std::move(out), {x, s}, [](Node<Scalar>& self) {
    auto& px = self.parent(0);
    auto& ps = self.parent(1);
    if (px.requires_grad) px.grad_buffer().vec() += self.grad.vec() * ps.value[0];
    if (ps.requires_grad) ps.grad_buffer()[0] += self.grad.vec().dot(px.value.vec());
  });
}

// ---------------------------------------------------------------------------
// Activations

template <typename Scalar>
V<Scalar> leaky_relu(const V<Scalar>& x, Scalar slope) {
  Tensor<Scalar> out(x.shape());
  out.array() = (x.value().array() > Scalar(0)).select(x.value().array(), x.value().array() * slope);
  return V<Scalar>::make(std::move(out), {x}, [slope](Node<Scalar>& self) {
    auto& px = self.parent(0);
    px.grad_buffer().array() += (px.value.array() > Scalar(0)).select(self.grad.array(), self.grad.array() * slope);
  });
}

template <typename Scalar>
V<Scalar> relu(const V<Scalar>& x) {
  return leaky_relu(x, Scalar(0));
}

template <typename Scalar>
V<Scalar> tanh(const V<Scalar>& x) {
  Tensor<Scalar> out(x.shape());
  out.array() = x.value().array().tanh();
  return V<Scalar>::make(std::move(out), {x}, [](Node<Scalar>& self) {
    self.parent(0).grad_buffer().array() += self.grad.array() * (Scalar(1) - self.value.array().square());
  });
}

template <typename Scalar>
V<Scalar> sigmoid(const V<Scalar>& x) {
  Tensor<Scalar> out(x.shape());
  out.array() = Scalar(1) / (Scalar(1) + (-x.value().array()).exp());
  return V<Scalar>::make(std::move(out), {x}, [](Node<Scalar>& self) {
    self.parent(0).grad_buffer().array() += self.grad.array() * self.value.array() * (Scalar(1) - self.value.array());
  });
}

// ---------------------------------------------------------------------------
// Convolution and normalization

/// 2-D cross-correlation. `weight` is (out, in, k, k); `bias` may be an
/// undefined Var or (out, 1, 1, 1).
template <typename Scalar>
V<Scalar> conv2d(const V<Scalar>& x, const V<Scalar>& weight, const V<Scalar>& bias, Index stride, Index pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w) {
    throw Error(ErrorKind::Shape, "conv2d weight " + to_string(ws) + " does not fit input " + to_string(xs));
  }
  const Index k = ws.h;
  const Index oh = detail::conv_out(xs.h, k, stride, pad);
  const Index ow = detail::conv_out(xs.w, k, stride, pad);
  if (oh <= 0 || ow <= 0) throw Error(ErrorKind::Shape, "conv2d output is empty for input " + to_string(xs));
  const bool pointwise = (k == 1 && stride == 1 && pad == 0);
  const Index kdim = xs.c * k * k;
  const Index odim = oh * ow;

  Tensor<Scalar> out(Shape{xs.n, ws.n, oh, ow});
  ConstMatrixMap<Scalar> wm(weight.value().data(), ws.n, kdim);
  RowMatrix<Scalar> col;
  if (!pointwise) col.resize(kdim, odim);
  for (Index b = 0; b < xs.n; ++b) {
    const Scalar* src = x.value().data() + b * xs.per_sample();
    auto dst = out.sample_matrix(b);
    if (pointwise) {
      dst.noalias() = wm * ConstMatrixMap<Scalar>(src, kdim, odim);
    } else {
      detail::im2col(src, xs.c, xs.h, xs.w, k, stride, pad, oh, ow, col.data());
      dst.noalias() = wm * col;
    }
    if (bias.defined()) dst.colwise() += bias.value().vec();
  }

  std::vector<V<Scalar>> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return V<Scalar>::make(std::move(out), parents, [=](Node<Scalar>& self) {
    auto& px = self.parent(0);
    auto& pw = self.parent(1);
    const bool has_bias = self.parents.size() > 2;
    ConstMatrixMap<Scalar> wmat(pw.value.data(), ws.n, kdim);
    RowMatrix<Scalar> col_buf;
    RowMatrix<Scalar> dcol;
    if (!pointwise) col_buf.resize(kdim, odim);
    for (Index b = 0; b < xs.n; ++b) {
      auto g = static_cast<const Tensor<Scalar>&>(self.grad).sample_matrix(b);
      const Scalar* src = px.value.data() + b * xs.per_sample();
      if (pw.requires_grad) {
        MatrixMap<Scalar> gw(pw.grad_buffer().data(), ws.n, kdim);
        if (pointwise) {
          gw.noalias() += g * ConstMatrixMap<Scalar>(src, kdim, odim).transpose();
        } else {
          detail::im2col(src, xs.c, xs.h, xs.w, k, stride, pad, oh, ow, col_buf.data());
          gw.noalias() += g * col_buf.transpose();
        }
      }
      if (has_bias && self.parent(2).requires_grad) {
        self.parent(2).grad_buffer().vec() += g.rowwise().sum();
      }
      if (px.requires_grad) {
        Scalar* gx = px.grad_buffer().data() + b * xs.per_sample();
        if (pointwise) {
          MatrixMap<Scalar>(gx, kdim, odim).noalias() += wmat.transpose() * g;
        } else {
          dcol.noalias() = wmat.transpose() * g;
          detail::col2im(dcol.data(), xs.c, xs.h, xs.w, k, stride, pad, oh, ow, gx);
        }
      }
    }
  });
}

/// Per-sample, per-channel normalization to zero mean and unit variance
/// (biased variance, no affine parameters).
template <typename Scalar>
V<Scalar> instance_norm(const V<Scalar>& x, Scalar eps = Scalar(1e-5)) {
  const Shape s = x.shape();
  const Index planes = s.n * s.c;
  const Index area = s.plane();
  Tensor<Scalar> out(s);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(planes);
  ConstMatrixMap<Scalar> in(x.value().data(), planes, area);
  MatrixMap<Scalar> o(out.data(), planes, area);
  for (Index p = 0; p < planes; ++p) {
    const Scalar mean = in.row(p).mean();
    const Scalar var = (in.row(p).array() - mean).square().mean();
    inv_std[p] = Scalar(1) / std::sqrt(var + eps);
    o.row(p) = (in.row(p).array() - mean) * inv_std[p];
  }
  return V<Scalar>::make(std::move(out), {x}, [planes, area, inv_std](Node<Scalar>& self) {
    ConstMatrixMap<Scalar> y(self.value.data(), planes, area);
    ConstMatrixMap<Scalar> g(self.grad.data(), planes, area);
    MatrixMap<Scalar> gx(self.parent(0).grad_buffer().data(), planes, area);
    for (Index p = 0; p < planes; ++p) {
      const Scalar gm = g.row(p).mean();
      const Scalar gym = g.row(p).dot(y.row(p)) / Scalar(area);
      gx.row(p).array() += inv_std[p] * (g.row(p).array() - gm - y.row(p).array() * gym);
    }
  });
}

// ---------------------------------------------------------------------------
// Resampling

template <typename Scalar>
V<Scalar> upsample_nearest(const V<Scalar>& x, Index factor) {
  if (factor == 1) return x;
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h * factor, s.w * factor};
  Tensor<Scalar> out(os);
  const Index planes = s.n * s.c;
  for (Index p = 0; p < planes; ++p) {
    const Scalar* src = x.value().data() + p * s.plane();
    Scalar* dst = out.data() + p * os.plane();
    for (Index y = 0; y < os.h; ++y) {
      for (Index xx = 0; xx < os.w; ++xx) dst[y * os.w + xx] = src[(y / factor) * s.w + xx / factor];
    }
  }
  return V<Scalar>::make(std::move(out), {x}, [s, os, factor, planes](Node<Scalar>& self) {
    Scalar* gx = self.parent(0).grad_buffer().data();
    for (Index p = 0; p < planes; ++p) {
      const Scalar* g = self.grad.data() + p * os.plane();
      Scalar* dst = gx + p * s.plane();
      for (Index y = 0; y < os.h; ++y) {
        for (Index xx = 0; xx < os.w; ++xx) dst[(y / factor) * s.w + xx / factor] += g[y * os.w + xx];
      }
    }
  });
}

/// Non-overlapping mean pooling with a square window of `factor`.
template <typename Scalar>
V<Scalar> avg_pool(const V<Scalar>& x, Index factor) {
  if (factor == 1) return x;
  const Shape s = x.shape();
  if (s.h % factor != 0 || s.w % factor != 0) {
    throw Error(ErrorKind::Shape, "avg_pool factor " + std::to_string(factor) + " does not divide " + to_string(s));
  }
  const Shape os{s.n, s.c, s.h / factor, s.w / factor};
  const Scalar inv = Scalar(1) / Scalar(factor * factor);
  Tensor<Scalar> out(os);
  const Index planes = s.n * s.c;
  for (Index p = 0; p < planes; ++p) {
    const Scalar* src = x.value().data() + p * s.plane();
    Scalar* dst = out.data() + p * os.plane();
    for (Index y = 0; y < s.h; ++y) {
      for (Index xx = 0; xx < s.w; ++xx) dst[(y / factor) * os.w + xx / factor] += src[y * s.w + xx];
    }
  }
  out.vec() *= inv;
  return V<Scalar>::make(std::move(out), {x}, [s, os, factor, planes, inv](Node<Scalar>& self) {
    Scalar* gx = self.parent(0).grad_buffer().data();
    for (Index p = 0; p < planes; ++p) {
      const Scalar* g = self.grad.data() + p * os.plane();
      Scalar* dst = gx + p * s.plane();
      for (Index y = 0; y < s.h; ++y) {
        for (Index xx = 0; xx < s.w; ++xx) dst[y * s.w + xx] += g[(y / factor) * os.w + xx / factor] * inv;
      }
    }
  });
}

/// Non-overlapping max pooling; ties route the gradient to the first maximum.
template <typename Scalar>
V<Scalar> max_pool(const V<Scalar>& x, Index factor) {
  if (factor == 1) return x;
  const Shape s = x.shape();
  if (s.h % factor != 0 || s.w % factor != 0) {
    throw Error(ErrorKind::Shape, "max_pool factor " + std::to_string(factor) + " does not divide " + to_string(s));
  }
  const Shape os{s.n, s.c, s.h / factor, s.w / factor};
  Tensor<Scalar> out(os);
  std::vector<Index> argmax(static_cast<std::size_t>(os.numel()));
  const Index planes = s.n * s.c;
  for (Index p = 0; p < planes; ++p) {
    const Scalar* src = x.value().data() + p * s.plane();
    for (Index oy = 0; oy < os.h; ++oy) {
      for (Index ox = 0; ox < os.w; ++ox) {
        Index best = (oy * factor) * s.w + ox * factor;
        for (Index dy = 0; dy < factor; ++dy) {
          for (Index dx = 0; dx < factor; ++dx) {
            const Index i = (oy * factor + dy) * s.w + ox * factor + dx;
            if (src[i] > src[best]) best = i;
          }
        }
        const Index o = p * os.plane() + oy * os.w + ox;
        out[o] = src[best];
        argmax[static_cast<std::size_t>(o)] = p * s.plane() + best;
      }
    }
  }
  return V<Scalar>::make(std::move(out), {x}, [argmax = std::move(argmax)](Node<Scalar>& self) {
    Scalar* gx = self.parent(0).grad_buffer().data();
    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += self.grad[static_cast<Index>(o)];
  });
}

/// Per-channel (x - shift[c]) * scale[c] with constant coefficients.
template <typename Scalar>
V<Scalar> channel_affine(const V<Scalar>& x, const std::vector<double>& shift, const std::vector<double>& scale) {
  const Shape s = x.shape();
  if (static_cast<Index>(shift.size()) != s.c || static_cast<Index>(scale.size()) != s.c) {
    throw Error(ErrorKind::ChannelCount, "channel_affine coefficient count does not match " + to_string(s));
  }
  Tensor<Scalar> out(s);
  for (Index b = 0; b < s.n; ++b) {
    for (Index c = 0; c < s.c; ++c) {
      out.sample_matrix(b).row(c) =
          (x.value().sample_matrix(b).row(c).array() - Scalar(shift[c])) * Scalar(scale[c]);
    }
  }
  return V<Scalar>::make(std::move(out), {x}, [s, scale](Node<Scalar>& self) {
    auto& gx = self.parent(0).grad_buffer();
    for (Index b = 0; b < s.n; ++b) {
      for (Index c = 0; c < s.c; ++c) {
        gx.sample_matrix(b).row(c) += self.grad.sample_matrix(b).row(c) * Scalar(scale[c]);
      }
    }
  });
}

/// Average pooling to a fixed square output size (power-of-two ratios only).
template <typename Scalar>
V<Scalar> adaptive_avg_pool(const V<Scalar>& x, Index size) {
  const Shape s = x.shape();
  if (s.h != s.w || s.h % size != 0) {
    throw Error(ErrorKind::Shape, "adaptive_avg_pool to " + std::to_string(size) + " from " + to_string(s));
  }
  return avg_pool(x, s.h / size);
}

// ---------------------------------------------------------------------------
// Layout

template <typename Scalar>
V<Scalar> reshape(const V<Scalar>& x, Shape shape) {
  Tensor<Scalar> out = x.value().reshaped(shape);
  return V<Scalar>::make(std::move(out), {x}, [](Node<Scalar>& self) {
    self.parent(0).grad_buffer().vec() += self.grad.vec();
  });
}

/// Columns [begin, begin+count) of the per-sample flattening, as (n, count, 1, 1).
template <typename Scalar>
V<Scalar> slice_features(const V<Scalar>& x, Index begin, Index count) {
  const Shape s = x.shape();
  if (begin < 0 || begin + count > s.per_sample()) {
    throw Error(ErrorKind::Shape, "slice_features out of range for " + to_string(s));
  }
  Tensor<Scalar> out(Shape{s.n, count, 1, 1});
  out.batch_matrix() = x.value().batch_matrix().middleCols(begin, count);
  return V<Scalar>::make(std::move(out), {x}, [begin, count](Node<Scalar>& self) {
    self.parent(0).grad_buffer().batch_matrix().middleCols(begin, count) += self.grad.batch_matrix();
  });
}

/// Concatenates per-sample flattenings in order and views the result as
/// `shape`. For NCHW tensors with equal spatial size this is channel concat.
template <typename Scalar>
V<Scalar> concat(const std::vector<V<Scalar>>& parts, Shape shape) {
  Index total = 0;
  const Index n = parts.front().shape().n;
  for (const auto& p : parts) {
    if (p.shape().n != n) throw Error(ErrorKind::Shape, "concat batch mismatch");
    total += p.shape().per_sample();
  }
  if (shape.n != n || shape.per_sample() != total) {
    throw Error(ErrorKind::Shape, "concat target " + to_string(shape) + " does not fit parts");
  }
  Tensor<Scalar> out(shape);
  Index at = 0;
  for (const auto& p : parts) {
    const Index width = p.shape().per_sample();
    out.batch_matrix().middleCols(at, width) = p.value().batch_matrix();
    at += width;
  }
  return V<Scalar>::make(std::move(out), parts, [](Node<Scalar>& self) {
    Index offset = 0;
    for (auto& p : self.parents) {
      const Index width = p->value.shape().per_sample();
      if (p->requires_grad) p->grad_buffer().batch_matrix() += self.grad.batch_matrix().middleCols(offset, width);
      offset += width;
    }
  });
}

/// Dense layer on (n, in, 1, 1) inputs: y = x Wᵀ + b with W stored (out, in, 1, 1).
template <typename Scalar>
V<Scalar> linear(const V<Scalar>& x, const V<Scalar>& weight, const V<Scalar>& bias) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.per_sample() != xs.per_sample()) {
    throw Error(ErrorKind::Shape, "linear weight " + to_string(ws) + " vs input " + to_string(xs));
  }
  const Index in = xs.per_sample();
  Tensor<Scalar> out(Shape{xs.n, ws.n, 1, 1});
  ConstMatrixMap<Scalar> wm(weight.value().data(), ws.n, in);
  out.batch_matrix().noalias() = x.value().batch_matrix() * wm.transpose();
  if (bias.defined()) out.batch_matrix().rowwise() += bias.value().vec().transpose();
  std::vector<V<Scalar>> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return V<Scalar>::make(std::move(out), parents, [in, ws](Node<Scalar>& self) {
    auto& px = self.parent(0);
    auto& pw = self.parent(1);
    const auto g = static_cast<const Tensor<Scalar>&>(self.grad).batch_matrix();
    if (pw.requires_grad) {
      MatrixMap<Scalar>(pw.grad_buffer().data(), ws.n, in).noalias() += g.transpose() * px.value.batch_matrix();
    }
    if (self.parents.size() > 2 && self.parent(2).requires_grad) {
      self.parent(2).grad_buffer().vec() += g.colwise().sum().transpose();
    }
    if (px.requires_grad) {
      px.grad_buffer().batch_matrix().noalias() += g * ConstMatrixMap<Scalar>(pw.value.data(), ws.n, in);
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions (all return a 1-element tensor)

template <typename Scalar>
V<Scalar> mean(const V<Scalar>& x) {
  const Scalar inv = Scalar(1) / Scalar(x.value().size());
  return V<Scalar>::make(detail::scalar_tensor<Scalar>(x.value().vec().sum() * inv), {x},
                         [inv](Node<Scalar>& self) { self.parent(0).grad_buffer().array() += self.grad[0] * inv; });
}

template <typename Scalar>
V<Scalar> sum(const V<Scalar>& x) {
  return V<Scalar>::make(detail::scalar_tensor<Scalar>(x.value().vec().sum()), {x},
                         [](Node<Scalar>& self) { self.parent(0).grad_buffer().array() += self.grad[0]; });
}

/// mean |x|; the subgradient at 0 is 0.
template <typename Scalar>
V<Scalar> mean_abs(const V<Scalar>& x) {
  const Scalar inv = Scalar(1) / Scalar(x.value().size());
  return V<Scalar>::make(detail::scalar_tensor<Scalar>(x.value().array().abs().sum() * inv), {x},
                         [inv](Node<Scalar>& self) {
                           auto& px = self.parent(0);
                           px.grad_buffer().array() += px.value.array().sign() * (self.grad[0] * inv);
                         });
}

/// Σ x ⊙ w for a constant weight tensor.
template <typename Scalar>
V<Scalar> weighted_sum(const V<Scalar>& x, const Tensor<Scalar>& w) {
  require_same_shape(x.shape(), w.shape(), "weighted_sum");
  return V<Scalar>::make(detail::scalar_tensor<Scalar>(x.value().vec().dot(w.vec())), {x},
                         [w](Node<Scalar>& self) { self.parent(0).grad_buffer().vec() += w.vec() * self.grad[0]; });
}

/// mean log(clamp(p, eps, 1-eps)), or mean log(1 - clamp(p)) when `complement`.
/// Clamped entries pass no gradient.
template <typename Scalar>
V<Scalar> mean_log_prob(const V<Scalar>& p, bool complement, Scalar eps) {
  const Scalar inv = Scalar(1) / Scalar(p.value().size());
  auto clamped = p.value().array().max(eps).min(Scalar(1) - eps);
  const Scalar value =
      complement ? (Scalar(1) - clamped).log().sum() * inv : clamped.log().sum() * inv;
  return V<Scalar>::make(detail::scalar_tensor<Scalar>(value), {p}, [inv, complement, eps](Node<Scalar>& self) {
    auto& pp = self.parent(0);
    const auto v = pp.value.array();
    const auto inside = (v >= eps && v <= Scalar(1) - eps);
    const Scalar g = self.grad[0] * inv;
    if (complement) {
      pp.grad_buffer().array() += inside.select(-g / (Scalar(1) - v), Scalar(0));
    } else {
      pp.grad_buffer().array() += inside.select(g / v, Scalar(0));
    }
  });
}

/// Per-sample Gram matrix F Fᵀ / (c·h·w) of the (c x h·w) unfolding, shaped (n, 1, c, c).
template <typename Scalar>
V<Scalar> gram(const V<Scalar>& x) {
  const Shape s = x.shape();
  const Scalar norm = Scalar(1) / Scalar(s.per_sample());
  Tensor<Scalar> out(Shape{s.n, 1, s.c, s.c});
  for (Index b = 0; b < s.n; ++b) {
    auto f = x.value().sample_matrix(b);
    MatrixMap<Scalar>(out.data() + b * s.c * s.c, s.c, s.c).noalias() = (f * f.transpose()) * norm;
  }
  return V<Scalar>::make(std::move(out), {x}, [s, norm](Node<Scalar>& self) {
    auto& px = self.parent(0);
    for (Index b = 0; b < s.n; ++b) {
      ConstMatrixMap<Scalar> g(self.grad.data() + b * s.c * s.c, s.c, s.c);
      auto f = px.value.sample_matrix(b);
      px.grad_buffer().sample_matrix(b).noalias() += ((g + g.transpose()) * f) * norm;
    }
  });
}

}  // namespace haifit::ops
