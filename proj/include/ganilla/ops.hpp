#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ganilla/autograd.hpp"
#include "ganilla/tensor.hpp"

// Differentiable operators over NCHW tensors. Convolutions lower to
// im2col + GEMM; every op pairs its forward pass with a hand-written adjoint.
namespace ganilla::ops {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

inline void require_rank4(const Shape& s, const char* op) {
  if (s.size() != 4) throw ShapeError(std::string(op) + ": expected rank-4 NCHW tensor, got " + shape_str(s));
}

inline std::size_t conv_out(std::size_t in, std::size_t k, std::size_t s, std::size_t p, const char* op,
                            const char* axis) {
  if (in + 2 * p < k)
    throw ShapeError(std::string(op) + ": " + axis + " extent " + std::to_string(in) + " too small for kernel " +
                     std::to_string(k));
  return (in + 2 * p - k) / s + 1;
}

struct ConvGeom {
  std::size_t channels, height, width, kernel, stride, pad, out_h, out_w;
};

// Output rows [r0, r1) of the unfolded input:
// col[(c*k*k + ki*k + kj), (oh-r0)*out_w + ow] = x[c, oh*s - p + ki, ow*s - p + kj] (zero outside).
template <typename T>
void im2col(const T* x, const ConvGeom& g, std::size_t r0, std::size_t r1, T* col) {
  const std::size_t k = g.kernel, hw = (r1 - r0) * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* xc = x + c * g.height * g.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = col + ((c * k + ki) * k + kj) * hw;
        for (std::size_t oh = r0; oh < r1; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          T* out = row + (oh - r0) * g.out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(out, out + g.out_w, T{0});
            continue;
          }
          const T* xr = xc + static_cast<std::size_t>(ih) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            out[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width)) ? T{0} : xr[iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns of output rows [r0, r1) into the image.
template <typename T>
void col2im(const T* col, const ConvGeom& g, std::size_t r0, std::size_t r1, T* x) {
  const std::size_t k = g.kernel, hw = (r1 - r0) * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* xc = x + c * g.height * g.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* row = col + ((c * k + ki) * k + kj) * hw;
        for (std::size_t oh = r0; oh < r1; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* xr = xc + static_cast<std::size_t>(ih) * g.width;
          const T* in = row + (oh - r0) * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.width)) xr[iw] += in[ow];
          }
        }
      }
    }
  }
}

// Output rows per im2col tile, bounding the unfolded buffer to ~1M scalars.
inline std::size_t rows_per_tile(const ConvGeom& g) {
  constexpr std::size_t budget = std::size_t{1} << 20;
  const std::size_t per_row = g.channels * g.kernel * g.kernel * g.out_w;
  return std::clamp<std::size_t>(budget / std::max<std::size_t>(per_row, 1), 1, g.out_h);
}

inline bool is_pointwise(const ConvGeom& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

}  // namespace detail

/// 2-D convolution. `w` is [O, C, k, k]; `b` may be undefined. Zero padding.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride, std::size_t pad = 0) {
  using namespace detail;
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  require_rank4(xs, "conv2d");
  require_rank4(ws, "conv2d weight");
  if (ws[1] != xs[1] || ws[2] != ws[3])
    throw ShapeError("conv2d: weight " + shape_str(ws) + " incompatible with input " + shape_str(xs));
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t n_batch = xs[0], out_c = ws[0];
  ConvGeom g{xs[1], xs[2], xs[3], ws[2], stride, pad, 0, 0};
  g.out_h = conv_out(g.height, g.kernel, stride, pad, "conv2d", "height");
  g.out_w = conv_out(g.width, g.kernel, stride, pad, "conv2d", "width");
  const std::size_t ckk = g.channels * g.kernel * g.kernel, hw = g.out_h * g.out_w;
  const std::size_t in_per = g.channels * g.height * g.width;
  const std::size_t tile = rows_per_tile(g);

  Tensor<T> out({n_batch, out_c, g.out_h, g.out_w});
  Buffer<T> col(is_pointwise(g) ? 0 : ckk * tile * g.out_w);
  ConstMatMap<T> wm(w.value().data(), out_c, ckk);
  for (std::size_t n = 0; n < n_batch; ++n) {
    const T* xn = x.value().data() + n * in_per;
    MatMap<T> om(out.data() + n * out_c * hw, out_c, hw);
    if (is_pointwise(g)) {
      om.noalias() = wm * ConstMatMap<T>(xn, ckk, hw);
    } else {
      for (std::size_t r0 = 0; r0 < g.out_h; r0 += tile) {
        const std::size_t r1 = std::min(g.out_h, r0 + tile), cols = (r1 - r0) * g.out_w;
        im2col(xn, g, r0, r1, col.data());
        om.middleCols(r0 * g.out_w, cols).noalias() = wm * ConstMatMap<T>(col.data(), ckk, cols);
      }
    }
    if (b.defined()) om.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(b.value().data(), out_c);
  }

  return Var<T>::from_op(std::move(out), {x, w, b.defined() ? b : Var<T>::constant(Tensor<T>())},
                         [g, n_batch, out_c, ckk, hw, in_per, tile](Node<T>& self) {
                           auto& px = *self.parents[0];
                           auto& pw = *self.parents[1];
                           auto& pb = *self.parents[2];
                           Buffer<T> col(is_pointwise(g) ? 0 : ckk * tile * g.out_w);
                           ConstMatMap<T> wm(pw.value.data(), out_c, ckk);
                           for (std::size_t n = 0; n < n_batch; ++n) {
                             ConstMatMap<T> dom(self.grad.data() + n * out_c * hw, out_c, hw);
                             const T* xn = px.value.data() + n * in_per;
                             if (pb.requires_grad)
                               Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(pb.grad_buffer().data(), out_c) +=
                                   dom.rowwise().sum();
                             if (is_pointwise(g)) {
                               if (pw.requires_grad)
                                 MatMap<T>(pw.grad_buffer().data(), out_c, ckk).noalias() +=
                                     dom * ConstMatMap<T>(xn, ckk, hw).transpose();
                               if (px.requires_grad)
                                 MatMap<T>(px.grad_buffer().data() + n * in_per, ckk, hw).noalias() +=
                                     wm.transpose() * dom;
                               continue;
                             }
                             for (std::size_t r0 = 0; r0 < g.out_h; r0 += tile) {
                               const std::size_t r1 = std::min(g.out_h, r0 + tile), cols = (r1 - r0) * g.out_w;
                               auto dchunk = dom.middleCols(r0 * g.out_w, cols);
                               MatMap<T> cm(col.data(), ckk, cols);
                               if (pw.requires_grad) {
                                 im2col(xn, g, r0, r1, col.data());
                                 MatMap<T>(pw.grad_buffer().data(), out_c, ckk).noalias() += dchunk * cm.transpose();
                               }
                               if (px.requires_grad) {
                                 cm.noalias() = wm.transpose() * dchunk;
                                 col2im(col.data(), g, r0, r1, px.grad_buffer().data() + n * in_per);
                               }
                             }
                           }
                         });
}

/// Transposed convolution. `w` is [C_in, O, k, k]; output extent is
/// (in - 1) * stride - 2 * pad + k + output_pad.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride, std::size_t pad,
                        std::size_t output_pad) {
  using namespace detail;
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  require_rank4(xs, "conv_transpose2d");
  require_rank4(ws, "conv_transpose2d weight");
  if (ws[0] != xs[1] || ws[2] != ws[3])
    throw ShapeError("conv_transpose2d: weight " + shape_str(ws) + " incompatible with input " + shape_str(xs));
  if (stride == 0 || output_pad >= stride) throw ShapeError("conv_transpose2d: need output_pad < stride");
  const std::size_t n_batch = xs[0], in_c = xs[1], out_c = ws[1], k = ws[2];
  if ((xs[2] - 1) * stride + k + output_pad < 2 * pad + 1 || (xs[3] - 1) * stride + k + output_pad < 2 * pad + 1)
    throw ShapeError("conv_transpose2d: padding exceeds output extent");
  const std::size_t out_h = (xs[2] - 1) * stride + k + output_pad - 2 * pad;
  const std::size_t out_w = (xs[3] - 1) * stride + k + output_pad - 2 * pad;
  // Geometry of the forward conv whose adjoint this is; its output rows are our input rows.
  const ConvGeom g{out_c, out_h, out_w, k, stride, pad, xs[2], xs[3]};
  const std::size_t okk = out_c * k * k, hw = xs[2] * xs[3], out_per = out_c * out_h * out_w;
  const std::size_t tile = rows_per_tile(g);

  Tensor<T> out({n_batch, out_c, out_h, out_w});
  Buffer<T> col(okk * tile * g.out_w);
  ConstMatMap<T> wm(w.value().data(), in_c, okk);
  for (std::size_t n = 0; n < n_batch; ++n) {
    ConstMatMap<T> xm(x.value().data() + n * in_c * hw, in_c, hw);
    T* on = out.data() + n * out_per;
    for (std::size_t r0 = 0; r0 < g.out_h; r0 += tile) {
      const std::size_t r1 = std::min(g.out_h, r0 + tile), cols = (r1 - r0) * g.out_w;
      MatMap<T>(col.data(), okk, cols).noalias() = wm.transpose() * xm.middleCols(r0 * g.out_w, cols);
      col2im(col.data(), g, r0, r1, on);
    }
    if (b.defined())
      for (std::size_t c = 0; c < out_c; ++c)
        for (std::size_t i = 0; i < out_h * out_w; ++i) on[c * out_h * out_w + i] += b.value()[c];
  }

  return Var<T>::from_op(std::move(out), {x, w, b.defined() ? b : Var<T>::constant(Tensor<T>())},
                         [g, n_batch, in_c, out_c, okk, hw, out_per, tile](Node<T>& self) {
                           auto& px = *self.parents[0];
                           auto& pw = *self.parents[1];
                           auto& pb = *self.parents[2];
                           Buffer<T> col(okk * tile * g.out_w);
                           ConstMatMap<T> wm(pw.value.data(), in_c, okk);
                           const std::size_t plane = g.height * g.width;
                           for (std::size_t n = 0; n < n_batch; ++n) {
                             const T* don = self.grad.data() + n * out_per;
                             for (std::size_t r0 = 0; r0 < g.out_h; r0 += tile) {
                               const std::size_t r1 = std::min(g.out_h, r0 + tile), cols = (r1 - r0) * g.out_w;
                               im2col(don, g, r0, r1, col.data());
                               ConstMatMap<T> dcol(col.data(), okk, cols);
                               if (px.requires_grad)
                                 MatMap<T>(px.grad_buffer().data() + n * in_c * hw, in_c, hw)
                                     .middleCols(r0 * g.out_w, cols)
                                     .noalias() += wm * dcol;
                               if (pw.requires_grad) {
                                 ConstMatMap<T> xm(px.value.data() + n * in_c * hw, in_c, hw);
                                 MatMap<T>(pw.grad_buffer().data(), in_c, okk).noalias() +=
                                     xm.middleCols(r0 * g.out_w, cols) * dcol.transpose();
                               }
                             }
                             if (pb.requires_grad) {
                               auto& gb = pb.grad_buffer();
                               for (std::size_t c = 0; c < out_c; ++c) {
                                 T s{0};
                                 for (std::size_t i = 0; i < plane; ++i) s += don[c * plane + i];
                                 gb[c] += s;
                               }
                             }
                           }
                         });
}

enum class PadMode { reflect, zero };

/// Mirror index without repeating the edge sample. Extents of 1 clamp to 0.
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - m);
}

/// Spatial padding by `p` on every side.
template <typename T>
Var<T> pad2d(const Var<T>& x, std::size_t p, PadMode mode) {
  detail::require_rank4(x.shape(), "pad2d");
  if (p == 0) return x;
  const Shape& s = x.shape();
  const std::size_t nc = s[0] * s[1], h = s[2], w = s[3], oh = h + 2 * p, ow = w + 2 * p;
  Tensor<T> out({s[0], s[1], oh, ow});
  // src[i] is the flat source offset within a plane, or npos for zero padding.
  constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  auto src = std::make_shared<std::vector<std::size_t>>(oh * ow);
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      const auto si = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(p);
      const auto sj = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(p);
      const bool inside = si >= 0 && sj >= 0 && si < static_cast<std::ptrdiff_t>(h) && sj < static_cast<std::ptrdiff_t>(w);
      if (mode == PadMode::zero)
        (*src)[i * ow + j] = inside ? static_cast<std::size_t>(si) * w + static_cast<std::size_t>(sj) : npos;
      else
        (*src)[i * ow + j] = reflect_index(si, h) * w + reflect_index(sj, w);
    }
  }
  for (std::size_t q = 0; q < nc; ++q) {
    const T* xp = x.value().data() + q * h * w;
    T* op = out.data() + q * oh * ow;
    for (std::size_t i = 0; i < oh * ow; ++i) op[i] = (*src)[i] == npos ? T{0} : xp[(*src)[i]];
  }
  return Var<T>::from_op(std::move(out), {x}, [src, nc, h, w, oh, ow](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t q = 0; q < nc; ++q) {
      T* gp = g.data() + q * h * w;
      const T* dp = self.grad.data() + q * oh * ow;
      for (std::size_t i = 0; i < oh * ow; ++i)
        if ((*src)[i] != npos) gp[(*src)[i]] += dp[i];
    }
  });
}

/// Instance normalization with per-channel affine scale and shift.
template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
  detail::require_rank4(x.shape(), "instance_norm");
  const Shape& s = x.shape();
  const std::size_t n_batch = s[0], ch = s[1], plane = s[2] * s[3];
  if (gamma.value().size() != ch || beta.value().size() != ch)
    throw ShapeError("instance_norm: affine parameters do not match " + std::to_string(ch) + " channels");
  auto xhat = std::make_shared<Tensor<T>>(s);
  auto inv_std = std::make_shared<std::vector<T>>(n_batch * ch);
  Tensor<T> out(s);
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t off = (n * ch + c) * plane;
      const T* xp = x.value().data() + off;
      double mean = 0;
      for (std::size_t i = 0; i < plane; ++i) mean += xp[i];
      mean /= static_cast<double>(plane);
      double var = 0;
      for (std::size_t i = 0; i < plane; ++i) var += (xp[i] - mean) * (xp[i] - mean);
      var /= static_cast<double>(plane);
      const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      (*inv_std)[n * ch + c] = is;
      T* hp = xhat->data() + off;
      T* op = out.data() + off;
      const T gm = gamma.value()[c], bt = beta.value()[c];
      for (std::size_t i = 0; i < plane; ++i) {
        hp[i] = static_cast<T>((xp[i] - mean) * is);
        op[i] = gm * hp[i] + bt;
      }
    }
  }
  return Var<T>::from_op(std::move(out), {x, gamma, beta}, [xhat, inv_std, n_batch, ch, plane](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& pb = *self.parents[2];
    const T m = static_cast<T>(plane);
    for (std::size_t n = 0; n < n_batch; ++n) {
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t off = (n * ch + c) * plane;
        const T* dy = self.grad.data() + off;
        const T* hp = xhat->data() + off;
        T sum_dy{0}, sum_dy_h{0};
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += dy[i];
          sum_dy_h += dy[i] * hp[i];
        }
        if (pg.requires_grad) pg.grad_buffer()[c] += sum_dy_h;
        if (pb.requires_grad) pb.grad_buffer()[c] += sum_dy;
        if (px.requires_grad) {
          const T gm = pg.value[c];
          const T k = gm * (*inv_std)[n * ch + c] / m;
          T* dx = px.grad_buffer().data() + off;
          for (std::size_t i = 0; i < plane; ++i) dx[i] += k * (m * dy[i] - sum_dy - hp[i] * sum_dy_h);
        }
      }
    }
  });
}

namespace detail {

// Elementwise map whose derivative is expressed through input and output.
template <typename T, typename Fwd, typename Deriv>
Var<T> elementwise(const Var<T>& x, Fwd fwd, Deriv deriv) {
  Tensor<T> out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return Var<T>::from_op(std::move(out), {x}, [deriv](Node<T>& self) {
    auto& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
  });
}

}  // namespace detail

template <typename T>
Var<T> relu(const Var<T>& x) {
  return detail::elementwise(
      x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return detail::elementwise(
      x, [slope](T v) { return v > T{0} ? v : slope * v; }, [slope](T v, T) { return v > T{0} ? T{1} : slope; });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return detail::elementwise(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  return detail::elementwise(
      x, [factor](T v) { return factor * v; }, [factor](T, T) { return factor; });
}

/// Elementwise sum of equally shaped tensors.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return Var<T>::from_op(std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

/// Joins two NCHW tensors along the channel axis.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  detail::require_rank4(sa, "concat_channels");
  detail::require_rank4(sb, "concat_channels");
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
    throw ShapeError("concat_channels: " + shape_str(sa) + " vs " + shape_str(sb));
  const std::size_t n_batch = sa[0], pa = sa[1] * sa[2] * sa[3], pb = sb[1] * sb[2] * sb[3];
  Tensor<T> out({n_batch, sa[1] + sb[1], sa[2], sa[3]});
  for (std::size_t n = 0; n < n_batch; ++n) {
    std::copy_n(a.value().data() + n * pa, pa, out.data() + n * (pa + pb));
    std::copy_n(b.value().data() + n * pb, pb, out.data() + n * (pa + pb) + pa);
  }
  return Var<T>::from_op(std::move(out), {a, b}, [n_batch, pa, pb](Node<T>& self) {
    for (std::size_t n = 0; n < n_batch; ++n) {
      const T* d = self.grad.data() + n * (pa + pb);
      if (self.parents[0]->requires_grad) {
        T* g = self.parents[0]->grad_buffer().data() + n * pa;
        for (std::size_t i = 0; i < pa; ++i) g[i] += d[i];
      }
      if (self.parents[1]->requires_grad) {
        T* g = self.parents[1]->grad_buffer().data() + n * pb;
        for (std::size_t i = 0; i < pb; ++i) g[i] += d[pa + i];
      }
    }
  });
}

/// Max pooling with implicit -inf padding.
template <typename T>
Var<T> max_pool2d(const Var<T>& x, std::size_t k, std::size_t stride, std::size_t pad) {
  detail::require_rank4(x.shape(), "max_pool2d");
  const Shape& s = x.shape();
  const std::size_t nc = s[0] * s[1], h = s[2], w = s[3];
  const std::size_t oh = detail::conv_out(h, k, stride, pad, "max_pool2d", "height");
  const std::size_t ow = detail::conv_out(w, k, stride, pad, "max_pool2d", "width");
  Tensor<T> out({s[0], s[1], oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t q = 0; q < nc; ++q) {
    const T* xp = x.value().data() + q * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t ki = 0; ki < k; ++ki) {
          const auto ih = static_cast<std::ptrdiff_t>(i * stride + ki) - static_cast<std::ptrdiff_t>(pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kj = 0; kj < k; ++kj) {
            const auto iw = static_cast<std::ptrdiff_t>(j * stride + kj) - static_cast<std::ptrdiff_t>(pad);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t idx = static_cast<std::size_t>(ih) * w + static_cast<std::size_t>(iw);
            if (xp[idx] > best) {
              best = xp[idx];
              best_idx = idx;
            }
          }
        }
        out[(q * oh + i) * ow + j] = best;
        (*argmax)[(q * oh + i) * ow + j] = q * h * w + best_idx;
      }
    }
  }
  return Var<T>::from_op(std::move(out), {x}, [argmax](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < argmax->size(); ++i) g[(*argmax)[i]] += self.grad[i];
  });
}

/// Nearest-neighbour upsampling by an integer factor.
template <typename T>
Var<T> upsample_nearest(const Var<T>& x, std::size_t factor) {
  detail::require_rank4(x.shape(), "upsample_nearest");
  const Shape& s = x.shape();
  const std::size_t nc = s[0] * s[1], h = s[2], w = s[3], oh = h * factor, ow = w * factor;
  Tensor<T> out({s[0], s[1], oh, ow});
  for (std::size_t q = 0; q < nc; ++q)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j)
        out[(q * oh + i) * ow + j] = x.value()[(q * h + i / factor) * w + j / factor];
  return Var<T>::from_op(std::move(out), {x}, [nc, h, w, oh, ow, factor](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t q = 0; q < nc; ++q)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) g[(q * h + i / factor) * w + j / factor] += self.grad[(q * oh + i) * ow + j];
  });
}

/// Spatial mean: [N,C,H,W] -> [N,C,1,1].
template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  detail::require_rank4(x.shape(), "global_avg_pool");
  const Shape& s = x.shape();
  const std::size_t nc = s[0] * s[1], plane = s[2] * s[3];
  Tensor<T> out({s[0], s[1], 1, 1});
  for (std::size_t q = 0; q < nc; ++q) {
    double acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += x.value()[q * plane + i];
    out[q] = static_cast<T>(acc / static_cast<double>(plane));
  }
  return Var<T>::from_op(std::move(out), {x}, [nc, plane](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    const T inv = T{1} / static_cast<T>(plane);
    for (std::size_t q = 0; q < nc; ++q)
      for (std::size_t i = 0; i < plane; ++i) g[q * plane + i] += self.grad[q] * inv;
  });
}

// ---- scalar reductions (results have shape [1]) ----

/// Sum of scalars.
template <typename T>
Var<T> add_scalars(std::span<const Var<T>> terms) {
  T total{0};
  for (const auto& t : terms) total += t.item();
  std::vector<Var<T>> inputs(terms.begin(), terms.end());
  return Var<T>::from_op(Tensor<T>({1}, total), std::move(inputs), [](Node<T>& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->grad_buffer()[0] += self.grad[0];
  });
}

/// mean(|a - b|).
template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mean_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t m = a.value().size();
  if (m == 0) throw ShapeError("mean_abs_diff: empty tensors");
  double acc = 0;
  for (std::size_t i = 0; i < m; ++i) acc += std::abs(static_cast<double>(a.value()[i]) - b.value()[i]);
  return Var<T>::from_op(Tensor<T>({1}, static_cast<T>(acc / static_cast<double>(m))), {a, b}, [m](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const T k = self.grad[0] / static_cast<T>(m);
    for (std::size_t i = 0; i < m; ++i) {
      const T d = pa.value[i] - pb.value[i];
      const T sgn = d > T{0} ? T{1} : (d < T{0} ? T{-1} : T{0});
      if (pa.requires_grad) pa.grad_buffer()[i] += k * sgn;
      if (pb.requires_grad) pb.grad_buffer()[i] -= k * sgn;
    }
  });
}

/// mean((x - target)^2) against a constant target.
template <typename T>
Var<T> mean_sq_to(const Var<T>& x, T target) {
  const std::size_t m = x.value().size();
  if (m == 0) throw ShapeError("mean_sq_to: empty tensor");
  double acc = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double d = static_cast<double>(x.value()[i]) - target;
    acc += d * d;
  }
  return Var<T>::from_op(Tensor<T>({1}, static_cast<T>(acc / static_cast<double>(m))), {x},
                         [m, target](Node<T>& self) {
                           auto& p = *self.parents[0];
                           auto& g = p.grad_buffer();
                           const T k = T{2} * self.grad[0] / static_cast<T>(m);
                           for (std::size_t i = 0; i < m; ++i) g[i] += k * (p.value[i] - target);
                         });
}

/// Mean binary cross-entropy of logits against a constant target in [0, 1].
template <typename T>
Var<T> bce_with_logits_to(const Var<T>& x, T target) {
  const std::size_t m = x.value().size();
  if (m == 0) throw ShapeError("bce_with_logits_to: empty tensor");
  double acc = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double z = x.value()[i];
    // max(z,0) - z*t + log(1 + exp(-|z|))
    acc += std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
  }
  return Var<T>::from_op(Tensor<T>({1}, static_cast<T>(acc / static_cast<double>(m))), {x},
                         [m, target](Node<T>& self) {
                           auto& p = *self.parents[0];
                           auto& g = p.grad_buffer();
                           const T k = self.grad[0] / static_cast<T>(m);
                           for (std::size_t i = 0; i < m; ++i) {
                             const T sig = T{1} / (T{1} + std::exp(-p.value[i]));
                             g[i] += k * (sig - target);
                           }
                         });
}

/// Mean softmax cross-entropy of logits [N, K, 1, 1] against class labels.
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, std::span<const int> labels) {
  const Shape& s = logits.shape();
  if (s.size() != 4 || s[2] != 1 || s[3] != 1 || s[0] != labels.size())
    throw ShapeError("softmax_cross_entropy: logits " + shape_str(s) + " vs " + std::to_string(labels.size()) +
                     " labels");
  const std::size_t n_batch = s[0], k = s[1];
  auto probs = std::make_shared<std::vector<T>>(n_batch * k);
  std::vector<int> lab(labels.begin(), labels.end());
  double loss = 0;
  for (std::size_t n = 0; n < n_batch; ++n) {
    if (lab[n] < 0 || static_cast<std::size_t>(lab[n]) >= k)
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(lab[n]) + " outside [0," + std::to_string(k) +
                       ")");
    const T* z = logits.value().data() + n * k;
    const T mx = *std::max_element(z, z + k);
    double denom = 0;
    for (std::size_t c = 0; c < k; ++c) denom += std::exp(static_cast<double>(z[c] - mx));
    for (std::size_t c = 0; c < k; ++c) (*probs)[n * k + c] = static_cast<T>(std::exp(static_cast<double>(z[c] - mx)) / denom);
    loss += std::log(denom) - (z[lab[n]] - mx);
  }
  return Var<T>::from_op(Tensor<T>({1}, static_cast<T>(loss / static_cast<double>(n_batch))), {logits},
                         [probs, lab, n_batch, k](Node<T>& self) {
                           auto& g = self.parents[0]->grad_buffer();
                           const T f = self.grad[0] / static_cast<T>(n_batch);
                           for (std::size_t n = 0; n < n_batch; ++n)
                             for (std::size_t c = 0; c < k; ++c)
                               g[n * k + c] += f * ((*probs)[n * k + c] - (static_cast<int>(c) == lab[n] ? T{1} : T{0}));
                         });
}

}  // namespace ganilla::ops
