#include "erfseg/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "erfseg/error.hpp"
#include "erfseg/parallel.hpp"

namespace erfseg {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

using Index = std::ptrdiff_t;

template <typename T>
void require_same_tape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (&a.tape() != &b.tape()) throw std::logic_error(std::string(op) + ": operands live on different tapes");
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  require_same_tape(a, b, op);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

struct ConvGeom {
  std::size_t batch, cin, h, w, cout, ho, wo, groups, cin_g, cout_g, k_g;
  std::size_t cols() const { return batch * ho * wo; }
};

// Writes the receptive-field patches of one sample / one group into columns
// [b*Ho*Wo, (b+1)*Ho*Wo) of `col` (row stride = ld).
template <typename T>
void im2col(const T* x, const ConvGeom& g, const ConvSpec& s, T* col, std::size_t ld, std::size_t b) {
  const std::size_t plane_out = g.ho * g.wo;
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    const T* xc = x + c * g.h * g.w;
    for (std::size_t kh = 0; kh < s.kernel_h; ++kh) {
      for (std::size_t kw = 0; kw < s.kernel_w; ++kw) {
        const std::size_t row = (c * s.kernel_h + kh) * s.kernel_w + kw;
        T* dst = col + row * ld + b * plane_out;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const Index ih = static_cast<Index>(oh * s.stride + kh * s.dilation) - static_cast<Index>(s.pad_h);
          T* drow = dst + oh * g.wo;
          if (ih < 0 || ih >= static_cast<Index>(g.h)) {
            std::fill(drow, drow + g.wo, T{0});
            continue;
          }
          const T* xrow = xc + static_cast<std::size_t>(ih) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const Index iw = static_cast<Index>(ow * s.stride + kw * s.dilation) - static_cast<Index>(s.pad_w);
            drow[ow] = (iw < 0 || iw >= static_cast<Index>(g.w)) ? T{0} : xrow[iw];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeom& g, const ConvSpec& s, std::size_t ld, std::size_t b, T* dx) {
  const std::size_t plane_out = g.ho * g.wo;
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    T* dxc = dx + c * g.h * g.w;
    for (std::size_t kh = 0; kh < s.kernel_h; ++kh) {
      for (std::size_t kw = 0; kw < s.kernel_w; ++kw) {
        const std::size_t row = (c * s.kernel_h + kh) * s.kernel_w + kw;
        const T* src = col + row * ld + b * plane_out;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const Index ih = static_cast<Index>(oh * s.stride + kh * s.dilation) - static_cast<Index>(s.pad_h);
          if (ih < 0 || ih >= static_cast<Index>(g.h)) continue;
          T* dxrow = dxc + static_cast<std::size_t>(ih) * g.w;
          const T* srow = src + oh * g.wo;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const Index iw = static_cast<Index>(ow * s.stride + kw * s.dilation) - static_cast<Index>(s.pad_w);
            if (iw >= 0 && iw < static_cast<Index>(g.w)) dxrow[iw] += srow[ow];
          }
        }
      }
    }
  }
}

template <typename T>
void fill_columns(const Tensor<T>& x, const ConvGeom& g, const ConvSpec& s, std::size_t group, RowMat<T>& col) {
  const std::size_t sample_stride = g.cin * g.h * g.w;
  const std::size_t group_offset = group * g.cin_g * g.h * g.w;
  parallel_for(g.batch, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      im2col(x.data().data() + b * sample_stride + group_offset, g, s, col.data(), g.cols(), b);
    }
  });
}

}  // namespace

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, std::optional<std::type_identity_t<Var<T>>> bias,
              const ConvSpec& spec) {
  require_same_tape(input, weight, "conv2d");
  if (bias) require_same_tape(input, *bias, "conv2d");
  spec.validate();
  const Tensor<T>& x = input.value();
  const Tensor<T>& w = weight.value();
  const Dims4 d = x.dims4();
  if (d.c != spec.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(d.c) + " channels, " + spec.describe());
  }
  const Shape wshape{spec.out_channels, spec.in_channels / spec.groups, spec.kernel_h, spec.kernel_w};
  if (w.shape() != wshape) {
    throw ShapeError("conv2d: weight shape " + shape_str(w.shape()) + " expected " + shape_str(wshape));
  }
  if (bias && bias->shape() != Shape{spec.out_channels}) {
    throw ShapeError("conv2d: bias shape " + shape_str(bias->shape()) + " expected [" +
                     std::to_string(spec.out_channels) + "]");
  }
  spec.validate_input(d.h, d.w);

  ConvGeom g{d.n,
             d.c,
             d.h,
             d.w,
             spec.out_channels,
             spec.out_h(d.h),
             spec.out_w(d.w),
             spec.groups,
             spec.in_channels / spec.groups,
             spec.out_channels / spec.groups,
             0};
  g.k_g = g.cin_g * spec.kernel_h * spec.kernel_w;
  const std::size_t plane_out = g.ho * g.wo;

  Tensor<T> out(Shape{g.batch, g.cout, g.ho, g.wo});
  RowMat<T> col(g.k_g, g.cols());
  RowMat<T> res(g.cout_g, g.cols());
  const T* bptr = bias ? bias->value().data().data() : nullptr;
  for (std::size_t grp = 0; grp < g.groups; ++grp) {
    fill_columns(x, g, spec, grp, col);
    ConstMatMap<T> wg(w.data().data() + grp * g.cout_g * g.k_g, g.cout_g, g.k_g);
    res.noalias() = wg * col;
    for (std::size_t b = 0; b < g.batch; ++b) {
      for (std::size_t co = 0; co < g.cout_g; ++co) {
        const std::size_t oc = grp * g.cout_g + co;
        const T bv = bptr ? bptr[oc] : T{0};
        T* dst = out.data().data() + (b * g.cout + oc) * plane_out;
        const T* src = res.data() + co * g.cols() + b * plane_out;
        for (std::size_t p = 0; p < plane_out; ++p) dst[p] = src[p] + bv;
      }
    }
  }

  std::vector<std::size_t> inputs{input.id(), weight.id()};
  if (bias) inputs.push_back(bias->id());
  return input.tape().record(
      OpKind::Conv2d, std::move(inputs), std::move(out), [g, spec](Tape<T>& tape, const typename Tape<T>::Node& n) {
        const Tensor<T>& dy = tape.grad(n.output);
        const Tensor<T>& xv = tape.value(n.inputs[0]);
        const Tensor<T>& wv = tape.value(n.inputs[1]);
        const bool need_x = tape.requires_grad(n.inputs[0]);
        const bool need_w = tape.requires_grad(n.inputs[1]);
        const bool need_b = n.inputs.size() > 2 && tape.requires_grad(n.inputs[2]);
        const std::size_t plane_out = g.ho * g.wo;

        if (need_b) {
          auto db = tape.grad(n.inputs[2]).data();
          for (std::size_t b = 0; b < g.batch; ++b) {
            for (std::size_t oc = 0; oc < g.cout; ++oc) {
              const T* src = dy.data().data() + (b * g.cout + oc) * plane_out;
              T acc{0};
              for (std::size_t p = 0; p < plane_out; ++p) acc += src[p];
              db[oc] += acc;
            }
          }
        }
        if (!need_x && !need_w) return;

        RowMat<T> dym(g.cout_g, g.cols());
        RowMat<T> col;
        RowMat<T> dcol;
        if (need_w) col.resize(g.k_g, g.cols());
        const bool transposed_is_same = spec.stride == 1 && spec.kernel_h % 2 == 1 && spec.kernel_w % 2 == 1 &&
                                        2 * spec.pad_h == spec.dilation * (spec.kernel_h - 1) &&
                                        2 * spec.pad_w == spec.dilation * (spec.kernel_w - 1);
        ConvSpec st = spec;
        ConvGeom gt = g;
        if (transposed_is_same) {
          std::swap(st.in_channels, st.out_channels);
          gt.cin = g.cout;
          gt.cout = g.cin;
          gt.cin_g = g.cout_g;
          gt.cout_g = g.cin_g;
          gt.k_g = g.cout_g * spec.kernel_h * spec.kernel_w;
        }
        if (need_x) dcol.resize(transposed_is_same ? gt.k_g : g.k_g, g.cols());
        T* dx = need_x ? tape.grad(n.inputs[0]).data().data() : nullptr;
        T* dw = need_w ? tape.grad(n.inputs[1]).data().data() : nullptr;
        const std::size_t sample_stride = g.cin * g.h * g.w;

        for (std::size_t grp = 0; grp < g.groups; ++grp) {
          for (std::size_t b = 0; b < g.batch; ++b) {
            for (std::size_t co = 0; co < g.cout_g; ++co) {
              const T* src = dy.data().data() + (b * g.cout + grp * g.cout_g + co) * plane_out;
              std::copy(src, src + plane_out, dym.data() + co * g.cols() + b * plane_out);
            }
          }
          if (need_w) {
            fill_columns(xv, g, spec, grp, col);
            MatMap<T> dwg(dw + grp * g.cout_g * g.k_g, g.cout_g, g.k_g);
            dwg.noalias() += dym * col.transpose();
          }
          if (need_x && transposed_is_same) {
            // Stride-1 same-padded conv: dX is the same-padded correlation of
            // dY with the spatially flipped, channel-transposed kernel, which
            // keeps the GEMM in the fast (small m, large n) orientation.
            const std::size_t kk = spec.kernel_h * spec.kernel_w;
            RowMat<T> wt(g.cin_g, g.cout_g * kk);
            const T* wsrc = wv.data().data() + grp * g.cout_g * g.k_g;
            for (std::size_t co = 0; co < g.cout_g; ++co)
              for (std::size_t ci = 0; ci < g.cin_g; ++ci)
                for (std::size_t k = 0; k < kk; ++k) wt(ci, co * kk + (kk - 1 - k)) = wsrc[(co * g.cin_g + ci) * kk + k];
            fill_columns(dy, gt, st, grp, dcol);
            RowMat<T> res = wt * dcol;
            const std::size_t plane_in = g.h * g.w;
            for (std::size_t b = 0; b < g.batch; ++b) {
              for (std::size_t ci = 0; ci < g.cin_g; ++ci) {
                T* dst = dx + b * sample_stride + (grp * g.cin_g + ci) * plane_in;
                const T* src = res.data() + ci * g.cols() + b * plane_in;
                for (std::size_t q = 0; q < plane_in; ++q) dst[q] += src[q];
              }
            }
          } else if (need_x) {
            ConstMatMap<T> wg(wv.data().data() + grp * g.cout_g * g.k_g, g.cout_g, g.k_g);
            dcol.noalias() = wg.transpose() * dym;
            const std::size_t group_offset = grp * g.cin_g * g.h * g.w;
            parallel_for(g.batch, [&](std::size_t b0, std::size_t b1) {
              for (std::size_t b = b0; b < b1; ++b) {
                col2im(dcol.data(), g, spec, g.cols(), b, dx + b * sample_stride + group_offset);
              }
            });
          }
        }
      });
}

template <typename T>
Var<T> maxpool2d(Var<T> input) {
  const Tensor<T>& x = input.value();
  const Dims4 d = x.dims4();
  if (d.h % 2 || d.w % 2) {
    throw ShapeError("maxpool2d: extents must be even, got " + shape_str(x.shape()));
  }
  const std::size_t ho = d.h / 2, wo = d.w / 2;
  Tensor<T> out(Shape{d.n, d.c, ho, wo});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  parallel_for(d.n * d.c, [&](std::size_t p0, std::size_t p1) {
    for (std::size_t p = p0; p < p1; ++p) {
      const T* src = x.data().data() + p * d.h * d.w;
      for (std::size_t oh = 0; oh < ho; ++oh) {
        for (std::size_t ow = 0; ow < wo; ++ow) {
          std::size_t best = (2 * oh) * d.w + 2 * ow;
          for (std::size_t dh = 0; dh < 2; ++dh) {
            for (std::size_t dw = 0; dw < 2; ++dw) {
              const std::size_t idx = (2 * oh + dh) * d.w + 2 * ow + dw;
              if (src[idx] > src[best]) best = idx;
            }
          }
          const std::size_t o = p * ho * wo + oh * wo + ow;
          out[o] = src[best];
          (*argmax)[o] = p * d.h * d.w + best;
        }
      }
    }
  });
  return input.tape().record(OpKind::MaxPool2d, {input.id()}, std::move(out),
                             [argmax](Tape<T>& tape, const typename Tape<T>::Node& n) {
                               const auto dy = tape.grad(n.output).data();
                               auto dx = tape.grad(n.inputs[0]).data();
                               for (std::size_t o = 0; o < dy.size(); ++o) dx[(*argmax)[o]] += dy[o];
                             });
}

namespace {
template <typename T>
struct AxisTaps {
  std::vector<std::size_t> lo, hi;
  std::vector<T> frac;
};

template <typename T>
AxisTaps<T> bilinear_taps(std::size_t in, std::size_t scale) {
  AxisTaps<T> t;
  const std::size_t out = in * scale;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  for (std::size_t o = 0; o < out; ++o) {
    T src = (static_cast<T>(o) + T(0.5)) / static_cast<T>(scale) - T(0.5);
    src = std::clamp(src, T{0}, static_cast<T>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    t.lo[o] = lo;
    t.hi[o] = std::min(lo + 1, in - 1);
    t.frac[o] = src - static_cast<T>(lo);
  }
  return t;
}
}  // namespace

template <typename T>
Var<T> bilinear_upsample(Var<T> input, std::size_t scale) {
  if (scale < 2) throw ShapeError("bilinear_upsample: scale must be >= 2, got " + std::to_string(scale));
  const Tensor<T>& x = input.value();
  const Dims4 d = x.dims4();
  const std::size_t ho = d.h * scale, wo = d.w * scale;
  auto th = std::make_shared<AxisTaps<T>>(bilinear_taps<T>(d.h, scale));
  auto tw = std::make_shared<AxisTaps<T>>(bilinear_taps<T>(d.w, scale));
  Tensor<T> out(Shape{d.n, d.c, ho, wo});
  parallel_for(d.n * d.c, [&](std::size_t p0, std::size_t p1) {
    for (std::size_t p = p0; p < p1; ++p) {
      const T* src = x.data().data() + p * d.h * d.w;
      T* dst = out.data().data() + p * ho * wo;
      for (std::size_t oh = 0; oh < ho; ++oh) {
        const T fh = th->frac[oh];
        const T* r0 = src + th->lo[oh] * d.w;
        const T* r1 = src + th->hi[oh] * d.w;
        for (std::size_t ow = 0; ow < wo; ++ow) {
          const T fw = tw->frac[ow];
          const std::size_t c0 = tw->lo[ow], c1 = tw->hi[ow];
          dst[oh * wo + ow] = (T{1} - fh) * ((T{1} - fw) * r0[c0] + fw * r0[c1]) +
                              fh * ((T{1} - fw) * r1[c0] + fw * r1[c1]);
        }
      }
    }
  });
  return input.tape().record(
      OpKind::Upsample, {input.id()}, std::move(out), [d, ho, wo, th, tw](Tape<T>& tape, const typename Tape<T>::Node& n) {
        const Tensor<T>& dy = tape.grad(n.output);
        Tensor<T>& dx = tape.grad(n.inputs[0]);
        parallel_for(d.n * d.c, [&](std::size_t p0, std::size_t p1) {
          for (std::size_t p = p0; p < p1; ++p) {
            const T* g = dy.data().data() + p * ho * wo;
            T* dst = dx.data().data() + p * d.h * d.w;
            for (std::size_t oh = 0; oh < ho; ++oh) {
              const T fh = th->frac[oh];
              T* r0 = dst + th->lo[oh] * d.w;
              T* r1 = dst + th->hi[oh] * d.w;
              for (std::size_t ow = 0; ow < wo; ++ow) {
                const T fw = tw->frac[ow];
                const T v = g[oh * wo + ow];
                const std::size_t c0 = tw->lo[ow], c1 = tw->hi[ow];
                r0[c0] += (T{1} - fh) * (T{1} - fw) * v;
                r0[c1] += (T{1} - fh) * fw * v;
                r1[c0] += fh * (T{1} - fw) * v;
                r1[c1] += fh * fw * v;
              }
            }
          }
        });
      });
}

template <typename T>
Var<T> instance_norm(Var<T> input, Var<T> gamma, Var<T> beta, T eps) {
  require_same_tape(input, gamma, "instance_norm");
  require_same_tape(input, beta, "instance_norm");
  const Tensor<T>& x = input.value();
  const Dims4 d = x.dims4();
  if (d.plane() < 2) {
    throw ShapeError("instance_norm: degenerate statistics on a " + std::to_string(d.h) + "x" + std::to_string(d.w) +
                     " plane (needs H*W >= 2)");
  }
  if (gamma.shape() != Shape{d.c} || beta.shape() != Shape{d.c}) {
    throw ShapeError("instance_norm: gamma/beta must have shape [" + std::to_string(d.c) + "]");
  }
  struct Ctx {
    Tensor<T> xhat;
    std::vector<T> invstd;
  };
  auto ctx = std::make_shared<Ctx>();
  ctx->xhat = Tensor<T>(x.shape());
  ctx->invstd.resize(d.n * d.c);
  Tensor<T> out(x.shape());
  const auto gv = gamma.value().data();
  const auto bv = beta.value().data();
  const std::size_t np = d.plane();
  parallel_for(d.n * d.c, [&](std::size_t p0, std::size_t p1) {
    for (std::size_t p = p0; p < p1; ++p) {
      const T* src = x.data().data() + p * np;
      T mean{0};
      for (std::size_t i = 0; i < np; ++i) mean += src[i];
      mean /= static_cast<T>(np);
      T var{0};
      for (std::size_t i = 0; i < np; ++i) var += (src[i] - mean) * (src[i] - mean);
      var /= static_cast<T>(np);
      const T inv = T{1} / std::sqrt(var + eps);
      ctx->invstd[p] = inv;
      const std::size_t c = p % d.c;
      T* xh = ctx->xhat.data().data() + p * np;
      T* dst = out.data().data() + p * np;
      for (std::size_t i = 0; i < np; ++i) {
        xh[i] = (src[i] - mean) * inv;
        dst[i] = gv[c] * xh[i] + bv[c];
      }
    }
  });
  return input.tape().record(
      OpKind::InstanceNorm, {input.id(), gamma.id(), beta.id()}, std::move(out),
      [ctx, d](Tape<T>& tape, const typename Tape<T>::Node& n) {
        const Tensor<T>& dy = tape.grad(n.output);
        const auto gv = tape.value(n.inputs[1]).data();
        const bool need_x = tape.requires_grad(n.inputs[0]);
        const bool need_g = tape.requires_grad(n.inputs[1]);
        const bool need_b = tape.requires_grad(n.inputs[2]);
        const std::size_t np = d.plane();
        std::vector<T> pg(d.n * d.c, T{0}), pb(d.n * d.c, T{0});
        T* dx = need_x ? tape.grad(n.inputs[0]).data().data() : nullptr;
        parallel_for(d.n * d.c, [&](std::size_t p0, std::size_t p1) {
          for (std::size_t p = p0; p < p1; ++p) {
            const T* g = dy.data().data() + p * np;
            const T* xh = ctx->xhat.data().data() + p * np;
            const T gamma_c = gv[p % d.c];
            T s_dy{0}, s_dyx{0};
            for (std::size_t i = 0; i < np; ++i) {
              s_dy += g[i];
              s_dyx += g[i] * xh[i];
            }
            pg[p] = s_dyx;
            pb[p] = s_dy;
            if (dx) {
              // dxhat = gamma * dy, so both sums scale by gamma.
              const T scale = gamma_c * ctx->invstd[p] / static_cast<T>(np);
              const T nn = static_cast<T>(np);
              T* dst = dx + p * np;
              for (std::size_t i = 0; i < np; ++i) dst[i] += scale * (nn * g[i] - s_dy - xh[i] * s_dyx);
            }
          }
        });
        if (need_g || need_b) {
          T* dg = need_g ? tape.grad(n.inputs[1]).data().data() : nullptr;
          T* db = need_b ? tape.grad(n.inputs[2]).data().data() : nullptr;
          for (std::size_t b = 0; b < d.n; ++b) {
            for (std::size_t c = 0; c < d.c; ++c) {
              if (dg) dg[c] += pg[b * d.c + c];
              if (db) db[c] += pb[b * d.c + c];
            }
          }
        }
      });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  // Clamped so the attention weights stay strictly inside (0, 1) even where
  // the logistic rounds to 0 or 1 in floating point.
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T{1} - std::numeric_limits<T>::epsilon() / 2;
  Tensor<T> out(x.shape());
  const auto src = x.value().data();
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = std::clamp(stable_sigmoid(src[i]), lo, hi);
  return x.tape().record(OpKind::Sigmoid, {x.id()}, std::move(out), [](Tape<T>& tape, const typename Tape<T>::Node& n) {
    const auto s = tape.value(n.output).data();
    const auto dy = tape.grad(n.output).data();
    auto dx = tape.grad(n.inputs[0]).data();
    for (std::size_t i = 0; i < s.size(); ++i) dx[i] += dy[i] * s[i] * (T{1} - s[i]);
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out(x.shape());
  const auto src = x.value().data();
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = src[i] > T{0} ? src[i] : T{0};
  return x.tape().record(OpKind::Relu, {x.id()}, std::move(out), [](Tape<T>& tape, const typename Tape<T>::Node& n) {
    const auto xv = tape.value(n.inputs[0]).data();
    const auto dy = tape.grad(n.output).data();
    auto dx = tape.grad(n.inputs[0]).data();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (xv[i] > T{0}) dx[i] += dy[i];
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  const auto av = a.value().data();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return a.tape().record(OpKind::Add, {a.id(), b.id()}, std::move(out), [](Tape<T>& tape, const typename Tape<T>::Node& n) {
    const auto dy = tape.grad(n.output).data();
    for (std::size_t k = 0; k < 2; ++k) {
      if (!tape.requires_grad(n.inputs[k])) continue;
      auto dx = tape.grad(n.inputs[k]).data();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  const auto av = a.value().data();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape().record(OpKind::Mul, {a.id(), b.id()}, std::move(out), [](Tape<T>& tape, const typename Tape<T>::Node& n) {
    const auto dy = tape.grad(n.output).data();
    for (std::size_t k = 0; k < 2; ++k) {
      if (!tape.requires_grad(n.inputs[k])) continue;
      const auto other = tape.value(n.inputs[1 - k]).data();
      auto dx = tape.grad(n.inputs[k]).data();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * other[i];
    }
  });
}

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "concat_channels");
  const Dims4 da = a.value().dims4();
  const Dims4 db = b.value().dims4();
  if (da.n != db.n || da.h != db.h || da.w != db.w) {
    throw ShapeError("concat_channels: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t np = da.plane();
  Tensor<T> out(Shape{da.n, da.c + db.c, da.h, da.w});
  for (std::size_t n = 0; n < da.n; ++n) {
    const T* sa = a.value().data().data() + n * da.c * np;
    const T* sb = b.value().data().data() + n * db.c * np;
    T* dst = out.data().data() + n * (da.c + db.c) * np;
    std::copy(sa, sa + da.c * np, dst);
    std::copy(sb, sb + db.c * np, dst + da.c * np);
  }
  return a.tape().record(OpKind::Concat, {a.id(), b.id()}, std::move(out),
                         [da, db](Tape<T>& tape, const typename Tape<T>::Node& n) {
                           const std::size_t np = da.plane();
                           const T* dy = tape.grad(n.output).data().data();
                           const std::size_t cs[2] = {da.c, db.c};
                           for (std::size_t k = 0; k < 2; ++k) {
                             if (!tape.requires_grad(n.inputs[k])) continue;
                             T* dx = tape.grad(n.inputs[k]).data().data();
                             const std::size_t offset = k == 0 ? 0 : da.c * np;
                             for (std::size_t s = 0; s < da.n; ++s) {
                               const T* src = dy + s * (da.c + db.c) * np + offset;
                               T* dst = dx + s * cs[k] * np;
                               for (std::size_t i = 0; i < cs[k] * np; ++i) dst[i] += src[i];
                             }
                           }
                         });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T acc{0};
  for (T v : x.value().data()) acc += v;
  return x.tape().record(OpKind::Sum, {x.id()}, Tensor<T>::scalar(acc),
                         [](Tape<T>& tape, const typename Tape<T>::Node& n) {
                           const T g = tape.grad(n.output)[0];
                           for (auto& v : tape.grad(n.inputs[0]).data()) v += g;
                         });
}

#define ERFSEG_INSTANTIATE_OPS(T)                                                              \
  template T stable_sigmoid<T>(T);                                                             \
  template Var<T> conv2d<T>(Var<T>, Var<T>, std::optional<Var<T>>, const ConvSpec&);          \
  template Var<T> maxpool2d<T>(Var<T>);                                                        \
  template Var<T> bilinear_upsample<T>(Var<T>, std::size_t);                                   \
  template Var<T> instance_norm<T>(Var<T>, Var<T>, Var<T>, T);                                 \
  template Var<T> sigmoid<T>(Var<T>);                                                          \
  template Var<T> relu<T>(Var<T>);                                                             \
  template Var<T> add<T>(Var<T>, Var<T>);                                                      \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                      \
  template Var<T> concat_channels<T>(Var<T>, Var<T>);                                          \
  template Var<T> sum<T>(Var<T>);

ERFSEG_INSTANTIATE_OPS(float)
ERFSEG_INSTANTIATE_OPS(double)

}  // namespace erfseg
