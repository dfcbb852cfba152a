#pragma once

// Loop-level reference implementations, deliberately independent of the
// im2col/GEMM and tape code paths they are compared against.

#include <cmath>

#include "erfseg/conv_spec.hpp"
#include "erfseg/tensor.hpp"

namespace erfseg::oracle {

/// Direct nested-loop cross-correlation.
inline Tensor<double> conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b,
                           const ConvSpec& s) {
  const auto d = x.dims4();
  const std::size_t ho = (d.h + 2 * s.pad_h - s.dilation * (s.kernel_h - 1) - 1) / s.stride + 1;
  const std::size_t wo = (d.w + 2 * s.pad_w - s.dilation * (s.kernel_w - 1) - 1) / s.stride + 1;
  const std::size_t cin_g = s.in_channels / s.groups, cout_g = s.out_channels / s.groups;
  Tensor<double> out(Shape{d.n, s.out_channels, ho, wo});
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t oc = 0; oc < s.out_channels; ++oc)
      for (std::size_t oh = 0; oh < ho; ++oh)
        for (std::size_t ow = 0; ow < wo; ++ow) {
          double acc = b ? (*b)[oc] : 0.0;
          const std::size_t grp = oc / cout_g;
          for (std::size_t ic = 0; ic < cin_g; ++ic)
            for (std::size_t kh = 0; kh < s.kernel_h; ++kh)
              for (std::size_t kw = 0; kw < s.kernel_w; ++kw) {
                const long ih = static_cast<long>(oh * s.stride + kh * s.dilation) - static_cast<long>(s.pad_h);
                const long iw = static_cast<long>(ow * s.stride + kw * s.dilation) - static_cast<long>(s.pad_w);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(d.h) || iw >= static_cast<long>(d.w)) continue;
                acc += x.at(n, grp * cin_g + ic, ih, iw) * w[((oc * cin_g + ic) * s.kernel_h + kh) * s.kernel_w + kw];
              }
          out.at(n, oc, oh, ow) = acc;
        }
  return out;
}

/// Two-pass mean / biased variance standardisation per (sample, channel).
inline Tensor<double> instance_norm(const Tensor<double>& x, const Tensor<double>& gamma, const Tensor<double>& beta,
                                    double eps = 1e-5) {
  const auto d = x.dims4();
  Tensor<double> out(x.shape());
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t c = 0; c < d.c; ++c) {
      double mean = 0.0;
      for (std::size_t h = 0; h < d.h; ++h)
        for (std::size_t w = 0; w < d.w; ++w) mean += x.at(n, c, h, w);
      mean /= static_cast<double>(d.plane());
      double var = 0.0;
      for (std::size_t h = 0; h < d.h; ++h)
        for (std::size_t w = 0; w < d.w; ++w) var += (x.at(n, c, h, w) - mean) * (x.at(n, c, h, w) - mean);
      var /= static_cast<double>(d.plane());
      for (std::size_t h = 0; h < d.h; ++h)
        for (std::size_t w = 0; w < d.w; ++w)
          out.at(n, c, h, w) = gamma[c] * (x.at(n, c, h, w) - mean) / std::sqrt(var + eps) + beta[c];
    }
  return out;
}

inline Tensor<double> relu(Tensor<double> x) {
  for (auto& v : x.data()) v = v > 0.0 ? v : 0.0;
  return x;
}

}  // namespace erfseg::oracle
