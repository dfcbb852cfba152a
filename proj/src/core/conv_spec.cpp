#include "erfseg/conv_spec.hpp"

#include "erfseg/error.hpp"

namespace erfseg {

ConvSpec ConvSpec::same(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                        std::size_t dilation, std::size_t groups) {
  if (kernel % 2 == 0) throw ShapeError("same padding needs an odd kernel, got " + std::to_string(kernel));
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel_h = s.kernel_w = kernel;
  s.stride = stride;
  s.dilation = dilation;
  s.groups = groups;
  s.pad_h = s.pad_w = dilation * (kernel - 1) / 2;
  s.validate();
  return s;
}

void ConvSpec::validate() const {
  if (in_channels == 0 || out_channels == 0) throw ShapeError("conv channels must be positive: " + describe());
  if (kernel_h == 0 || kernel_w == 0) throw ShapeError("conv kernel must be positive: " + describe());
  if (stride == 0 || dilation == 0 || groups == 0) {
    throw ShapeError("conv stride/dilation/groups must be positive: " + describe());
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw ShapeError("conv channels not divisible by groups: " + describe());
  }
}

void ConvSpec::validate_input(std::size_t h, std::size_t w) const {
  validate();
  if (extent_h() > h + 2 * pad_h || extent_w() > w + 2 * pad_w) {
    throw ShapeError("dilated kernel extent " + std::to_string(extent_h()) + "x" + std::to_string(extent_w()) +
                     " exceeds padded input " + std::to_string(h + 2 * pad_h) + "x" +
                     std::to_string(w + 2 * pad_w) + " for " + describe());
  }
}

std::string ConvSpec::describe() const {
  return "conv(" + std::to_string(in_channels) + "->" + std::to_string(out_channels) + ", k=" +
         std::to_string(kernel_h) + "x" + std::to_string(kernel_w) + ", s=" + std::to_string(stride) +
         ", p=" + std::to_string(pad_h) + "x" + std::to_string(pad_w) + ", d=" + std::to_string(dilation) +
         ", g=" + std::to_string(groups) + ")";
}

}  // namespace erfseg
