#pragma once

#include <cstddef>
#include <string>

namespace erfseg {

/// Geometry of one 2-D convolution. groups == in_channels gives a depthwise conv.
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t pad_h = 1;
  std::size_t pad_w = 1;
  std::size_t dilation = 1;
  std::size_t groups = 1;

  /// Same-padding spec: p = d*(k-1)/2, so only `stride` changes the extent.
  static ConvSpec same(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride = 1,
                       std::size_t dilation = 1, std::size_t groups = 1);

  std::size_t extent_h() const { return dilation * (kernel_h - 1) + 1; }
  std::size_t extent_w() const { return dilation * (kernel_w - 1) + 1; }
  std::size_t out_h(std::size_t h) const { return (h + 2 * pad_h - extent_h()) / stride + 1; }
  std::size_t out_w(std::size_t w) const { return (w + 2 * pad_w - extent_w()) / stride + 1; }
  bool depthwise() const { return groups > 1 && groups == in_channels; }
  std::size_t weight_numel() const { return out_channels * (in_channels / groups) * kernel_h * kernel_w; }
  std::size_t fan_in() const { return (in_channels / groups) * kernel_h * kernel_w; }

  /// Throws ShapeError on inconsistent channels, groups, stride or dilation.
  void validate() const;
  /// Additionally checks that the dilated kernel fits the padded input.
  void validate_input(std::size_t h, std::size_t w) const;

  std::string describe() const;
};

}  // namespace erfseg
