#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "erfseg/nn/layers.hpp"

namespace erfseg {

/// Parallel-branch attention block: a dilated, weight-shared attention branch
/// gates the main conv branch, Y = F * A + F.
struct FPAConfig {
  std::size_t dilation = 9;
  bool depthwise = false;
  std::size_t expansion = 1;

  void validate() const;
};

/// Sequential-branch attention block: strided convs shrink F by `ratio`, the
/// result is upsampled back, projected to F's width and added to F before the
/// sigmoid, Y = F * A + F.
struct RFNAConfig {
  std::size_t ratio = 8;
  bool depthwise = true;
  std::size_t expansion = 4;

  void validate() const;
  /// Number of stride-2 convs in the attention branch, log2(ratio).
  std::size_t strided_convs() const;
};

/// Everything an attention block exposes for inspection and export.
template <typename T>
struct AttentionOutput {
  Var<T> y;  // F * A + F
  Var<T> f;  // main-branch features
  Var<T> a;  // attention map, strictly inside (0, 1)
  /// Coarse attention features before upsampling (RFNA only).
  std::optional<Var<T>> coarse;
};

/// Both blocks map [B, C, H, W] to [B, 2C, H/2, W/2]. Parameters are named
/// `{prefix}.main.conv{k}.*` and `{prefix}.attn.wa{k}.*`.
struct AttentionBlockSpec {
  std::size_t in_channels = 32;
  std::size_t convs_per_block = 2;

  std::size_t out_channels() const { return 2 * in_channels; }
  BlockSpec main_branch() const;
};

void declare_fpa(std::vector<ParamDecl>& decls, const AttentionBlockSpec& block, const FPAConfig& cfg,
                 const std::string& prefix);
void declare_rfna(std::vector<ParamDecl>& decls, const AttentionBlockSpec& block, const RFNAConfig& cfg,
                  const std::string& prefix);

/// X is max-pooled once and the pooled map feeds both branches. The shared
/// dilated conv is applied twice with one weight tensor; each application has
/// its own instance-norm affine.
template <typename T>
AttentionOutput<T> fpa_forward(ParamBinder<T>& params, const AttentionBlockSpec& block, const FPAConfig& cfg,
                               const std::string& prefix, Var<T> x);

/// The attention branch consumes F. Requires H/2 and W/2 divisible by ratio.
template <typename T>
AttentionOutput<T> rfna_forward(ParamBinder<T>& params, const AttentionBlockSpec& block, const RFNAConfig& cfg,
                                const std::string& prefix, Var<T> x);

}  // namespace erfseg
