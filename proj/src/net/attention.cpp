#include "erfseg/net/attention.hpp"

#include <bit>

#include "erfseg/error.hpp"
#include "erfseg/ops.hpp"

namespace erfseg {

namespace {

std::string attn(const std::string& prefix, std::size_t k) { return prefix + ".attn.wa" + std::to_string(k); }

void require_rank4_channels(const Shape& s, std::size_t c, const std::string& prefix) {
  if (s.size() != 4 || s[1] != c) {
    throw ShapeError("attention block '" + prefix + "' expects " + std::to_string(c) + " input channels, got " +
                     shape_str(s));
  }
}

// Attention-branch layer geometry shared by declaration and forward.
struct FPALayers {
  ConvUnit wa1, wa2, wa3;
};

FPALayers fpa_layers(const AttentionBlockSpec& block, const FPAConfig& cfg, const std::string& prefix) {
  cfg.validate();
  const std::size_t c = block.in_channels, out = block.out_channels(), wide = cfg.expansion * out;
  FPALayers l;
  l.wa1 = {attn(prefix, 1), ConvSpec::same(c, wide, 3)};
  l.wa2 = {attn(prefix, 2), ConvSpec::same(wide, wide, 3, 1, cfg.dilation, cfg.depthwise ? wide : 1)};
  l.wa3 = {attn(prefix, 3), ConvSpec::same(wide, out, 3), true, false, false};
  return l;
}

struct RFNALayers {
  std::vector<ConvUnit> down;  // wa1 .. wa{log2 r}
  ConvUnit project;            // wa4
};

RFNALayers rfna_layers(const AttentionBlockSpec& block, const RFNAConfig& cfg, const std::string& prefix) {
  cfg.validate();
  const std::size_t out = block.out_channels(), wide = cfg.expansion * out;
  RFNALayers l;
  // The strided maps reach 1x1 at the deepest stage, where per-instance
  // statistics are undefined, so the attention branch uses ReLU only.
  l.down.push_back({attn(prefix, 1), ConvSpec::same(out, wide, 3, 2), true, false, true});
  for (std::size_t k = 2; k <= cfg.strided_convs(); ++k) {
    l.down.push_back({attn(prefix, k), ConvSpec::same(wide, wide, 3, 2, 1, cfg.depthwise ? wide : 1), true, false, true});
  }
  l.project = {attn(prefix, 4), ConvSpec::same(wide, out, 1), true, false, false};
  return l;
}

}  // namespace

void FPAConfig::validate() const {
  if (dilation < 2) throw ConfigError("FPA dilation rate must be >= 2, got " + std::to_string(dilation));
  if (expansion < 1) throw ConfigError("FPA expansion ratio must be >= 1");
}

void RFNAConfig::validate() const {
  if (ratio < 2 || !std::has_single_bit(ratio)) {
    throw ConfigError("RFNA downsampling ratio must be a power of two >= 2, got " + std::to_string(ratio));
  }
  if (ratio > 8) throw ConfigError("RFNA supports downsampling ratios 2, 4 and 8, got " + std::to_string(ratio));
  if (expansion < 1) throw ConfigError("RFNA expansion ratio must be >= 1");
}

std::size_t RFNAConfig::strided_convs() const { return static_cast<std::size_t>(std::countr_zero(ratio)); }

BlockSpec AttentionBlockSpec::main_branch() const {
  return BlockSpec{BlockKind::Encoder, in_channels, out_channels(), convs_per_block, 1, false};
}

void declare_fpa(std::vector<ParamDecl>& decls, const AttentionBlockSpec& block, const FPAConfig& cfg,
                 const std::string& prefix) {
  declare(decls, block.main_branch(), prefix + ".main");
  const auto l = fpa_layers(block, cfg, prefix);
  declare(decls, l.wa1);
  // One conv weight/bias shared by both applications, one affine pair each.
  declare(decls, ConvUnit{l.wa2.prefix, l.wa2.conv, true, false, false});
  const Shape ch{l.wa2.conv.out_channels};
  for (const char* k : {"1", "2"}) {
    decls.push_back({l.wa2.prefix + ".gamma" + k, ch, ParamKind::Gamma});
    decls.push_back({l.wa2.prefix + ".beta" + k, ch, ParamKind::Beta});
  }
  declare(decls, l.wa3);
}

void declare_rfna(std::vector<ParamDecl>& decls, const AttentionBlockSpec& block, const RFNAConfig& cfg,
                  const std::string& prefix) {
  declare(decls, block.main_branch(), prefix + ".main");
  const auto l = rfna_layers(block, cfg, prefix);
  for (const auto& u : l.down) declare(decls, u);
  declare(decls, l.project);
}

template <typename T>
AttentionOutput<T> fpa_forward(ParamBinder<T>& params, const AttentionBlockSpec& block, const FPAConfig& cfg,
                               const std::string& prefix, Var<T> x) {
  require_rank4_channels(x.shape(), block.in_channels, prefix);
  const auto l = fpa_layers(block, cfg, prefix);
  const Var<T> pooled = maxpool2d(x);
  const Var<T> f = conv_block_forward(params, block.main_branch(), prefix + ".main", pooled);

  Var<T> h = forward(params, l.wa1, pooled);
  const Var<T> w2 = params(l.wa2.prefix + ".weight");
  const Var<T> b2 = params(l.wa2.prefix + ".bias");
  for (const char* k : {"1", "2"}) {
    h = conv2d(h, w2, b2, l.wa2.conv);
    h = relu(instance_norm(h, params(l.wa2.prefix + ".gamma" + k), params(l.wa2.prefix + ".beta" + k)));
  }
  const Var<T> a = sigmoid(forward(params, l.wa3, h));
  return {add(mul(f, a), f), f, a, std::nullopt};
}

template <typename T>
AttentionOutput<T> rfna_forward(ParamBinder<T>& params, const AttentionBlockSpec& block, const RFNAConfig& cfg,
                                const std::string& prefix, Var<T> x) {
  require_rank4_channels(x.shape(), block.in_channels, prefix);
  const auto l = rfna_layers(block, cfg, prefix);
  const Var<T> f = conv_block_forward(params, block.main_branch(), prefix + ".main", maxpool2d(x));
  const std::size_t fh = f.shape()[2], fw = f.shape()[3];
  if (fh % cfg.ratio != 0 || fw % cfg.ratio != 0) {
    throw ShapeError("RFNA block '" + prefix + "': feature map " + std::to_string(fh) + "x" + std::to_string(fw) +
                     " is not divisible by the downsampling ratio " + std::to_string(cfg.ratio));
  }
  Var<T> h = f;
  for (const auto& u : l.down) h = forward(params, u, h);
  const Var<T> coarse = h;
  h = forward(params, l.project, bilinear_upsample(h, cfg.ratio));
  const Var<T> a = sigmoid(add(h, f));
  return {add(mul(f, a), f), f, a, coarse};
}

#define ERFSEG_INSTANTIATE(T)                                                                                  \
  template AttentionOutput<T> fpa_forward<T>(ParamBinder<T>&, const AttentionBlockSpec&, const FPAConfig&,    \
                                             const std::string&, Var<T>);                                     \
  template AttentionOutput<T> rfna_forward<T>(ParamBinder<T>&, const AttentionBlockSpec&, const RFNAConfig&,  \
                                              const std::string&, Var<T>);

ERFSEG_INSTANTIATE(float)
ERFSEG_INSTANTIATE(double)
#undef ERFSEG_INSTANTIATE

}  // namespace erfseg
