#include "erfseg/net/network.hpp"

#include <array>

#include "erfseg/error.hpp"
#include "erfseg/ops.hpp"

namespace erfseg {

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 6> kVariants{{
    {Variant::Unet, "unet"},
    {Variant::WUnet, "wunet"},
    {Variant::D6Unet, "d6unet"},
    {Variant::D9Unet, "d9unet"},
    {Variant::FPA, "fpa"},
    {Variant::RFNA, "rfna"},
}};

}  // namespace

std::string_view variant_name(Variant v) {
  for (const auto& [k, name] : kVariants) {
    if (k == v) return name;
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (const auto& [k, n] : kVariants) {
    if (n == name) return k;
  }
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected unet, wunet, d6unet, d9unet, fpa, rfna)");
}

NetworkSpec NetworkSpec::make(Variant v, std::size_t in_channels) {
  NetworkSpec s;
  s.variant = v;
  s.in_channels = in_channels;
  if (v == Variant::FPA) s.fpa = FPAConfig{};
  if (v == Variant::RFNA) s.rfna = RFNAConfig{};
  return s;
}

void NetworkSpec::validate() const {
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (stages < 1 || stages > 6) throw ConfigError("stages must lie in [1, 6], got " + std::to_string(stages));
  if (in_channels < 1 || out_channels < 1) throw ConfigError("channel counts must be >= 1");
  if (convs_per_block < 1) throw ConfigError("convs_per_block must be >= 1");
  if (fpa.has_value() != (variant == Variant::FPA)) {
    throw ConfigError(variant == Variant::FPA ? "variant fpa requires an FPA config"
                                              : "FPA config given for variant " + std::string(variant_name(variant)));
  }
  if (rfna.has_value() != (variant == Variant::RFNA)) {
    throw ConfigError(variant == Variant::RFNA ? "variant rfna requires an RFNA config"
                                               : "RFNA config given for variant " + std::string(variant_name(variant)));
  }
  if (fpa) fpa->validate();
  if (rfna) rfna->validate();
}

std::size_t NetworkSpec::stem_width() const { return variant == Variant::WUnet ? 2 * base_channels : base_channels; }

std::size_t NetworkSpec::encoder_dilation() const {
  switch (variant) {
    case Variant::D6Unet:
      return 6;
    case Variant::D9Unet:
      return 9;
    default:
      return 1;
  }
}

std::size_t NetworkSpec::input_multiple() const {
  const std::size_t m = std::size_t{1} << stages;
  return rfna ? m * rfna->ratio : m;
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  declare(decls_, BlockSpec{BlockKind::Stem, spec_.in_channels, width(0), spec_.convs_per_block, 1, false},
          stage(0) + ".main");
  for (std::size_t i = 1; i <= spec_.stages; ++i) {
    const AttentionBlockSpec ab{width(i - 1), spec_.convs_per_block};
    if (spec_.fpa) {
      declare_fpa(decls_, ab, *spec_.fpa, stage(i));
    } else if (spec_.rfna) {
      declare_rfna(decls_, ab, *spec_.rfna, stage(i));
    } else {
      declare(decls_, encoder_block(i), stage(i) + ".main");
    }
  }
  for (std::size_t j = 1; j <= spec_.stages; ++j) {
    declare(decls_, decoder_block(spec_.stages - j), stage(spec_.stages + j) + ".main");
  }
  declare(decls_, head());
}

std::size_t Network::param_count() const { return count_params(decls_); }

BlockSpec Network::encoder_block(std::size_t level) const {
  return BlockSpec{BlockKind::Encoder, width(level - 1), width(level), spec_.convs_per_block,
                   spec_.encoder_dilation(), false};
}

// Upsampled level+1 features concatenated with the level skip, reduced back
// to the skip width.
BlockSpec Network::decoder_block(std::size_t level) const {
  return BlockSpec{BlockKind::Decoder, width(level + 1) + width(level), width(level), spec_.convs_per_block, 1,
                   false};
}

ConvUnit Network::head() const {
  return ConvUnit{stage(2 * spec_.stages + 1) + ".head.conv1", ConvSpec::same(width(0), spec_.out_channels, 1), true,
                  false, false};
}

void Network::check_input(const Shape& shape) const {
  if (shape.size() != 4) throw ShapeError("network input must be [B, C, H, W], got " + shape_str(shape));
  if (shape[1] != spec_.in_channels) {
    throw ShapeError("network expects " + std::to_string(spec_.in_channels) + " input channels, got " +
                     std::to_string(shape[1]));
  }
  const std::size_t m = spec_.input_multiple();
  if (shape[2] == 0 || shape[3] == 0 || shape[2] % m != 0 || shape[3] % m != 0) {
    throw ShapeError("input extent " + std::to_string(shape[2]) + "x" + std::to_string(shape[3]) +
                     " must be a positive multiple of " + std::to_string(m) + " for variant " +
                     std::string(variant_name(spec_.variant)));
  }
  // The deepest normalised map must hold at least two pixels.
  const std::size_t deep = std::size_t{1} << spec_.stages;
  if ((shape[2] / deep) * (shape[3] / deep) < 2) {
    throw ShapeError("input extent " + std::to_string(shape[2]) + "x" + std::to_string(shape[3]) +
                     " leaves a 1x1 map at the deepest stage; use at least " + std::to_string(2 * deep) +
                     " pixels along one axis");
  }
}

template <typename T>
ForwardResult<T> Network::forward(ParamBinder<T>& params, Var<T> input) const {
  check_input(input.shape());
  ForwardResult<T> result;
  std::vector<Var<T>> skips;
  Var<T> h = conv_block_forward(params,
                                BlockSpec{BlockKind::Stem, spec_.in_channels, width(0), spec_.convs_per_block, 1, false},
                                stage(0) + ".main", input);
  for (std::size_t i = 1; i <= spec_.stages; ++i) {
    skips.push_back(h);
    const AttentionBlockSpec ab{width(i - 1), spec_.convs_per_block};
    if (spec_.fpa || spec_.rfna) {
      auto out = spec_.fpa ? fpa_forward(params, ab, *spec_.fpa, stage(i), h)
                           : rfna_forward(params, ab, *spec_.rfna, stage(i), h);
      h = out.y;
      result.attention.push_back({i, std::move(out)});
    } else {
      h = conv_block_forward(params, encoder_block(i), stage(i) + ".main", maxpool2d(h));
    }
  }
  for (std::size_t j = 1; j <= spec_.stages; ++j) {
    const std::size_t level = spec_.stages - j;
    h = concat_channels(bilinear_upsample(h, 2), skips[level]);
    h = conv_block_forward(params, decoder_block(level), stage(spec_.stages + j) + ".main", h);
  }
  result.logits = erfseg::forward(params, head(), h);
  return result;
}

template <typename T>
Tensor<T> Network::predict(ParamStore<T>& params, const Tensor<T>& input) const {
  Tape<T> tape;
  ParamBinder<T> binder(tape, params);
  return forward(binder, tape.constant(input)).logits.value();
}

template ForwardResult<float> Network::forward<float>(ParamBinder<float>&, Var<float>) const;
template ForwardResult<double> Network::forward<double>(ParamBinder<double>&, Var<double>) const;
template Tensor<float> Network::predict<float>(ParamStore<float>&, const Tensor<float>&) const;
template Tensor<double> Network::predict<double>(ParamStore<double>&, const Tensor<double>&) const;

}  // namespace erfseg
