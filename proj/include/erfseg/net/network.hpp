#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "erfseg/net/attention.hpp"

namespace erfseg {

enum class Variant { Unet, WUnet, D6Unet, D9Unet, FPA, RFNA };

std::string_view variant_name(Variant v);
/// Accepts unet, wunet, d6unet, d9unet, fpa, rfna; throws ConfigError.
Variant parse_variant(std::string_view name);

/// Declarative description of a segmentation network. `fpa` is set iff the
/// variant is FPA and `rfna` iff it is RFNA.
struct NetworkSpec {
  Variant variant = Variant::Unet;
  std::size_t base_channels = 32;
  std::size_t stages = 3;
  std::size_t in_channels = 4;
  std::size_t out_channels = 1;
  std::size_t convs_per_block = 2;
  std::optional<FPAConfig> fpa;
  std::optional<RFNAConfig> rfna;

  /// Spec for `v` with the default attention config attached where needed.
  static NetworkSpec make(Variant v, std::size_t in_channels = 4);

  void validate() const;
  /// Channel width of the stem; the wide variant doubles every width.
  std::size_t stem_width() const;
  /// Dilation of the encoder-stage convs (1 unless a dilated variant).
  std::size_t encoder_dilation() const;
  /// Input extents must be multiples of this value.
  std::size_t input_multiple() const;
};

/// Exported intermediates of one attention encoder stage.
template <typename T>
struct StageTrace {
  std::size_t stage;
  AttentionOutput<T> out;
};

template <typename T>
struct ForwardResult {
  Var<T> logits;
  std::vector<StageTrace<T>> attention;
};

/// U-Net with a full-resolution stem, `stages` downsampling encoder stages
/// (plain, dilated, FPA or RFNA), a bilinear-upsampling decoder with skip
/// concatenation and a 1x1 head. Immutable after construction; parameters
/// live in a separate ParamStore.
///
/// Parameter prefixes: stage0 = stem, stage1..S = encoder, stageS+1..2S =
/// decoder (deepest first), stage2S+1 = head.
class Network {
 public:
  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<ParamDecl>& param_decls() const { return decls_; }
  std::size_t param_count() const;

  /// Throws ShapeError naming the required multiple.
  void check_input(const Shape& shape) const;

  template <typename T>
  ForwardResult<T> forward(ParamBinder<T>& params, Var<T> input) const;

  /// Logits for `input` on a private tape.
  template <typename T>
  Tensor<T> predict(ParamStore<T>& params, const Tensor<T>& input) const;

  template <typename T>
  ParamStore<T> init(std::uint64_t seed) const {
    return init_params<T>(decls_, seed);
  }

 private:
  std::string stage(std::size_t i) const { return "stage" + std::to_string(i); }
  std::size_t width(std::size_t level) const { return spec_.stem_width() << level; }
  BlockSpec encoder_block(std::size_t level) const;
  BlockSpec decoder_block(std::size_t level) const;
  ConvUnit head() const;

  NetworkSpec spec_;
  std::vector<ParamDecl> decls_;
};

template <typename T>
std::pair<Network, ParamStore<T>> build_unet(const NetworkSpec& spec, std::uint64_t seed) {
  Network net(spec);
  auto params = net.init<T>(seed);
  return {std::move(net), std::move(params)};
}

}  // namespace erfseg
