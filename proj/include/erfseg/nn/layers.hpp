#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "erfseg/conv_spec.hpp"
#include "erfseg/nn/param_store.hpp"
#include "erfseg/tape.hpp"

namespace erfseg {

/// Binds a ParamStore to one tape. Each parameter becomes a single leaf the
/// first time it is requested; later requests return the same Var, so a
/// shared weight used twice is one node with two consumers.
template <typename T>
class ParamBinder {
 public:
  ParamBinder(Tape<T>& tape, ParamStore<T>& store) : tape_(tape), store_(store) {}

  Var<T> operator()(const std::string& name);
  /// Pre-binds `name` to an existing Var (e.g. a leaf created elsewhere).
  void bind(const std::string& name, Var<T> v);
  Tape<T>& tape() { return tape_; }
  ParamStore<T>& store() { return store_; }

 private:
  Tape<T>& tape_;
  ParamStore<T>& store_;
  std::unordered_map<std::string, Var<T>> bound_;
};

/// One convolution with optional instance norm and ReLU. Parameters live
/// under `{prefix}.weight`, `{prefix}.bias`, `{prefix}.gamma`, `{prefix}.beta`.
struct ConvUnit {
  std::string prefix;
  ConvSpec conv;
  bool bias = true;
  bool norm = true;
  bool relu = true;
};

void declare(std::vector<ParamDecl>& decls, const ConvUnit& unit);

template <typename T>
Var<T> forward(ParamBinder<T>& params, const ConvUnit& unit, Var<T> x);

enum class BlockKind { Stem, Encoder, Decoder, Head };

/// A stack of `conv_count` 3x3 convolutions, each followed by instance norm
/// and ReLU. The first conv maps in->out channels, the rest out->out.
struct BlockSpec {
  BlockKind kind = BlockKind::Encoder;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t conv_count = 2;
  std::size_t dilation = 1;
  /// Depthwise applies to the convs whose input and output widths agree.
  bool depthwise = false;

  void validate() const;
  /// Conv units named `{prefix}.conv1` ... `{prefix}.conv{n}`.
  std::vector<ConvUnit> units(const std::string& prefix) const;
};

void declare(std::vector<ParamDecl>& decls, const BlockSpec& block, const std::string& prefix);

/// (conv -> instance_norm -> relu) x conv_count.
template <typename T>
Var<T> conv_block_forward(ParamBinder<T>& params, const BlockSpec& block, const std::string& prefix, Var<T> x);

}  // namespace erfseg
