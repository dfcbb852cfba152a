#include "erfseg/nn/layers.hpp"

#include "erfseg/error.hpp"
#include "erfseg/ops.hpp"

namespace erfseg {

template <typename T>
Var<T> ParamBinder<T>::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var<T> v = tape_.leaf(store_.get(name));
  bound_.emplace(name, v);
  return v;
}

template <typename T>
void ParamBinder<T>::bind(const std::string& name, Var<T> v) {
  if (!store_.contains(name)) throw ConfigError("unknown parameter '" + name + "'");
  if (!bound_.emplace(name, v).second) throw ConfigError("parameter '" + name + "' is already bound");
}

void declare(std::vector<ParamDecl>& decls, const ConvUnit& unit) {
  unit.conv.validate();
  const ConvSpec& c = unit.conv;
  decls.push_back({unit.prefix + ".weight", Shape{c.out_channels, c.in_channels / c.groups, c.kernel_h, c.kernel_w},
                   ParamKind::Weight, c.fan_in()});
  if (unit.bias) decls.push_back({unit.prefix + ".bias", Shape{c.out_channels}, ParamKind::Bias});
  if (unit.norm) {
    decls.push_back({unit.prefix + ".gamma", Shape{c.out_channels}, ParamKind::Gamma});
    decls.push_back({unit.prefix + ".beta", Shape{c.out_channels}, ParamKind::Beta});
  }
}

template <typename T>
Var<T> forward(ParamBinder<T>& params, const ConvUnit& unit, Var<T> x) {
  std::optional<Var<T>> bias;
  if (unit.bias) bias = params(unit.prefix + ".bias");
  Var<T> y = conv2d(x, params(unit.prefix + ".weight"), bias, unit.conv);
  if (unit.norm) y = instance_norm(y, params(unit.prefix + ".gamma"), params(unit.prefix + ".beta"));
  if (unit.relu) y = relu(y);
  return y;
}

void BlockSpec::validate() const {
  if (in_channels == 0 || out_channels == 0) throw ConfigError("conv block needs positive channel counts");
  if (conv_count == 0) throw ConfigError("conv block needs at least one conv");
  if (dilation == 0) throw ConfigError("conv block dilation must be >= 1");
}

std::vector<ConvUnit> BlockSpec::units(const std::string& prefix) const {
  validate();
  std::vector<ConvUnit> out;
  for (std::size_t i = 0; i < conv_count; ++i) {
    const std::size_t cin = i == 0 ? in_channels : out_channels;
    const std::size_t groups = depthwise && cin == out_channels ? cin : 1;
    out.push_back({prefix + ".conv" + std::to_string(i + 1), ConvSpec::same(cin, out_channels, 3, 1, dilation, groups)});
  }
  return out;
}

void declare(std::vector<ParamDecl>& decls, const BlockSpec& block, const std::string& prefix) {
  for (const auto& u : block.units(prefix)) declare(decls, u);
}

template <typename T>
Var<T> conv_block_forward(ParamBinder<T>& params, const BlockSpec& block, const std::string& prefix, Var<T> x) {
  if (x.value().rank() != 4 || x.shape()[1] != block.in_channels) {
    throw ShapeError("conv block '" + prefix + "' expects " + std::to_string(block.in_channels) +
                     " input channels, got shape " + shape_str(x.shape()));
  }
  for (const auto& u : block.units(prefix)) x = forward(params, u, x);
  return x;
}

#define ERFSEG_INSTANTIATE(T)                                                    \
  template class ParamBinder<T>;                                                 \
  template Var<T> forward<T>(ParamBinder<T>&, const ConvUnit&, Var<T>);          \
  template Var<T> conv_block_forward<T>(ParamBinder<T>&, const BlockSpec&, const std::string&, Var<T>);

ERFSEG_INSTANTIATE(float)
ERFSEG_INSTANTIATE(double)
#undef ERFSEG_INSTANTIATE

}  // namespace erfseg
