#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "erfseg/nn/param_store.hpp"
#include "erfseg/tape.hpp"

namespace erfseg {

/// Mean absolute input gradient of one output unit.
struct ERFMap {
  Tensor<double> grid;  // [H, W], non-negative
  std::size_t center_row = 0;
  std::size_t center_col = 0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
};

/// Maps a [B, C, H, W] input to a [B, C', H', W'] output on the given tape.
using ErfNetwork = std::function<Var<double>(Tape<double>&, Var<double>)>;

/// For `n_samples` standard-normal inputs (batched, drawn from `seed`): seeds
/// the output gradient with 1 at channel 0 of the centre unit
/// (floor(H'/2), floor(W'/2)) of every sample, backpropagates, and averages
/// |dOut/dIn| over samples after summing over input channels.
ERFMap compute_erf(const ErfNetwork& net, const Shape& sample_shape, std::size_t n_samples, std::uint64_t seed);

/// Smallest integer r such that the pixels within Chebyshev distance r of
/// the map centre hold at least `mass_fraction` of the total mass. Throws
/// std::invalid_argument on an all-zero map or a fraction outside (0, 1].
double erf_radius(const ERFMap& map, double mass_fraction = 0.9545);

enum class ErfArch { Plain, Dilated, Residual };

std::string_view arch_name(ErfArch a);
ErfArch parse_arch(std::string_view name);

/// Stack of `depth` 3x3 convs without normalisation, used to measure how
/// topology shapes the ERF. Plain: h = relu(conv(h)); residual:
/// h = h + relu(conv(h)) after the first (projecting) conv; dilated: every
/// conv uses `dilation`. The final conv has no activation.
struct ErfLabSpec {
  ErfArch arch = ErfArch::Plain;
  std::size_t depth = 5;
  std::size_t dilation = 1;
  std::size_t channels = 8;
  std::size_t in_channels = 1;
  /// 0 picks the smallest odd side >= max(64, rf_extent + 2).
  std::size_t input_size = 0;

  void validate() const;
  std::size_t layer_dilation() const { return arch == ErfArch::Dilated ? dilation : 1; }
  /// Theoretical receptive-field side length, 1 + depth * 2 * dilation.
  std::size_t rf_extent() const;
  std::size_t side() const;
  std::vector<ParamDecl> param_decls() const;
  /// Forward pass bound to `params`; the store must outlive the returned
  /// function.
  ErfNetwork network(ParamStore<double>& params) const;
};

struct ERFReport {
  ErfLabSpec spec;
  std::uint64_t seed = 0;
  std::size_t rf_extent = 0;
  double erf_radius = 0.0;
  /// ERF diameter (2r + 1) over the RF side.
  double ratio = 0.0;
  ERFMap map;
};

/// Initialises the lab network from `seed` and measures its ERF with inputs
/// drawn from the same seed.
ERFReport measure_erf(const ErfLabSpec& spec, std::size_t n_samples, std::uint64_t seed, double mass_fraction = 0.9545);

struct ErfComparison {
  std::vector<std::uint64_t> seeds;
  std::vector<ERFReport> a, b;
  double mean_radius_a = 0.0, mean_radius_b = 0.0;
  double mean_ratio_a = 0.0, mean_ratio_b = 0.0;
};

/// Measures both specs on every seed. Throws ShapeError if the two specs do
/// not share the same input/output geometry.
ErfComparison compare_erf(const ErfLabSpec& a, const ErfLabSpec& b, std::size_t n_samples,
                          const std::vector<std::uint64_t>& seeds);

}  // namespace erfseg
