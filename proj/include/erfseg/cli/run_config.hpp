#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "erfseg/net/network.hpp"
#include "erfseg/train/synthetic.hpp"
#include "erfseg/train/trainer.hpp"

namespace erfseg::cli {

enum class Precision { F32, F64 };
std::string_view precision_name(Precision p);
/// Accepts f32 / f64; throws ConfigError.
Precision parse_precision(std::string_view s);

enum class DataKind { Synthetic, TsrDir };

struct DataConfig {
  DataKind kind = DataKind::Synthetic;
  std::filesystem::path path;  // tsr_dir only
  SyntheticConfig synthetic;
};

/// Resolved run configuration. TOML layout:
///
///   [model]  variant, base_channels, stages, convs_per_block, dilation,
///            depthwise, expansion, ratio
///   [train]  preset, epochs, batch, lr, weight_decay, beta1, beta2, eps,
///            seed, hflip
///   [data]   kind = "synthetic" | "tsr_dir", path, height, width, channels,
///            n_train, n_val, n_test, fg_budget, min_blobs, max_blobs,
///            contrast, noise_sigma, seed
///   precision = "f32" | "f64"
///
/// Every key is optional. `dilation` configures the attention branch of fpa
/// (and must equal 6 / 9 for d6unet / d9unet); `ratio`, `depthwise` and
/// `expansion` configure the attention variants only. Unknown keys are
/// rejected so typos do not silently fall back to defaults.
struct RunConfig {
  NetworkSpec model = NetworkSpec::make(Variant::Unet);
  TrainConfig train;
  DataConfig data;
  Precision precision = Precision::F32;

  /// Canonical TOML text; parse_run_config(to_toml()) reproduces *this.
  std::string to_toml() const;
};

/// Dotted-key overrides applied on top of the file, e.g.
/// {"model.variant", "fpa"}. Values are parsed as TOML scalars, falling back
/// to strings.
using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Throws ConfigError on syntax errors, unknown keys, wrong types or an
/// invalid combination.
RunConfig parse_run_config(std::string_view toml_text, const Overrides& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, const Overrides& overrides = {});

}  // namespace erfseg::cli
