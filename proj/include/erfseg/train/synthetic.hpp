#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "erfseg/tensor.hpp"

namespace erfseg {

/// Rotated ellipse in pixel coordinates (row = y, col = x, pixel centres at
/// integers). A pixel belongs to it iff u^2/rx^2 + v^2/ry^2 <= 1 with
///   u =  (x - cx) cos(theta) + (y - cy) sin(theta)
///   v = -(x - cx) sin(theta) + (y - cy) cos(theta).
struct Ellipse {
  double cy = 0, cx = 0, ry = 1, rx = 1, theta = 0;

  /// Normalised radial coordinate sqrt(u^2/rx^2 + v^2/ry^2).
  double radial(double y, double x) const;
  bool contains(double y, double x) const { return radial(y, x) <= 1.0; }
};

enum class Split { Train, Val, Test };
std::string_view split_name(Split s);
/// Throws ConfigError on anything but train/val/test.
Split parse_split(std::string_view s);

struct Sample {
  std::string case_id;
  Split split = Split::Train;
  Tensor<float> image;  // [C, H, W]
  Tensor<float> mask;   // [1, H, W], values in {0, 1}
  std::vector<Ellipse> blobs;  // generating shapes; empty for loaded data

  std::size_t foreground() const;
  double foreground_fraction() const;
};

struct Dataset {
  std::vector<Sample> samples;

  std::vector<const Sample*> split(Split s) const;
  std::size_t channels() const;
  std::size_t height() const;
  std::size_t width() const;
  /// Shapes agree across samples and masks are binary; throws ConfigError.
  void validate() const;
};

/// Class-imbalanced blob segmentation task. Each image is Gaussian noise
/// plus 1..k soft-edged elliptical blobs whose intensity falls to half at the
/// ellipse boundary, so rim pixels are genuinely ambiguous.
struct SyntheticConfig {
  std::size_t height = 64, width = 64, channels = 4;
  std::size_t n_train = 140, n_val = 20, n_test = 40;
  double fg_budget = 0.05;      // per-sample upper bound on the foreground fraction
  double fg_min_share = 0.3;    // per-sample target fraction drawn from [share, 1] * budget
  std::size_t min_blobs = 1, max_blobs = 3;
  double min_aspect = 0.5;      // ry / rx lower bound
  double contrast = 1.0;        // peak blob intensity above background
  double edge_softness = 0.15;  // logistic width of the rim in radial units
  double noise_sigma = 0.35;
  std::uint64_t seed = 0;

  /// Throws ConfigError, including when the smallest admissible blobs cannot
  /// fit within the foreground budget or the frame.
  void validate() const;
  std::size_t total() const { return n_train + n_val + n_test; }
};

/// Deterministic per (cfg.seed, index): sample i is the same whatever the
/// split sizes of the other samples.
Sample generate_sample(const SyntheticConfig& cfg, std::size_t index);
Dataset generate_synthetic(const SyntheticConfig& cfg);

/// Rasterises the union of `blobs` on an h x w grid ([1, h, w]).
Tensor<float> rasterize(const std::vector<Ellipse>& blobs, std::size_t h, std::size_t w);

/// Mirror image and mask (and generating ellipses) about the vertical axis.
Sample hflip(const Sample& s);
/// Flips with probability p (one uniform draw from `rng`).
Sample augment_hflip(const Sample& s, double p, std::mt19937_64& rng);

/// Layout: images/<case>.tsr, masks/<case>.tsr and index.csv with header
/// case_id,image_path,mask_path,split (paths relative to `dir`).
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace erfseg
