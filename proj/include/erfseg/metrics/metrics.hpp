#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "erfseg/tensor.hpp"

namespace erfseg {

/// H x W foreground mask with isotropic pixel spacing.
struct BinaryMask {
  std::size_t h = 0, w = 0;
  std::vector<std::uint8_t> data;  // 0 / 1, row-major
  double spacing = 1.0;

  BinaryMask() = default;
  BinaryMask(std::size_t h_, std::size_t w_) : h(h_), w(w_), data(h_ * w_, 0) {}

  bool operator()(std::size_t i, std::size_t j) const { return data[i * w + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v) { data[i * w + j] = v ? 1 : 0; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
};

/// mask = prob > threshold (ties are background). `prob` is [H, W] or
/// [1, 1, H, W] with values in [0, 1]; throws std::domain_error otherwise.
template <typename T>
BinaryMask binarize(const Tensor<T>& prob, double threshold = 0.5);

/// |pred & gt| / |pred | gt|; both empty gives 1. Throws ShapeError on
/// mismatched extents.
double iou(const BinaryMask& pred, const BinaryMask& gt);

/// max of the two directed 95th-percentile point-to-set distances between
/// foreground pixel centres (Euclidean, scaled by spacing; percentile by
/// linear interpolation). Undefined (nullopt) if either mask is empty.
std::optional<double> hd95(const BinaryMask& pred, const BinaryMask& gt);

/// Squared Euclidean distance (in pixels) from every pixel to the nearest
/// foreground pixel of `mask`; exact integers. Requires a non-empty mask.
std::vector<double> squared_distance_transform(const BinaryMask& mask);

/// Linear-interpolation percentile of `values` (q in [0, 100]); sorts in place.
double percentile(std::vector<double>& values, double q);

struct ErrorRates {
  std::optional<double> fp_rate;  // FP / (FP + TN), undefined without background
  std::optional<double> fn_rate;  // FN / (FN + TP), undefined without foreground
};

ErrorRates fp_fn_rates(const BinaryMask& pred, const BinaryMask& gt);

struct CaseMetrics {
  std::string case_id;
  std::optional<double> iou, hd95, fp_rate, fn_rate;
};

CaseMetrics evaluate_case(std::string case_id, const BinaryMask& pred, const BinaryMask& gt);

/// Mean and population standard deviation over defined values.
struct Summary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
  std::size_t excluded = 0;
};

Summary summarize(const std::vector<std::optional<double>>& values);

struct MetricsReport {
  std::vector<CaseMetrics> cases;
  Summary iou, hd95, fp_rate, fn_rate;
  std::size_t param_count = 0;
};

MetricsReport aggregate(std::vector<CaseMetrics> cases, std::size_t param_count = 0);

/// `case_id,iou,hd95,fp_rate,fn_rate`, one row per case, then a `mean±std`
/// row and an `excluded` row counting undefined values. Undefined values are
/// empty fields.
void write_metrics_csv(std::ostream& out, const MetricsReport& report);

/// Shortest round-trip decimal representation.
std::string format_number(double v);

}  // namespace erfseg
