#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <type_traits>
#include <vector>

#include "erfseg/metrics/metrics.hpp"
#include "erfseg/net/network.hpp"
#include "erfseg/train/adamw.hpp"
#include "erfseg/train/synthetic.hpp"

namespace erfseg {

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 8;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9, beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  double augment_hflip_prob = 0.5;

  /// Throws ConfigError.
  void validate() const;
  AdamWConfig adamw() const;

  /// Named schedules: `desk` (the defaults above), `cityscapes`, `brats`, `isles`.
  static TrainConfig preset(std::string_view name);
};

/// One row of curves.csv. Validation metrics are absent without a val split.
struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_iou, val_hd95, val_fn;
};

void write_curves_csv(std::ostream& out, const std::vector<EpochRecord>& curve);
std::vector<EpochRecord> read_curves_csv(std::istream& in);

/// Everything needed to continue a run exactly where it stopped.
template <typename T>
struct TrainState {
  ParamStore<T> params;
  OptimizerState<T> optimizer;
  ParamStore<T> best;  // parameters of the best-validation epoch so far
  std::optional<double> best_val_iou;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> curve;

  std::size_t epochs_done() const { return curve.size(); }

  /// Fresh state for `params` (copied into `best` as the epoch-0 fallback).
  static TrainState start(ParamStore<T> params);
};

/// Run directory layout: last.ckpt (current parameters), optimizer.ckpt
/// (moments plus meta.* scalars), checkpoint.ckpt (best parameters) and
/// curves.csv. Files are replaced atomically.
template <typename T>
void save_train_state(const std::filesystem::path& dir, const TrainState<T>& state);
template <typename T>
TrainState<T> load_train_state(const std::filesystem::path& dir);

/// Called after every completed epoch (e.g. to persist the state).
template <typename T>
using EpochCallback = std::function<void(const TrainState<T>&, const EpochRecord&)>;

/// Continues `state` up to cfg.epochs. Each epoch: seeded shuffle of the
/// train split, seeded flip augmentation, mini-batches of dice loss on
/// sigmoid(logits), AdamW; then validation metrics and best-val-IoU
/// selection (ties keep the earlier epoch; without a val split the last
/// epoch is best). Epoch e draws from streams keyed by (seed, e) only, so a
/// resumed run reproduces an uninterrupted one bitwise. Throws NumericError
/// when the loss or a parameter becomes non-finite.
template <typename T>
void train(const Network& net, TrainState<T>& state, const Dataset& data, const TrainConfig& cfg,
           const std::type_identity_t<EpochCallback<T>>& on_epoch = {});

struct Prediction {
  std::string case_id;
  BinaryMask pred, gt;
};

struct Evaluation {
  MetricsReport report;
  std::vector<Prediction> predictions;
};

/// Thresholds sigmoid(logits) at 0.5 and scores every case in `cases`.
template <typename T>
Evaluation evaluate(const Network& net, ParamStore<T>& params, const std::vector<const Sample*>& cases,
                    std::size_t batch_size = 8);

/// Stacks samples into [B, C, H, W] images and [B, 1, H, W] masks.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> make_batch(const std::vector<const Sample*>& samples);

BinaryMask to_mask(const Tensor<float>& mask);

}  // namespace erfseg
