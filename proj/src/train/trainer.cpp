#include "erfseg/train/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "erfseg/error.hpp"
#include "erfseg/hash.hpp"
#include "erfseg/nn/checkpoint.hpp"
#include "erfseg/nn/layers.hpp"
#include "erfseg/ops.hpp"
#include "erfseg/train/dice.hpp"

namespace erfseg {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (!(augment_hflip_prob >= 0.0 && augment_hflip_prob <= 1.0)) {
    throw ConfigError("augment_hflip_prob must lie in [0, 1]");
  }
  adamw().validate();
}

AdamWConfig TrainConfig::adamw() const {
  return AdamWConfig{learning_rate, beta1, beta2, eps, weight_decay};
}

TrainConfig TrainConfig::preset(std::string_view name) {
  TrainConfig c;
  if (name == "desk") return c;
  if (name == "cityscapes") {
    c.epochs = 100, c.batch_size = 8, c.learning_rate = 2e-4;
  } else if (name == "brats") {
    c.epochs = 50, c.batch_size = 50, c.learning_rate = 1e-4;
  } else if (name == "isles") {
    c.epochs = 60, c.batch_size = 80, c.learning_rate = 1e-3;
  } else {
    throw ConfigError("unknown training preset '" + std::string(name) + "' (expected desk, cityscapes, brats, isles)");
  }
  return c;
}

namespace {

constexpr std::string_view kCurvesHeader = "epoch,train_loss,val_iou,val_hd95,val_fn";

void put_optional(std::ostream& out, const std::optional<double>& v) {
  out << ',';
  if (v) out << format_number(*v);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw IoError("curves.csv: bad number '" + s + "'");
  return v;
}

std::optional<double> parse_optional(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return parse_double(s);
}

}  // namespace

void write_curves_csv(std::ostream& out, const std::vector<EpochRecord>& curve) {
  out << kCurvesHeader << '\n';
  for (const auto& r : curve) {
    out << r.epoch << ',' << format_number(r.train_loss);
    put_optional(out, r.val_iou);
    put_optional(out, r.val_hd95);
    put_optional(out, r.val_fn);
    out << '\n';
  }
}

std::vector<EpochRecord> read_curves_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCurvesHeader) throw IoError("curves.csv: unexpected header");
  std::vector<EpochRecord> curve;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) {
      f.push_back(line.substr(start, pos - start));
    }
    f.push_back(line.substr(start));
    if (f.size() != 5) throw IoError("curves.csv: expected 5 fields in '" + line + "'");
    EpochRecord r;
    r.epoch = static_cast<std::size_t>(parse_double(f[0]));
    r.train_loss = parse_double(f[1]);
    r.val_iou = parse_optional(f[2]);
    r.val_hd95 = parse_optional(f[3]);
    r.val_fn = parse_optional(f[4]);
    if (r.epoch != curve.size() + 1) throw IoError("curves.csv: epochs must be consecutive from 1");
    curve.push_back(r);
  }
  return curve;
}

template <typename T>
TrainState<T> TrainState<T>::start(ParamStore<T> params) {
  TrainState s;
  s.optimizer = OptimizerState<T>::zeros_like(params);
  s.best = params;
  s.params = std::move(params);
  return s;
}

template <typename T>
void save_train_state(const std::filesystem::path& dir, const TrainState<T>& state) {
  std::filesystem::create_directories(dir);
  ParamStore<T> opt;
  for (const auto& [name, t] : state.optimizer.m) opt.insert("m." + name, t);
  for (const auto& [name, t] : state.optimizer.v) opt.insert("v." + name, t);
  opt.insert("meta.step", Tensor<T>(Shape{1}, static_cast<T>(state.optimizer.step)));
  save_checkpoint(dir / "last.ckpt", state.params);
  save_checkpoint(dir / "optimizer.ckpt", opt);
  save_checkpoint(dir / "checkpoint.ckpt", state.best);
  const auto tmp = dir / "curves.csv.tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    write_curves_csv(out, state.curve);
    if (!out) throw IoError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, dir / "curves.csv");
}

template <typename T>
TrainState<T> load_train_state(const std::filesystem::path& dir) {
  TrainState<T> s;
  s.params = load_checkpoint<T>(dir / "last.ckpt");
  s.best = load_checkpoint<T>(dir / "checkpoint.ckpt");
  const auto opt = load_checkpoint<T>(dir / "optimizer.ckpt");
  for (const auto& [name, t] : opt) {
    if (name.rfind("m.", 0) == 0) {
      s.optimizer.m.insert(name.substr(2), t);
    } else if (name.rfind("v.", 0) == 0) {
      s.optimizer.v.insert(name.substr(2), t);
    }
  }
  s.optimizer.step = static_cast<std::uint64_t>(opt.get("meta.step")[0]);
  if (s.optimizer.m.names() != s.params.names() || s.optimizer.v.names() != s.params.names()) {
    throw IoError("optimizer.ckpt does not match last.ckpt");
  }
  std::ifstream in(dir / "curves.csv");
  if (!in) throw IoError("cannot open " + (dir / "curves.csv").string());
  s.curve = read_curves_csv(in);
  // The best epoch is recomputed from the exact curve values rather than stored.
  for (const auto& r : s.curve) {
    if (r.val_iou && (!s.best_val_iou || *r.val_iou > *s.best_val_iou)) {
      s.best_val_iou = r.val_iou;
      s.best_epoch = r.epoch;
    }
  }
  if (!s.best_val_iou && !s.curve.empty()) s.best_epoch = s.curve.back().epoch;
  return s;
}

BinaryMask to_mask(const Tensor<float>& mask) {
  const std::size_t w = mask.dim(mask.rank() - 1), h = mask.numel() / w;
  BinaryMask m(h, w);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = mask[i] > 0.5f ? 1 : 0;
  return m;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> make_batch(const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw ShapeError("make_batch: no samples");
  const Shape& s0 = samples.front()->image.shape();
  const std::size_t c = s0[0], h = s0[1], w = s0[2], img = c * h * w, plane = h * w;
  Tensor<T> images(Shape{samples.size(), c, h, w}), masks(Shape{samples.size(), 1, h, w});
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const Sample& s = *samples[b];
    if (s.image.shape() != s0) throw ShapeError("make_batch: case " + s.case_id + " has shape " + shape_str(s.image.shape()));
    for (std::size_t i = 0; i < img; ++i) images[b * img + i] = static_cast<T>(s.image[i]);
    for (std::size_t i = 0; i < plane; ++i) masks[b * plane + i] = static_cast<T>(s.mask[i]);
  }
  return {std::move(images), std::move(masks)};
}

template <typename T>
Evaluation evaluate(const Network& net, ParamStore<T>& params, const std::vector<const Sample*>& cases,
                    std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  Evaluation ev;
  std::vector<CaseMetrics> rows;
  for (std::size_t first = 0; first < cases.size(); first += batch_size) {
    const std::vector<const Sample*> chunk(cases.begin() + static_cast<std::ptrdiff_t>(first),
                                           cases.begin() + static_cast<std::ptrdiff_t>(std::min(first + batch_size, cases.size())));
    const auto [images, masks] = make_batch<T>(chunk);
    const Tensor<T> logits = net.predict(params, images);
    const std::size_t h = logits.dim(2), w = logits.dim(3);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      Tensor<T> prob(Shape{h, w});
      for (std::size_t i = 0; i < h * w; ++i) prob[i] = stable_sigmoid(logits[b * h * w + i]);
      Prediction p{chunk[b]->case_id, binarize(prob), to_mask(chunk[b]->mask)};
      rows.push_back(evaluate_case(p.case_id, p.pred, p.gt));
      ev.predictions.push_back(std::move(p));
    }
  }
  ev.report = aggregate(std::move(rows), count_params(params));
  return ev;
}

template <typename T>
void train(const Network& net, TrainState<T>& state, const Dataset& data, const TrainConfig& cfg,
           const std::type_identity_t<EpochCallback<T>>& on_epoch) {
  cfg.validate();
  data.validate();
  const auto train_set = data.split(Split::Train);
  const auto val_set = data.split(Split::Val);
  if (train_set.empty()) throw ConfigError("dataset has no training cases");
  net.check_input(Shape{1, data.channels(), data.height(), data.width()});
  const AdamWConfig adam = cfg.adamw();
  state.params.set_requires_grad(true);

  for (std::size_t epoch = state.epochs_done() + 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(cfg.seed, epoch));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
      const std::size_t last = std::min(first + cfg.batch_size, order.size());
      std::vector<Sample> augmented;
      augmented.reserve(last - first);
      for (std::size_t k = first; k < last; ++k) {
        augmented.push_back(augment_hflip(*train_set[order[k]], cfg.augment_hflip_prob, rng));
      }
      std::vector<const Sample*> batch;
      for (const auto& s : augmented) batch.push_back(&s);
      const auto [images, masks] = make_batch<T>(batch);

      state.params.clear_grad();
      Tape<T> tape;
      ParamBinder<T> binder(tape, state.params);
      const auto out = net.forward<T>(binder, tape.constant(images));
      const Var<T> loss = dice_loss(sigmoid(out.logits), masks);
      const double value = static_cast<double>(loss.value().item());
      if (!std::isfinite(value)) {
        throw NumericError("training diverged: loss is " + format_number(value) + " at epoch " +
                           std::to_string(epoch) + ", batch starting at " + std::to_string(first));
      }
      tape.backward(loss);
      adamw_step(state.params, state.optimizer, adam);
      if (!state.params.all_finite()) {
        throw NumericError("training diverged: non-finite parameter after step " +
                           std::to_string(state.optimizer.step) + " (epoch " + std::to_string(epoch) + ")");
      }
      loss_sum += value * static_cast<double>(batch.size());
    }
    state.params.clear_grad();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    if (!val_set.empty()) {
      const auto report = evaluate(net, state.params, val_set, cfg.batch_size).report;
      if (report.iou.count) rec.val_iou = report.iou.mean;
      if (report.hd95.count) rec.val_hd95 = report.hd95.mean;
      if (report.fn_rate.count) rec.val_fn = report.fn_rate.mean;
    }
    const bool improved = val_set.empty() || (rec.val_iou && (!state.best_val_iou || *rec.val_iou > *state.best_val_iou));
    if (improved) {
      state.best = state.params;
      state.best.clear_grad();
      state.best_val_iou = rec.val_iou;
      state.best_epoch = epoch;
    }
    state.curve.push_back(rec);
    if (on_epoch) on_epoch(state, rec);
  }
}

#define ERFSEG_INSTANTIATE_TRAIN(T)                                                                                  \
  template struct TrainState<T>;                                                                                     \
  template void save_train_state<T>(const std::filesystem::path&, const TrainState<T>&);                            \
  template TrainState<T> load_train_state<T>(const std::filesystem::path&);                                         \
  template void train<T>(const Network&, TrainState<T>&, const Dataset&, const TrainConfig&,                        \
                         const EpochCallback<T>&);                                                                   \
  template Evaluation evaluate<T>(const Network&, ParamStore<T>&, const std::vector<const Sample*>&, std::size_t); \
  template std::pair<Tensor<T>, Tensor<T>> make_batch<T>(const std::vector<const Sample*>&);

ERFSEG_INSTANTIATE_TRAIN(float)
ERFSEG_INSTANTIATE_TRAIN(double)

}  // namespace erfseg
