#include "erfseg/metrics/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "erfseg/error.hpp"

namespace erfseg {

namespace {

void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* op) {
  if (a.h != b.h || a.w != b.w) {
    throw ShapeError(std::string(op) + ": mask shapes differ (" + std::to_string(a.h) + "x" + std::to_string(a.w) +
                     " vs " + std::to_string(b.h) + "x" + std::to_string(b.w) + ")");
  }
}

// Felzenszwalb-Huttenlocher lower envelope of parabolas on one line. f holds
// squared distances (inf = no site); d receives the transformed line.
void edt_1d(const double* f, std::size_t n, std::size_t stride, double* d, std::vector<std::size_t>& v,
            std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::size_t k = 0;
  std::size_t first = n;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q * stride] != inf) {
      first = q;
      break;
    }
  }
  if (first == n) {
    for (std::size_t q = 0; q < n; ++q) d[q * stride] = inf;
    return;
  }
  v[0] = first;
  z[0] = -inf;
  z[1] = inf;
  for (std::size_t q = first + 1; q < n; ++q) {
    const double fq = f[q * stride];
    if (fq == inf) continue;
    const double qd = static_cast<double>(q);
    double s;
    // z[0] = -inf, so the envelope never pops its first parabola.
    while (true) {
      const double vk = static_cast<double>(v[k]);
      s = ((fq + qd * qd) - (f[v[k] * stride] + vk * vk)) / (2.0 * (qd - vk));
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double qd = static_cast<double>(q);
    while (z[k + 1] < qd) ++k;
    const double diff = qd - static_cast<double>(v[k]);
    d[q * stride] = diff * diff + f[v[k] * stride];
  }
}

std::vector<double> directed_distances(const BinaryMask& from, const std::vector<double>& sq_to, double spacing) {
  std::vector<double> out;
  for (std::size_t i = 0; i < from.data.size(); ++i) {
    if (from.data[i]) out.push_back(std::sqrt(sq_to[i]) * spacing);
  }
  return out;
}

}  // namespace

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

template <typename T>
BinaryMask binarize(const Tensor<T>& prob, double threshold) {
  std::size_t h = 0, w = 0;
  if (prob.rank() == 2) {
    h = prob.dim(0);
    w = prob.dim(1);
  } else if (prob.rank() == 4 && prob.dim(0) == 1 && prob.dim(1) == 1) {
    h = prob.dim(2);
    w = prob.dim(3);
  } else {
    throw ShapeError("binarize expects [H, W] or [1, 1, H, W], got " + shape_str(prob.shape()));
  }
  BinaryMask m(h, w);
  for (std::size_t i = 0; i < prob.numel(); ++i) {
    const double p = static_cast<double>(prob[i]);
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("binarize: probability outside [0, 1]");
    m.data[i] = p > threshold ? 1 : 0;
  }
  return m;
}

double iou(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt, "iou");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    inter += pred.data[i] & gt.data[i];
    uni += pred.data[i] | gt.data[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<double> squared_distance_transform(const BinaryMask& mask) {
  if (mask.empty()) throw std::invalid_argument("distance transform of an empty mask");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> f(mask.data.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = mask.data[i] ? 0.0 : inf;
  std::vector<double> tmp(f.size());
  const std::size_t n = std::max(mask.h, mask.w);
  std::vector<std::size_t> v(n);
  std::vector<double> z(n + 1);
  for (std::size_t j = 0; j < mask.w; ++j) edt_1d(f.data() + j, mask.h, mask.w, tmp.data() + j, v, z);
  for (std::size_t i = 0; i < mask.h; ++i) edt_1d(tmp.data() + i * mask.w, mask.w, 1, f.data() + i * mask.w, v, z);
  return f;
}

double percentile(std::vector<double>& values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty list");
  if (!(q >= 0.0 && q <= 100.0)) throw std::invalid_argument("percentile outside [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::optional<double> hd95(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt, "hd95");
  if (pred.empty() || gt.empty()) return std::nullopt;
  auto pg = directed_distances(pred, squared_distance_transform(gt), pred.spacing);
  auto gp = directed_distances(gt, squared_distance_transform(pred), gt.spacing);
  return std::max(percentile(pg, 95.0), percentile(gp, 95.0));
}

ErrorRates fp_fn_rates(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt, "fp_fn_rates");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = pred.data[i], g = gt.data[i];
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
    tn += !p && !g;
  }
  ErrorRates r;
  if (fp + tn > 0) r.fp_rate = static_cast<double>(fp) / static_cast<double>(fp + tn);
  if (fn + tp > 0) r.fn_rate = static_cast<double>(fn) / static_cast<double>(fn + tp);
  return r;
}

CaseMetrics evaluate_case(std::string case_id, const BinaryMask& pred, const BinaryMask& gt) {
  CaseMetrics m;
  m.case_id = std::move(case_id);
  m.iou = iou(pred, gt);
  m.hd95 = hd95(pred, gt);
  const auto rates = fp_fn_rates(pred, gt);
  m.fp_rate = rates.fp_rate;
  m.fn_rate = rates.fn_rate;
  return m;
}

Summary summarize(const std::vector<std::optional<double>>& values) {
  Summary s;
  for (const auto& v : values) {
    if (v) {
      s.mean += *v;
      ++s.count;
    } else {
      ++s.excluded;
    }
  }
  if (s.count == 0) return s;
  s.mean /= static_cast<double>(s.count);
  for (const auto& v : values) {
    if (v) s.std += (*v - s.mean) * (*v - s.mean);
  }
  s.std = std::sqrt(s.std / static_cast<double>(s.count));
  return s;
}

MetricsReport aggregate(std::vector<CaseMetrics> cases, std::size_t param_count) {
  MetricsReport r;
  std::vector<std::optional<double>> iou_v, hd_v, fp_v, fn_v;
  for (const auto& c : cases) {
    iou_v.push_back(c.iou);
    hd_v.push_back(c.hd95);
    fp_v.push_back(c.fp_rate);
    fn_v.push_back(c.fn_rate);
  }
  r.iou = summarize(iou_v);
  r.hd95 = summarize(hd_v);
  r.fp_rate = summarize(fp_v);
  r.fn_rate = summarize(fn_v);
  r.cases = std::move(cases);
  r.param_count = param_count;
  return r;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_metrics_csv(std::ostream& out, const MetricsReport& report) {
  auto field = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  auto summary = [](const Summary& s) {
    return s.count == 0 ? std::string() : format_number(s.mean) + "±" + format_number(s.std);
  };
  out << "case_id,iou,hd95,fp_rate,fn_rate\n";
  for (const auto& c : report.cases) {
    out << c.case_id << ',' << field(c.iou) << ',' << field(c.hd95) << ',' << field(c.fp_rate) << ','
        << field(c.fn_rate) << '\n';
  }
  out << "mean±std," << summary(report.iou) << ',' << summary(report.hd95) << ',' << summary(report.fp_rate) << ','
      << summary(report.fn_rate) << '\n';
  out << "excluded," << report.iou.excluded << ',' << report.hd95.excluded << ',' << report.fp_rate.excluded << ','
      << report.fn_rate.excluded << '\n';
}

template BinaryMask binarize<float>(const Tensor<float>&, double);
template BinaryMask binarize<double>(const Tensor<double>&, double);

}  // namespace erfseg
