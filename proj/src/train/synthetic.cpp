#include "erfseg/train/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "erfseg/error.hpp"
#include "erfseg/hash.hpp"
#include "erfseg/tsr_io.hpp"

namespace erfseg {

double Ellipse::radial(double y, double x) const {
  const double dx = x - cx, dy = y - cy;
  const double c = std::cos(theta), s = std::sin(theta);
  const double u = dx * c + dy * s;
  const double v = -dx * s + dy * c;
  return std::sqrt((u * u) / (rx * rx) + (v * v) / (ry * ry));
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split '" + std::string(s) + "' (expected train, val or test)");
}

std::size_t Sample::foreground() const {
  return static_cast<std::size_t>(std::count(mask.data().begin(), mask.data().end(), 1.0f));
}

double Sample::foreground_fraction() const {
  return static_cast<double>(foreground()) / static_cast<double>(mask.numel());
}

std::vector<const Sample*> Dataset::split(Split s) const {
  std::vector<const Sample*> out;
  for (const auto& smp : samples) {
    if (smp.split == s) out.push_back(&smp);
  }
  return out;
}

std::size_t Dataset::channels() const { return samples.empty() ? 0 : samples.front().image.dim(0); }
std::size_t Dataset::height() const { return samples.empty() ? 0 : samples.front().image.dim(1); }
std::size_t Dataset::width() const { return samples.empty() ? 0 : samples.front().image.dim(2); }

void Dataset::validate() const {
  if (samples.empty()) throw ConfigError("dataset is empty");
  const Shape img = samples.front().image.shape();
  if (img.size() != 3) throw ConfigError("images must be [C, H, W], got " + shape_str(img));
  const Shape msk{1, img[1], img[2]};
  for (const auto& s : samples) {
    if (s.image.shape() != img) {
      throw ConfigError("case " + s.case_id + ": image " + shape_str(s.image.shape()) + " differs from " + shape_str(img));
    }
    if (s.mask.shape() != msk) {
      throw ConfigError("case " + s.case_id + ": mask " + shape_str(s.mask.shape()) + " expected " + shape_str(msk));
    }
    for (float v : s.mask.data()) {
      if (v != 0.0f && v != 1.0f) throw ConfigError("case " + s.case_id + ": mask is not binary");
    }
  }
}

void SyntheticConfig::validate() const {
  if (height < 8 || width < 8) throw ConfigError("synthetic images must be at least 8x8");
  if (channels == 0) throw ConfigError("synthetic images need at least one channel");
  if (total() == 0) throw ConfigError("synthetic dataset must contain at least one case");
  if (!(fg_budget > 0.0 && fg_budget <= 0.10)) throw ConfigError("foreground budget must lie in (0, 0.10]");
  if (!(fg_min_share > 0.0 && fg_min_share <= 1.0)) throw ConfigError("fg_min_share must lie in (0, 1]");
  if (min_blobs == 0 || max_blobs < min_blobs) throw ConfigError("blob count range must satisfy 1 <= min <= max");
  if (!(min_aspect > 0.0 && min_aspect <= 1.0)) throw ConfigError("min_aspect must lie in (0, 1]");
  if (!(edge_softness > 0.0) || !(noise_sigma >= 0.0) || !std::isfinite(contrast)) {
    throw ConfigError("edge_softness must be > 0, noise_sigma >= 0 and contrast finite");
  }
  const double frame = static_cast<double>(height * width);
  // Smallest blob: minimum target share split over the most blobs, thinnest
  // aspect. Its minor radius must reach one pixel or it may rasterise empty.
  const double min_area = fg_min_share * fg_budget * frame / static_cast<double>(max_blobs);
  if (std::sqrt(min_area * min_aspect / std::numbers::pi) < 1.0) {
    throw ConfigError("foreground budget too small: blobs cannot be rasterised at " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
  const double max_area = fg_budget * frame / static_cast<double>(min_blobs);
  const double max_radius = std::sqrt(max_area / (std::numbers::pi * min_aspect));
  if (2.0 * max_radius + 3.0 > static_cast<double>(std::min(height, width))) {
    throw ConfigError("foreground budget too large: blobs cannot fit inside the frame");
  }
}

Tensor<float> rasterize(const std::vector<Ellipse>& blobs, std::size_t h, std::size_t w) {
  Tensor<float> mask(Shape{1, h, w});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      for (const auto& e : blobs) {
        if (e.contains(static_cast<double>(i), static_cast<double>(j))) {
          mask[i * w + j] = 1.0f;
          break;
        }
      }
    }
  }
  return mask;
}

namespace {

std::string case_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%04zu", index);
  return buf;
}

std::vector<Ellipse> draw_blobs(const SyntheticConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> count(cfg.min_blobs, cfg.max_blobs);
  const double frame = static_cast<double>(cfg.height * cfg.width);
  const std::size_t k = count(rng);
  const double target = (cfg.fg_min_share + (1.0 - cfg.fg_min_share) * unit(rng)) * cfg.fg_budget * frame;
  std::vector<Ellipse> blobs(k);
  for (auto& e : blobs) {
    const double area = target / static_cast<double>(k);
    const double aspect = cfg.min_aspect + (1.0 - cfg.min_aspect) * unit(rng);
    e.rx = std::sqrt(area / (std::numbers::pi * aspect));
    e.ry = aspect * e.rx;
    e.theta = std::numbers::pi * unit(rng);
    const double margin = e.rx + 1.0;
    e.cy = margin + (static_cast<double>(cfg.height) - 1.0 - 2.0 * margin) * unit(rng);
    e.cx = margin + (static_cast<double>(cfg.width) - 1.0 - 2.0 * margin) * unit(rng);
  }
  return blobs;
}

}  // namespace

Sample generate_sample(const SyntheticConfig& cfg, std::size_t index) {
  cfg.validate();
  if (index >= cfg.total()) throw ConfigError("sample index out of range");
  std::mt19937_64 rng(derive_seed(cfg.seed, index));
  Sample s;
  s.case_id = case_name(index);
  s.split = index < cfg.n_train ? Split::Train : index < cfg.n_train + cfg.n_val ? Split::Val : Split::Test;

  // Rejection keeps every mask non-empty and within budget; overlaps and
  // rasterisation can move the realised fraction away from the target.
  constexpr int kAttempts = 256;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    auto blobs = draw_blobs(cfg, rng);
    auto mask = rasterize(blobs, cfg.height, cfg.width);
    const auto fg = std::count(mask.data().begin(), mask.data().end(), 1.0f);
    if (fg > 0 && static_cast<double>(fg) <= cfg.fg_budget * static_cast<double>(mask.numel())) {
      s.blobs = std::move(blobs);
      s.mask = std::move(mask);
      break;
    }
  }
  if (s.blobs.empty()) throw ConfigError("could not place blobs within the foreground budget for " + s.case_id);

  const std::size_t h = cfg.height, w = cfg.width;
  std::vector<float> shape_intensity(h * w, 0.0f);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double v = 0.0;
      for (const auto& e : s.blobs) {
        const double q = e.radial(static_cast<double>(i), static_cast<double>(j));
        v = std::max(v, 1.0 / (1.0 + std::exp((q - 1.0) / cfg.edge_softness)));
      }
      shape_intensity[i * w + j] = static_cast<float>(v);
    }
  }
  std::uniform_real_distribution<double> gain(0.6, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  s.image = Tensor<float>(Shape{cfg.channels, h, w});
  for (std::size_t c = 0; c < cfg.channels; ++c) {
    // Alternate polarity so channels resemble modalities with bright and dark lesions.
    const double g = (c % 2 == 0 ? 1.0 : -1.0) * cfg.contrast * gain(rng);
    for (std::size_t p = 0; p < h * w; ++p) {
      s.image[c * h * w + p] = static_cast<float>(g * shape_intensity[p] + cfg.noise_sigma * noise(rng));
    }
  }
  return s;
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Dataset d;
  d.samples.reserve(cfg.total());
  for (std::size_t i = 0; i < cfg.total(); ++i) d.samples.push_back(generate_sample(cfg, i));
  return d;
}

Sample hflip(const Sample& s) {
  Sample out = s;
  const std::size_t w = s.image.dim(2);
  const std::size_t rows_img = s.image.numel() / w, rows_mask = s.mask.numel() / w;
  for (std::size_t r = 0; r < rows_img; ++r) {
    for (std::size_t j = 0; j < w; ++j) out.image[r * w + j] = s.image[r * w + (w - 1 - j)];
  }
  for (std::size_t r = 0; r < rows_mask; ++r) {
    for (std::size_t j = 0; j < w; ++j) out.mask[r * w + j] = s.mask[r * w + (w - 1 - j)];
  }
  for (auto& e : out.blobs) {
    e.cx = static_cast<double>(w - 1) - e.cx;
    e.theta = -e.theta;
  }
  return out;
}

Sample augment_hflip(const Sample& s, double p, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("flip probability must lie in [0, 1]");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return unit(rng) < p ? hflip(s) : s;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  std::ostringstream index;
  index << "case_id,image_path,mask_path,split\n";
  for (const auto& s : data.samples) {
    const std::string img = "images/" + s.case_id + ".tsr", msk = "masks/" + s.case_id + ".tsr";
    save_tsr(dir / img, s.image);
    save_tsr(dir / msk, s.mask);
    index << s.case_id << ',' << img << ',' << msk << ',' << split_name(s.split) << '\n';
  }
  std::ofstream out(dir / "index.csv", std::ios::binary);
  out << index.str();
  if (!out) throw IoError("cannot write " + (dir / "index.csv").string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.csv");
  if (!in) throw IoError("cannot open " + (dir / "index.csv").string());
  std::string line;
  if (!std::getline(in, line) || line != "case_id,image_path,mask_path,split") {
    throw IoError((dir / "index.csv").string() + ": unexpected header");
  }
  Dataset d;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (fields.size() != 4) throw IoError("index.csv line " + std::to_string(lineno) + ": expected 4 fields");
    Sample s;
    s.case_id = fields[0];
    s.image = load_tsr<float>(dir / fields[1]);
    s.mask = load_tsr<float>(dir / fields[2]);
    s.split = parse_split(fields[3]);
    d.samples.push_back(std::move(s));
  }
  d.validate();
  return d;
}

}  // namespace erfseg
