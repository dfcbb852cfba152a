#include "erfseg/cli/images.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "erfseg/error.hpp"

namespace erfseg::cli {

void write_pgm16(const std::filesystem::path& path, const Tensor<double>& grid) {
  if (grid.rank() != 2) throw ShapeError("write_pgm16 expects [H, W], got " + shape_str(grid.shape()));
  const std::size_t h = grid.dim(0), w = grid.dim(1);
  double peak = 0.0;
  for (double v : grid.data()) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::domain_error("write_pgm16: values must be finite and >= 0");
    peak = std::max(peak, v);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << w << ' ' << h << "\n65535\n";
  for (double v : grid.data()) {
    const auto q = peak > 0.0 ? static_cast<std::uint16_t>(std::floor(v / peak * 65535.0 + 0.5)) : std::uint16_t{0};
    const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
    out.write(bytes, 2);
  }
  if (!out) throw IoError("cannot write " + path.string());
}

std::vector<Rgb> difference_map(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.h != gt.h || pred.w != gt.w) throw ShapeError("difference_map: mask extents differ");
  std::vector<Rgb> px(pred.data.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    px[i] = p && g ? kTruePositive : g ? kFalseNegative : p ? kFalsePositive : kTrueNegative;
  }
  return px;
}

void write_ppm(const std::filesystem::path& path, std::size_t h, std::size_t w, const std::vector<Rgb>& pixels) {
  if (pixels.size() != h * w) throw ShapeError("write_ppm: pixel count does not match extents");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << w << ' ' << h << "\n255\n";
  for (const auto& p : pixels) out.write(reinterpret_cast<const char*>(p.data()), 3);
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace erfseg::cli
