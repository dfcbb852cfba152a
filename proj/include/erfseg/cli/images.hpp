#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "erfseg/metrics/metrics.hpp"
#include "erfseg/tensor.hpp"

namespace erfseg::cli {

using Rgb = std::array<std::uint8_t, 3>;

/// Difference-map legend.
inline constexpr Rgb kTruePositive{255, 255, 0};  // yellow
inline constexpr Rgb kFalseNegative{0, 0, 255};   // blue
inline constexpr Rgb kFalsePositive{255, 0, 0};   // red
inline constexpr Rgb kTrueNegative{0, 0, 0};      // black

/// Binary P5 PGM with maxval 65535 (big-endian samples). `grid` is [H, W],
/// non-negative; values are scaled so the grid maximum maps to 65535
/// (round half up). An all-zero grid writes zeros.
void write_pgm16(const std::filesystem::path& path, const Tensor<double>& grid);

/// Per-pixel legend colour of (pred, gt), row-major RGB triples.
std::vector<Rgb> difference_map(const BinaryMask& pred, const BinaryMask& gt);

/// Binary P6 PPM, maxval 255.
void write_ppm(const std::filesystem::path& path, std::size_t h, std::size_t w, const std::vector<Rgb>& pixels);

}  // namespace erfseg::cli
