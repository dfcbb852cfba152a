#pragma once

// TSR1 binary tensor format:
//   "TSR1" | u8 dtype (0 = f32, 1 = f64) | u32 rank | rank x u32 extents |
//   row-major little-endian scalars.

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "erfseg/tensor.hpp"

namespace erfseg {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

template <typename T>
void write_tsr(std::ostream& out, const Tensor<T>& t);

/// Reads one TSR1 record; scalars of the other dtype are converted to T.
template <typename T>
Tensor<T> read_tsr(std::istream& in);

template <typename T>
void save_tsr(const std::filesystem::path& path, const Tensor<T>& t);

template <typename T>
Tensor<T> load_tsr(const std::filesystem::path& path);

namespace le {
void put_u16(std::ostream& out, std::uint16_t v);
void put_u32(std::ostream& out, std::uint32_t v);
std::uint16_t get_u16(std::istream& in);
std::uint32_t get_u32(std::istream& in);
}  // namespace le

}  // namespace erfseg
