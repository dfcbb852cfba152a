#include "erfseg/tsr_io.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "erfseg/error.hpp"

namespace erfseg {

namespace le {

namespace {
template <typename U>
void put(std::ostream& out, U v) {
  std::array<char, sizeof(U)> buf{};
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(buf.data(), buf.size());
}

template <typename U>
U get(std::istream& in) {
  std::array<unsigned char, sizeof(U)> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!in) throw IoError("unexpected end of stream");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}
}  // namespace

void put_u16(std::ostream& out, std::uint16_t v) { put(out, v); }
void put_u32(std::ostream& out, std::uint32_t v) { put(out, v); }
std::uint16_t get_u16(std::istream& in) { return get<std::uint16_t>(in); }
std::uint32_t get_u32(std::istream& in) { return get<std::uint32_t>(in); }

namespace {
void put_u64(std::ostream& out, std::uint64_t v) { put(out, v); }
std::uint64_t get_u64(std::istream& in) { return get<std::uint64_t>(in); }
}  // namespace

}  // namespace le

namespace {
constexpr std::array<char, 4> kMagic = {'T', 'S', 'R', '1'};

template <typename T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::F32 : DType::F64;
}
}  // namespace

template <typename T>
void write_tsr(std::ostream& out, const Tensor<T>& t) {
  out.write(kMagic.data(), kMagic.size());
  out.put(static_cast<char>(dtype_of<T>()));
  le::put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) {
    if (e > std::numeric_limits<std::uint32_t>::max()) throw IoError("extent exceeds u32");
    le::put_u32(out, static_cast<std::uint32_t>(e));
  }
  for (T v : t.data()) {
    if constexpr (sizeof(T) == 4) {
      le::put_u32(out, std::bit_cast<std::uint32_t>(v));
    } else {
      le::put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  if (!out) throw IoError("failed writing TSR1 tensor");
}

template <typename T>
Tensor<T> read_tsr(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw IoError("bad TSR1 magic");
  const int tag = in.get();
  if (tag != 0 && tag != 1) throw IoError("unknown TSR1 dtype tag " + std::to_string(tag));
  const std::uint32_t rank = le::get_u32(in);
  if (rank > 16) throw IoError("implausible TSR1 rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = le::get_u32(in);
  Tensor<T> t(shape);
  for (auto& v : t.data()) {
    if (tag == 0) {
      v = static_cast<T>(std::bit_cast<float>(le::get_u32(in)));
    } else {
      v = static_cast<T>(std::bit_cast<double>(le::get_u64(in)));
    }
  }
  return t;
}

template <typename T>
void save_tsr(const std::filesystem::path& path, const Tensor<T>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_tsr(out, t);
}

template <typename T>
Tensor<T> load_tsr(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_tsr<T>(in);
}

template void write_tsr(std::ostream&, const Tensor<float>&);
template void write_tsr(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tsr<float>(std::istream&);
template Tensor<double> read_tsr<double>(std::istream&);
template void save_tsr(const std::filesystem::path&, const Tensor<float>&);
template void save_tsr(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> load_tsr<float>(const std::filesystem::path&);
template Tensor<double> load_tsr<double>(const std::filesystem::path&);

}  // namespace erfseg
