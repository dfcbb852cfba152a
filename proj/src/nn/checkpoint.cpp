#include "erfseg/nn/checkpoint.hpp"

#include <array>
#include <fstream>
#include <limits>

#include "erfseg/error.hpp"
#include "erfseg/tsr_io.hpp"

namespace erfseg {

namespace {
constexpr std::array<char, 4> kMagic{'C', 'K', 'P', 'T'};
}

template <typename T>
void write_checkpoint(std::ostream& out, const ParamStore<T>& params) {
  if (params.size() > std::numeric_limits<std::uint32_t>::max()) throw IoError("too many checkpoint entries");
  out.write(kMagic.data(), kMagic.size());
  le::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw IoError("parameter name too long: " + name);
    le::put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tsr(out, t);
  }
  if (!out) throw IoError("failed writing checkpoint");
}

template <typename T>
ParamStore<T> read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw IoError("bad checkpoint magic");
  const std::uint32_t count = le::get_u32(in);
  ParamStore<T> store;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(le::get_u16(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    if (!in) throw IoError("truncated checkpoint entry name");
    if (store.contains(name)) throw IoError("duplicate checkpoint entry '" + name + "'");
    store.insert(name, read_tsr<T>(in)).set_requires_grad(true);
  }
  return store;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<T>& params) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    write_checkpoint(out, params);
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
ParamStore<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_checkpoint<T>(in);
}

template <typename T>
void assign_params(ParamStore<T>& dst, const ParamStore<T>& src) {
  for (auto& [name, t] : dst) {
    if (!src.contains(name)) throw ConfigError("checkpoint lacks parameter '" + name + "'");
    const Tensor<T>& s = src.get(name);
    if (s.shape() != t.shape()) {
      throw ConfigError("checkpoint parameter '" + name + "' has shape " + shape_str(s.shape()) + ", expected " +
                        shape_str(t.shape()));
    }
    std::copy(s.data().begin(), s.data().end(), t.data().begin());
  }
  if (src.size() != dst.size()) throw ConfigError("checkpoint has parameters the network does not declare");
}

#define ERFSEG_INSTANTIATE(T)                                                       \
  template void write_checkpoint<T>(std::ostream&, const ParamStore<T>&);           \
  template ParamStore<T> read_checkpoint<T>(std::istream&);                         \
  template void save_checkpoint<T>(const std::filesystem::path&, const ParamStore<T>&); \
  template ParamStore<T> load_checkpoint<T>(const std::filesystem::path&);          \
  template void assign_params<T>(ParamStore<T>&, const ParamStore<T>&);

ERFSEG_INSTANTIATE(float)
ERFSEG_INSTANTIATE(double)
#undef ERFSEG_INSTANTIATE

}  // namespace erfseg
