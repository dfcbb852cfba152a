#pragma once

// Checkpoint format:
//   "CKPT" | u32 entry count | per entry: u16 name length, UTF-8 name,
//   embedded TSR1 record. Entries are written in store (name) order.

#include <filesystem>
#include <iosfwd>

#include "erfseg/nn/param_store.hpp"

namespace erfseg {

template <typename T>
void write_checkpoint(std::ostream& out, const ParamStore<T>& params);

template <typename T>
ParamStore<T> read_checkpoint(std::istream& in);

/// Writes to a temporary sibling and renames, so readers never see a
/// half-written file.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<T>& params);

template <typename T>
ParamStore<T> load_checkpoint(const std::filesystem::path& path);

/// Copies values from `src` into `dst`. Every name in `dst` must be present
/// in `src` with the same shape; throws ConfigError otherwise.
template <typename T>
void assign_params(ParamStore<T>& dst, const ParamStore<T>& src);

}  // namespace erfseg
