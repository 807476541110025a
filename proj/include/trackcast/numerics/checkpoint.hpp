#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trackcast/numerics/layers.hpp"

namespace trackcast::num {

// Parameter checkpoint, byte layout documented in docs/file_formats.md:
//   magic "TCKPT\n" (6 bytes), version u32, count u64, then per parameter:
//   name_len u32, name bytes, dtype u8 (0 = f32, 1 = f64), ndim u32,
//   extents u64 each, raw values little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::vector<Parameter<float>>& params);
void save_checkpoint(const std::string& path, const std::vector<Parameter<double>>& params);

// Throws SchemaError on bad magic/version or on dtype mismatch with T.
template <typename T>
std::vector<Parameter<T>> load_checkpoint(const std::string& path);

// dtype tag of the first parameter (0 = f32, 1 = f64); -1 for an empty file body.
int checkpoint_dtype(const std::string& path);

}  // namespace trackcast::num
