#pragma once

#include <string>

#include "semimatch/tensor.hpp"

namespace semimatch {

// Portable tensor dump: little-endian binary with a fixed header.
//   bytes 0..3   magic "SMTD"
//   u32          format version (1)
//   u32          dtype code (0 = float64, 1 = float32)
//   u32          rank
//   u64 * rank   extents
//   payload      row-major values, little-endian
// Files always store float64; float32 builds widen on write and narrow on
// read so fixtures stay interchangeable between build flavors.

void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

}  // namespace semimatch
