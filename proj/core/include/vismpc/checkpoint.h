#pragma once

#include <string>
#include <vector>

#include "vismpc/tensor.h"

namespace vismpc {

// Little-endian binary parameter checkpoint shared by the video predictor and
// the registration network:
//   magic "VMPCNKP1", u32 version, u32 tensor count,
//   per tensor: u32 name length, name bytes, u32 ndim, u32 dims[ndim],
//               f32 values (row-major).
// Round-trips bit-exactly.
struct NamedTensor {
    std::string name;
    Tensor tensor;
};

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

} // namespace vismpc
