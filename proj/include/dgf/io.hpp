#pragma once

// Persistence: the "DGFT" named-tensor container and 8-bit netpbm images.
//
// DGFT layout, all integers little-endian:
//   "DGFT" | version u8 = 1 | count u16 |
//   count x { name_len u16 | name (UTF-8) | h u32 | w u32 | c u32 | h*w*c f64 row-major }

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dgf/tensor.hpp"
#include "dgf/train.hpp"

namespace dgf {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

std::vector<std::uint8_t> encode_tensors(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_tensors(const std::vector<std::uint8_t>& bytes);

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

/// True if the file starts with the DGFT magic.
bool is_tensor_file(const std::filesystem::path& path);

/// Binary PGM (P5, one channel) or PPM (P6, three channels) with maxval 255.
/// Bytes map to v / 255 on load; on save values are clamped to [0, 1] and
/// rounded to the nearest of the 256 levels.
Tensor load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const Tensor& image);

/// Image or DGFT container (first tensor), chosen by the file's magic bytes.
Tensor load_tensor_or_image(const std::filesystem::path& path);

/// Model parameters as 1 x 1 x n tensors named as in DgfModel::parameters().
std::vector<NamedTensor> model_tensors(DgfModel& model);

/// Copies parameters back by name; every model parameter must be present
/// with the right length. Extra entries are ignored.
void load_model_tensors(DgfModel& model, const std::vector<NamedTensor>& tensors);

}  // namespace dgf
