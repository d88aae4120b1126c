#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bast/adam.hpp"

BAST_NAMESPACE_BEGIN

// Tensor container file: a text manifest (name -> shape, offset) followed by
// raw little-endian float32 values. See docs/tensor_file_format.md.
struct TensorFile {
  std::string tag;  // free-form identity, e.g. the generating config hash
  std::vector<NamedTensor> tensors;

  const Tensor* find(const std::string& name) const;
};

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile read_tensor_file(const std::filesystem::path& path);

BAST_NAMESPACE_END
