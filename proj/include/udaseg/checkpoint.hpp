#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "udaseg/tensor.hpp"

namespace udaseg {

// Single-file parameter archive: magic, format version, a JSON metadata
// blob (configs, epoch counter, tensor index) followed by raw float32 data.
struct Checkpoint {
  static constexpr uint32_t kFormatVersion = 1;
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace udaseg
