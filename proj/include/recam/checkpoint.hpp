#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "recam/tensor.hpp"

namespace recam::ckpt {

// Flat binary checkpoint container (see docs/checkpoint-format.md):
//   magic "RCKP" | u32 version | u32 meta length | meta JSON (UTF-8)
//   u32 tensor count | per tensor: u32 name length, name, u32 ndim,
//   ndim x u64 dims, numel x f64 row-major payload.
// All integers and floats little-endian, written byte-by-byte so files are
// portable across hosts.

constexpr uint32_t kFormatVersion = 1;

void save(const std::string& path, const nlohmann::json& meta,
          const std::vector<std::pair<std::string, Tensor>>& tensors);

struct Loaded {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;  // file order

  const Tensor* find(const std::string& name) const;
};

// Throws ParseError on bad magic, unsupported version, or truncation.
Loaded load(const std::string& path);

}  // namespace recam::ckpt
