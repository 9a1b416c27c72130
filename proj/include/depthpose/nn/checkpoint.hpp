#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthpose/nn/layers.hpp"

namespace depthpose::nn {

// Self-describing checkpoint container:
//   bytes 0..7   magic "DPCK0001"
//   bytes 8..11  little-endian u32 JSON header length
//   header JSON  {"config": ..., "tensors": [{name, shape, offset, count}]}
//   blob         raw little-endian float32 values, tensor order as indexed
struct Checkpoint {
  nlohmann::json config;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::string& path, const std::vector<Param>& tensors,
                     const nlohmann::json& config);

Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint tensors into the matching named params; every model tensor
// must be present with an identical shape.
void apply_checkpoint(const Checkpoint& ckpt, const std::vector<Param>& tensors);

}  // namespace depthpose::nn
