#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "pedsyn/schedule.hpp"
#include "pedsyn/tensor.hpp"

namespace pedsyn {

// Self-describing binary archive: 8-byte magic, u32 version, u64 JSON header
// length, JSON header (kind, config, tensor directory), then float32 data.
struct Checkpoint {
  std::string kind;
  nlohmann::json config;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::string& path, const std::string& kind, const nlohmann::json& config,
                     const std::map<std::string, Tensor*>& tensors);
Checkpoint load_checkpoint(const std::string& path);

// The schedule rides along as tensors so reload is bit-exact; `storage`
// keeps the temporaries alive until save_checkpoint returns.
void schedule_into(std::map<std::string, Tensor>& storage, std::map<std::string, Tensor*>& out,
                   const NoiseSchedule& sched);
NoiseSchedule schedule_from(const Checkpoint& ckpt);

}  // namespace pedsyn
