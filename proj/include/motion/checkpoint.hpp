#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "motion/dataset.hpp"
#include "motion/model.hpp"

namespace motion {

struct Checkpoint {
    ModelParams params;
    NormStats stats;
    std::map<std::string, std::string> meta;
};

// Binary container, little-endian host layout:
//   "MOTIONCK" u32 version
//   hyper block (key/value strings, includes the skeleton parent list)
//   meta block (key/value strings)
//   normalization statistics (position, velocity, acceleration)
//   u32 group count, then per group: name, u32 tensor count, per tensor
//   name, u32 rank, u64 dims..., f64 values...
// Loading validates every tensor name and shape against the hyper block and
// rejects unknown groups.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Exact byte serialization of one parameter group, as stored in checkpoints.
std::string serialize_group(const ModelParams& params, ParamGroup group);
// FNV-1a 64 of serialize_group().
std::uint64_t group_hash(const ModelParams& params, ParamGroup group);

}  // namespace motion
