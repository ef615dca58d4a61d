#pragma once

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>

#include "pcic/tensor.hpp"

namespace pcic {

/// Single-archive container for named parameter arrays plus a JSON metadata
/// blob (the configuration the arrays belong to, step counters, ...).
/// Layout: magic "PCKP", version u8=1, u32 meta length + bytes, u32 array
/// count, then per array: u16 name length, name, u8 ndim, u32 extents,
/// float64 data (little-endian).
struct CheckpointData {
    nlohmann::json meta;
    std::map<std::string, Tensor> arrays;
};

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::filesystem::path& path);

}  // namespace pcic
