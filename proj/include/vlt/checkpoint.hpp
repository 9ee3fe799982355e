#pragma once

#include <string>

#include "vlt/nn.hpp"

namespace vlt {

// Versioned binary parameter container, little-endian throughout:
//   "VLTW" | u32 version | u64 record count |
//   per record: u32 name length | name bytes | u32 rank | u32 dims[rank] | f64 payload
// A plain-text manifest (one "name dim0xdim1x..." line per record, same order)
// is written alongside at <path>.manifest.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamRegistry& params);

// Loads values into already-constructed parameters; names and shapes must
// match the registry exactly.
void load_checkpoint(const std::string& path, ParamRegistry& params);

}  // namespace vlt
