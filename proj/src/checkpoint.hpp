#pragma once

// Binary parameter snapshots. Layout, all integers little-endian:
//   magic "RMAS" | format version u32 | build descriptor | entry count u32 |
//   manifest (name, rows, cols, payload offset per entry) |
//   payload (row-major 32-bit floats per entry) | fnv-1a 64 checksum of all
//   preceding bytes.
// The descriptor pins the topology, so a load rebuilds the system and then
// overwrites every parameter; save -> load -> save is byte-identical because
// 32-bit values widen exactly and re-narrow to the same bits.

#include <cstdint>
#include <string>

#include "orchestrator.hpp"

namespace rmas {

inline constexpr std::uint32_t checkpoint_version = 1;

void save_checkpoint(SystemSpec& s, const BuildConfig& built,
                     const std::string& path);

struct LoadedSystem {
  BuildConfig built;
  SystemSpec system;
};

// Verifies magic, version, and checksum (each failing distinctly), rebuilds
// the topology from the descriptor, and fills every named parameter. Every
// system parameter must appear in the manifest exactly once.
LoadedSystem load_checkpoint(const std::string& path);

}  // namespace rmas
