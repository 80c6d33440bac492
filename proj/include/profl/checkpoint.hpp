#pragma once

#include <string>

#include "profl/blocks.hpp"

namespace profl {

// Binary model snapshot: layout, block states and the flat parameter vector,
// little-endian throughout. Shrinking artifacts (snapshots, basic layers) are
// transient and not persisted. Round-trips bit for bit.
void save_checkpoint(const std::string& path, const GlobalModel& model);
GlobalModel load_checkpoint(const std::string& path);

}  // namespace profl
