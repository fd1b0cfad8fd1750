#pragma once

#include <string>

#include "attnmask/graph.hpp"

namespace attnmask {

// Little-endian binary: magic, parameter count, then per parameter its name,
// shape and raw doubles.
void save_checkpoint(const ParamStore& params, const std::string& path);

// Loads into an existing store; names and shapes must match exactly.
void load_checkpoint(ParamStore& params, const std::string& path);

}  // namespace attnmask
