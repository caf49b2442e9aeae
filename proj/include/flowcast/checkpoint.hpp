#pragma once

#include <string>

#include "flowcast/params.hpp"

namespace flowcast {

/// Flat binary checkpoint: magic "PDF1", u32 parameter count, then per
/// parameter (in store order): u32 name length, name bytes, u32 rank,
/// u32 dims, little-endian float32 values.
void save_checkpoint(const ParamStore& params, const std::string& path);

/// Loads values into an existing store; every name and shape must match.
void load_checkpoint(ParamStore& params, const std::string& path);

}  // namespace flowcast
