#pragma once

#include <string>

#include "adnet/params.hpp"

namespace adnet {

// Versioned binary weight container: magic "ADN1", a manifest of
// (name, dtype, shape, byte offset), then raw little-endian float64 arrays.
// save -> load -> save round-trips byte-identically.
void save_checkpoint(const std::string& path, const ParamStore& store);

// Fills an already-built store; every entry must match an existing parameter
// name and shape exactly.
void load_checkpoint(const std::string& path, ParamStore& store);

}  // namespace adnet
