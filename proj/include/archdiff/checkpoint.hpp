#pragma once

#include <string>

#include "archdiff/optim.hpp"

namespace archdiff {

// Parameter checkpoint container (binary, little-endian):
//   magic "ADCP", u32 version, u32 config length, config bytes (JSON),
//   u64 entry count, then per entry: u32 name length, name bytes,
//   u32 rows, u32 cols, rows*cols f64 payload (row-major).
// Round-trips bit-exactly.
struct Checkpoint {
    std::string config_json;
    ParamMap params;
};

void save_checkpoint(const std::string& path, const ParamMap& params,
                     const std::string& config_json);
Checkpoint load_checkpoint(const std::string& path, bool requires_grad = false);

}  // namespace archdiff
