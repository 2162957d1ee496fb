#pragma once

#include <string>

#include "asymprune/model.hpp"

namespace asymprune {

// Binary checkpoint container: 8-byte magic "ASPKPT01", u32 format version,
// length-prefixed JSON model config, then a tensor table of
// (name, shape, raw little-endian f64 data) in visit_params order.
// Round-trips are bit-exact.
void save_checkpoint(const ModelWeights& weights, const std::string& path);
ModelWeights load_checkpoint(const std::string& path);

}  // namespace asymprune
