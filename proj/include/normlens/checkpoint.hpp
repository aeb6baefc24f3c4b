#pragma once

// NLTM1 checkpoint format: the 5 magic bytes "NLTM1", one newline-terminated
// JSON header line (config plus named blob descriptors with byte offsets into
// the payload), then the raw little-endian float32 blobs in layout order.
// Round-trips are bit-exact.

#include <string>

#include "normlens/model.hpp"

namespace normlens {

void save_checkpoint(const Model& model, const std::string& path);

Model load_checkpoint(const std::string& path);

} // namespace normlens
