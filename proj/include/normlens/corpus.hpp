#pragma once

// Deterministic English-like text generation so training and capture runs
// never depend on external files. Same (min_bytes, seed) gives the same bytes.

#include <cstdint>
#include <string>

namespace normlens {

std::string generate_corpus(std::size_t min_bytes, std::uint64_t seed);

} // namespace normlens
