#pragma once

// Serial / OpenMP execution switch. Every parallel loop in this project writes
// disjoint outputs per index, so both modes produce identical bits; the serial
// path is the reference the tests compare against.

#include <cstdint>

namespace normlens {

enum class Exec { Serial, Parallel };

template <class F>
void for_each_index(std::int64_t n, Exec mode, F&& body) {
    if (mode == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            body(i);
        }
    } else {
        for (std::int64_t i = 0; i < n; ++i) {
            body(i);
        }
    }
}

} // namespace normlens
