#pragma once

#include <cstddef>
#include <functional>

namespace linsamp {

// Caps the worker count used by parallel_for; 0 restores the hardware
// default. Each loop index writes only its own slot, so results are
// identical for every thread count.
void set_max_threads(int count);
int max_threads();

void parallel_for(std::ptrdiff_t count,
                  const std::function<void(std::ptrdiff_t)>& body);

}  // namespace linsamp
