// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>

namespace wimesh {

// Worker count: min(hardware_concurrency, WIMESH_THREADS when set), at least 1.
int worker_count();

// Static block partition of [begin, end); fn(i) must only write state owned
// by index i so parallel and serial runs produce identical results.
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn);

}  // namespace wimesh
