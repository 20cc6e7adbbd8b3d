/* Copyright 2026 The GRM Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef GRM_PARALLEL_H_
#define GRM_PARALLEL_H_

#include <cstddef>
#include <functional>

namespace grm {

// Worker cap: SetWorkerCount override if set, else GRM_THREADS, else the
// hardware concurrency.
std::size_t WorkerCount();
void SetWorkerCount(std::size_t workers);  // 0 restores the default

// Runs fn(i) for i in [0, n). Iterations must write disjoint outputs.
void ParallelFor(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace grm

#endif  // GRM_PARALLEL_H_
