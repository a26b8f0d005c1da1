// Copyright 2026-present the mvrcache authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "mvrcache/simscore.h"

namespace mvrcache::kernels {

/// Every kernel has a serial reference and an OpenMP version that must
/// return identical results.
enum class Exec { kSerial, kParallel };

Exec parse_exec(std::string_view name);
std::string_view to_string(Exec e);

struct Scored {
    std::size_t index = 0;
    double score = 0.0;
};

/// Top-k rows of a row-major n x d matrix of unit vectors by clamped cosine
/// against q, ordered by descending score then ascending index.
std::vector<Scored> top_k_cosine(std::span<const double> rows, std::size_t d, std::span<const double> q,
                                 std::size_t k, Exec exec = Exec::kSerial);

/// smaxsim(q, docs[i]) for every i.
std::vector<double> smaxsim_batch(const MultiVector& q, std::span<const MultiVector* const> docs, SimMode mode,
                                  Exec exec = Exec::kSerial);

inline constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

/// For every i, the j < i maximizing smaxsim(items[i], items[j]); ties go to
/// the lowest j. Item 0 maps to kNone.
std::vector<Scored> nearest_predecessors(std::span<const MultiVector> items, SimMode mode,
                                         Exec exec = Exec::kSerial);

}  // namespace mvrcache::kernels
