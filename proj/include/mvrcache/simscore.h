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
#include <span>
#include <vector>

#include "mvrcache/embed.h"

namespace mvrcache {

/// One unit vector per segment, stored row-major.
class MultiVector {
public:
    MultiVector() = default;
    explicit MultiVector(const std::vector<UnitVector>& vectors);

    std::size_t size() const { return rows_; }
    std::size_t dim() const { return dim_; }
    bool empty() const { return rows_ == 0; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
    std::span<const double> data() const { return data_; }

    friend bool operator==(const MultiVector&, const MultiVector&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

enum class SimMode { kSymmetric, kVanilla };

/// Clamped cosine of two unit vectors.
inline double pair_sim(std::span<const double> a, std::span<const double> b) {
    double s = dot(a, b);
    return s > 0.0 ? s : 0.0;
}

struct ScoreMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

ScoreMatrix score_matrix(const MultiVector& a, const MultiVector& b);

/// Sum of row maxima.
double maxsim(const ScoreMatrix& s);
/// Sum of column maxima, i.e. maxsim in the reverse direction.
double maxsim_reverse(const ScoreMatrix& s);
double smaxsim(const ScoreMatrix& s, SimMode mode = SimMode::kSymmetric);

double maxsim(const MultiVector& q, const MultiVector& d);
double smaxsim(const MultiVector& a, const MultiVector& b, SimMode mode = SimMode::kSymmetric);

}  // namespace mvrcache
