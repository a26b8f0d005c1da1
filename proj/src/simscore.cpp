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

#include "mvrcache/simscore.h"

#include <algorithm>

#include "mvrcache/error.h"

namespace mvrcache {

MultiVector::MultiVector(const std::vector<UnitVector>& vectors) : rows_(vectors.size()) {
    if (vectors.empty()) {
        throw Error(ErrorCode::kEmptySegment, "multivector needs at least one vector");
    }
    dim_ = vectors.front().dim();
    data_.reserve(rows_ * dim_);
    for (const auto& v : vectors) {
        if (v.dim() != dim_) {
            throw Error(ErrorCode::kConfig, "mixed dimensions in multivector");
        }
        data_.insert(data_.end(), v.values().begin(), v.values().end());
    }
}

ScoreMatrix score_matrix(const MultiVector& a, const MultiVector& b) {
    ScoreMatrix s{a.size(), b.size(), std::vector<double>(a.size() * b.size())};
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            s.values[i * s.cols + j] = pair_sim(a.row(i), b.row(j));
        }
    }
    return s;
}

double maxsim(const ScoreMatrix& s) {
    double total = 0.0;
    for (std::size_t i = 0; i < s.rows; ++i) {
        double best = 0.0;
        for (std::size_t j = 0; j < s.cols; ++j) {
            best = std::max(best, s.at(i, j));
        }
        total += best;
    }
    return total;
}

double maxsim_reverse(const ScoreMatrix& s) {
    double total = 0.0;
    for (std::size_t j = 0; j < s.cols; ++j) {
        double best = 0.0;
        for (std::size_t i = 0; i < s.rows; ++i) {
            best = std::max(best, s.at(i, j));
        }
        total += best;
    }
    return total;
}

double smaxsim(const ScoreMatrix& s, SimMode mode) {
    double fwd = maxsim(s) / static_cast<double>(s.rows);
    if (mode == SimMode::kVanilla) {
        return fwd;
    }
    double rev = maxsim_reverse(s) / static_cast<double>(s.cols);
    return 0.5 * (fwd + rev);
}

double maxsim(const MultiVector& q, const MultiVector& d) {
    return maxsim(score_matrix(q, d));
}

double smaxsim(const MultiVector& a, const MultiVector& b, SimMode mode) {
    return smaxsim(score_matrix(a, b), mode);
}

}  // namespace mvrcache
