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

#include "mvrcache/kernels.h"

#include <algorithm>
#include <unordered_map>
#include <cstddef>
#include <cstdint>
#include <string>

#include "mvrcache/error.h"

namespace mvrcache::kernels {

Exec parse_exec(std::string_view name) {
    if (name == "serial") return Exec::kSerial;
    if (name == "parallel") return Exec::kParallel;
    throw Error(ErrorCode::kConfig, "unknown execution mode \"" + std::string(name) + "\"");
}

std::string_view to_string(Exec e) {
    return e == Exec::kSerial ? "serial" : "parallel";
}

namespace {

bool ranks_before(const Scored& a, const Scored& b) {
    return a.score > b.score || (a.score == b.score && a.index < b.index);
}

}  // namespace

std::vector<Scored> top_k_cosine(std::span<const double> rows, std::size_t d, std::span<const double> q,
                                 std::size_t k, Exec exec) {
    const std::size_t n = d == 0 ? 0 : rows.size() / d;
    std::vector<Scored> all(n);
    if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
            auto ui = static_cast<std::size_t>(i);
            all[ui] = {ui, pair_sim(rows.subspan(ui * d, d), q)};
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            all[i] = {i, pair_sim(rows.subspan(i * d, d), q)};
        }
    }
    k = std::min(k, n);
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), ranks_before);
    all.resize(k);
    return all;
}

std::vector<double> smaxsim_batch(const MultiVector& q, std::span<const MultiVector* const> docs, SimMode mode,
                                  Exec exec) {
    std::vector<double> out(docs.size());
    if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(docs.size()); ++i) {
            out[static_cast<std::size_t>(i)] = smaxsim(q, *docs[static_cast<std::size_t>(i)], mode);
        }
    } else {
        for (std::size_t i = 0; i < docs.size(); ++i) {
            out[i] = smaxsim(q, *docs[i], mode);
        }
    }
    return out;
}

std::vector<Scored> nearest_predecessors(std::span<const MultiVector> items, SimMode mode, Exec exec) {
    // Identical items share every score, so scores are computed once per
    // distinct item. best[g] is the nearest item seen so far for group g.
    std::vector<Scored> out(items.size(), Scored{kNone, 0.0});
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> by_hash;
    std::vector<std::size_t> first;
    std::vector<Scored> best;
    std::vector<double> forward, backward;
    for (std::size_t i = 0; i < items.size(); ++i) {
        auto bytes = std::as_bytes(items[i].data());
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (auto b : bytes) {
            h = (h ^ static_cast<std::uint64_t>(b)) * 0x100000001b3ULL;
        }
        auto& bucket = by_hash[h];
        auto hit = std::find_if(bucket.begin(), bucket.end(), [&](std::size_t g) { return items[first[g]] == items[i]; });
        if (hit != bucket.end()) {
            out[i] = best[*hit];
            continue;
        }
        std::size_t g_new = first.size();
        std::size_t u = g_new;
        forward.assign(u, 0.0);
        backward.assign(u, 0.0);
        auto score = [&](std::size_t g) {
            forward[g] = smaxsim(items[i], items[first[g]], mode);
            backward[g] = mode == SimMode::kSymmetric ? forward[g] : smaxsim(items[first[g]], items[i], mode);
        };
        if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
            for (std::ptrdiff_t g = 0; g < static_cast<std::ptrdiff_t>(u); ++g) {
                score(static_cast<std::size_t>(g));
            }
        } else {
            for (std::size_t g = 0; g < u; ++g) {
                score(g);
            }
        }
        Scored mine{kNone, -1.0};
        for (std::size_t g = 0; g < u; ++g) {
            if (forward[g] > mine.score) {
                mine = {first[g], forward[g]};
            }
            if (backward[g] > best[g].score) {
                best[g] = {i, backward[g]};
            }
        }
        if (i > 0) {
            out[i] = mine;
        }
        double self = smaxsim(items[i], items[i], mode);
        best.push_back(self > mine.score ? Scored{i, self} : mine);
        first.push_back(i);
        bucket.push_back(g_new);
    }
    if (!out.empty()) {
        out[0] = {kNone, 0.0};
    }
    return out;
}

}  // namespace mvrcache::kernels
