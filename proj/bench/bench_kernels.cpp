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

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mvrcache/kernels.h"

using namespace mvrcache;
using kernels::Exec;

namespace {

constexpr std::size_t kDim = 256;

UnitVector random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(kDim);
    for (auto& x : v) {
        x = n(rng);
    }
    return UnitVector::normalized(std::move(v));
}

MultiVector random_mv(std::mt19937_64& rng, std::size_t m) {
    std::vector<UnitVector> rows;
    for (std::size_t i = 0; i < m; ++i) {
        rows.push_back(random_unit(rng));
    }
    return MultiVector(rows);
}

Exec exec_of(const benchmark::State& state) {
    return state.range(1) == 0 ? Exec::kSerial : Exec::kParallel;
}

void BM_TopKCosine(benchmark::State& state) {
    std::mt19937_64 rng(1);
    auto n = static_cast<std::size_t>(state.range(0));
    std::vector<double> rows;
    rows.reserve(n * kDim);
    for (std::size_t i = 0; i < n; ++i) {
        auto v = random_unit(rng);
        rows.insert(rows.end(), v.values().begin(), v.values().end());
    }
    auto q = random_unit(rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::top_k_cosine(rows, kDim, q.values(), 20, exec_of(state)));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void BM_SMaxSimBatch(benchmark::State& state) {
    std::mt19937_64 rng(2);
    auto n = static_cast<std::size_t>(state.range(0));
    auto q = random_mv(rng, 4);
    std::vector<MultiVector> docs;
    for (std::size_t i = 0; i < n; ++i) {
        docs.push_back(random_mv(rng, 1 + i % 6));
    }
    std::vector<const MultiVector*> ptrs;
    for (const auto& d : docs) {
        ptrs.push_back(&d);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::smaxsim_batch(q, ptrs, SimMode::kSymmetric, exec_of(state)));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void BM_NearestPredecessors(benchmark::State& state) {
    std::mt19937_64 rng(3);
    auto n = static_cast<std::size_t>(state.range(0));
    std::vector<MultiVector> items;
    for (std::size_t i = 0; i < n; ++i) {
        items.push_back(random_mv(rng, 1 + i % 4));
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::nearest_predecessors(items, SimMode::kSymmetric, exec_of(state)));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * (n - 1) / 2));
}

}  // namespace

BENCHMARK(BM_TopKCosine)->ArgNames({"n", "parallel"})->ArgsProduct({{1000, 10000, 100000}, {0, 1}});
BENCHMARK(BM_SMaxSimBatch)->ArgNames({"n", "parallel"})->ArgsProduct({{20, 200, 2000}, {0, 1}});
BENCHMARK(BM_NearestPredecessors)->ArgNames({"n", "parallel"})->ArgsProduct({{200, 1000}, {0, 1}});

BENCHMARK_MAIN();
