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
#include <filesystem>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "mvrcache/corpus.h"
#include "mvrcache/embed.h"
#include "mvrcache/kernels.h"
#include "mvrcache/logistic.h"
#include "mvrcache/segment.h"
#include "mvrcache/simscore.h"

namespace mvrcache {

struct CacheEntry {
    std::size_t id = 0;  // equals the insertion index
    std::string prompt_id;
    std::string prompt_text;
    Segmentation segmentation;
    MultiVector multivector;
    UnitVector single_vector;
    Response response;
    std::vector<Observation> observations;
    std::optional<LogisticFit> fit;
    FitOptions fit_options;
    bool fit_stale = true;
};

struct RetrievalResult {
    std::size_t entry_id = 0;
    double score = 0.0;
    std::vector<kernels::Scored> candidates;  // stage-1 list with stage-2 scores
};

struct StoreConfig {
    std::size_t top_k = 20;
    SimMode sim_mode = SimMode::kSymmetric;
    kernels::Exec exec = kernels::Exec::kSerial;
};

/// The semantic cache. Readers (retrieval) may run concurrently; writers
/// (insert, append, fit refresh) are exclusive.
class SemanticCache {
public:
    SemanticCache(std::string embedder_fingerprint, std::size_t dimension, StoreConfig config = {});
    SemanticCache(SemanticCache&& other) noexcept;

    std::size_t insert(const Prompt& prompt, Segmentation segmentation, MultiVector multivector,
                       UnitVector single_vector, Response response, std::string_view embedder_fingerprint);

    std::optional<RetrievalResult> retrieve_nn(const MultiVector& query_mv, const UnitVector& query_sv) const;
    std::optional<RetrievalResult> retrieve_nn(const MultiVector& query_mv, const UnitVector& query_sv,
                                               std::size_t k) const;
    std::optional<RetrievalResult> full_scan_nn(const MultiVector& query_mv) const;

    void append_observation(std::size_t entry_id, double s, bool c);

    /// Fit of an entry, refitted if stale. nullopt while not identifiable or
    /// while either class has fewer than min_per_class observations.
    std::optional<LogisticFit> current_fit(std::size_t entry_id, const FitOptions& options,
                                           std::size_t min_per_class = 1);

    std::size_t size() const;
    CacheEntry entry(std::size_t entry_id) const;
    Response response(std::size_t entry_id) const;
    const std::string& embedder_fingerprint() const { return embedder_fingerprint_; }
    const StoreConfig& config() const { return config_; }

    void save(const std::filesystem::path& path) const;
    static SemanticCache load(const std::filesystem::path& path, StoreConfig config = {});

private:
    std::optional<RetrievalResult> rerank(const MultiVector& query_mv, std::vector<kernels::Scored> cands) const;

    std::string embedder_fingerprint_;
    std::size_t dimension_;
    StoreConfig config_;
    mutable std::shared_mutex mu_;
    std::vector<CacheEntry> entries_;
    std::vector<double> single_rows_;  // row-major size() x dimension_
};

}  // namespace mvrcache
