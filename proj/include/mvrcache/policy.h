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
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include "mvrcache/corpus.h"
#include "mvrcache/embed.h"
#include "mvrcache/logistic.h"
#include "mvrcache/segment.h"
#include "mvrcache/store.h"

namespace mvrcache {

enum class Protocol { kCacheOnMiss, kAlwaysCache };

Protocol parse_protocol(std::string_view name);
std::string_view to_string(Protocol p);

struct PolicyConfig {
    ExplorationConfig exploration;
    std::size_t min_obs_per_class = 1;
    Protocol protocol = Protocol::kCacheOnMiss;

    void validate() const;
    FitOptions fit_options() const {
        return {exploration.gamma_max, 500, 1e-8,
                exploration.region == RegionMode::kLikelihoodMax ? 1.0 - exploration.epsilon : 0.0};
    }
};

enum class Action { kExploit, kExplore };

struct Decision {
    Action action = Action::kExplore;
    std::optional<std::size_t> nn;
    double s = 0.0;
    double tau = 1.0;
    Response response;
    std::optional<bool> label;  // recorded correctness, explore with a neighbour only
};

struct StageLatency {
    double segment_ms = 0.0;
    double embed_ms = 0.0;
    double retrieve_ms = 0.0;
    double decide_ms = 0.0;
    double oracle_ms = 0.0;

    StageLatency& operator+=(const StageLatency& o);
};

struct StepRecord {
    std::size_t step = 0;
    std::string prompt_id;
    Decision decision;
    bool hit = false;
    bool correct = true;
    std::size_t segments = 1;
    StageLatency latency;
};

struct Representation {
    Segmentation segmentation;
    MultiVector multivector;
    UnitVector single_vector;
};

/// Segments, embeds every segment and embeds the whole prompt.
Representation represent(const Prompt& prompt, const Segmenter& segmenter, EmbeddingCache& embeddings);

/// Serves one prompt stream against one cache. Not thread-safe; the stream
/// is sequential.
class CacheEngine {
public:
    struct Parts {
        SemanticCache* cache;
        EmbeddingCache* embeddings;
        const Segmenter* query_segmenter;
        const Segmenter* entry_segmenter;  // may equal query_segmenter
        Oracle* oracle;
    };

    CacheEngine(Parts parts, PolicyConfig config, std::uint64_t seed, double oracle_latency_ms = 0.0);

    /// ground_truth is only used to score the returned response.
    StepRecord process_prompt(const Prompt& prompt, const Response& ground_truth);

    const PolicyConfig& config() const { return config_; }
    std::size_t steps() const { return step_; }

private:
    Parts parts_;
    PolicyConfig config_;
    std::mt19937_64 rng_;
    double oracle_latency_ms_;
    std::size_t step_ = 0;
};

}  // namespace mvrcache
