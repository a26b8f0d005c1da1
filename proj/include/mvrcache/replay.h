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
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mvrcache/corpus.h"
#include "mvrcache/embed.h"
#include "mvrcache/policy.h"
#include "mvrcache/segment.h"
#include "mvrcache/theory.h"
#include "mvrcache/train.h"

namespace mvrcache {

enum class BaselineMode { kMvrCache, kSingleVector, kTokenLevel, kSentenceHeuristic };

BaselineMode parse_baseline_mode(std::string_view name);
std::string_view to_string(BaselineMode m);

/// Everything that determines one experiment. File locations are not part
/// of the fingerprint so identical runs into different directories produce
/// identical artifacts.
struct RunConfig {
    std::filesystem::path corpus;
    std::optional<std::filesystem::path> split_file;
    std::string split = "test";
    double delta = 0.05;
    double epsilon = 0.05;
    double gamma_max = 200.0;
    RegionMode region = RegionMode::kPaperMin;
    std::size_t min_obs_per_class = 1;
    Protocol protocol = Protocol::kCacheOnMiss;
    std::size_t top_k = 20;
    SimMode sim_mode = SimMode::kSymmetric;
    EmbedderConfig embedder;
    SegmenterConfig segmenter;
    TrainConfig train;
    std::uint64_t seed = 1;
    BaselineMode mode = BaselineMode::kMvrCache;
    std::optional<std::filesystem::path> checkpoint;
    double oracle_latency_ms = 0.0;
    kernels::Exec exec = kernels::Exec::kSerial;
    std::filesystem::path out = "out";

    void validate() const;
    PolicyConfig policy_config() const;
    nlohmann::ordered_json to_json() const;  // without the output directory
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::filesystem::path& path);
    std::string fingerprint() const;
};

struct MetricsSeries {
    std::vector<StepRecord> steps;
    std::vector<double> hit_rate;    // cumulative, one per step
    std::vector<double> error_rate;  // cumulative, one per step
    std::size_t hits = 0;
    std::size_t errors = 0;
    std::uint64_t oracle_calls = 0;
    std::size_t cache_size = 0;
    StageLatency latency;

    double final_hit_rate() const { return hit_rate.empty() ? 0.0 : hit_rate.back(); }
    double final_error_rate() const { return error_rate.empty() ? 0.0 : error_rate.back(); }
};

struct ReplayInputs {
    const Corpus* corpus = nullptr;
    /// Required by the mvr-cache and sentence-heuristic modes.
    const SegmentationPolicy* policy = nullptr;
    EmbeddingCache* embeddings = nullptr;  // created from the config when null
};

/// Streams the configured split through a fresh cache in arrival order.
MetricsSeries replay_stream(const RunConfig& config, const ReplayInputs& inputs);

/// Writes steps.csv, curve.csv, summary.json, latency.csv, latency.json and
/// manifest.json under config.out.
void write_replay_artifacts(const RunConfig& config, const MetricsSeries& metrics, std::string_view command);

/// Loads the corpus and checkpoint named by the config, replays and writes
/// the artifacts.
MetricsSeries run_replay(const RunConfig& config);

struct TrainRun {
    SegmentationPolicy policy;
    TrainResult result;
};

TrainRun train_policy(const RunConfig& config, const Corpus& corpus, EmbeddingCache& embeddings);

/// Trains on the configured corpus and writes policy.json, its sidecar,
/// train_log.csv, validation.csv and manifest.json.
TrainRun run_train(const RunConfig& config);

/// Replays corpus B with a policy trained on corpus A. The checkpoint comes
/// from replay_b.checkpoint when set, otherwise train_a is trained first.
MetricsSeries run_crossdomain(const RunConfig& train_a, const RunConfig& replay_b);

/// Theory report plus normality diagnostics over the replay's labelled
/// similarity scores; writes theory.json and manifest.json.
nlohmann::ordered_json run_theory(const RunConfig& config, const TheoryConfig& theory);

/// Embedder and segmenter fingerprints stored next to a checkpoint.
std::filesystem::path checkpoint_sidecar(const std::filesystem::path& checkpoint);

}  // namespace mvrcache
