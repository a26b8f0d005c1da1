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
#include <span>
#include <string>
#include <vector>

#include "mvrcache/corpus.h"
#include "mvrcache/embed.h"
#include "mvrcache/kernels.h"
#include "mvrcache/logistic.h"
#include "mvrcache/policy.h"
#include "mvrcache/segment.h"

namespace mvrcache {

struct TrainConfig {
    std::size_t steps = 1000;
    std::size_t refresh_every = 100;
    std::size_t samples = 4;
    double learning_rate = 1e-3;
    double baseline_decay = 0.99;
    std::uint64_t seed = 1;
    double smoothing = 1.0;
    double grad_clip = 0.0;          // 0 disables clipping
    std::size_t max_neighbors = 0;   // 0 uses every neighbour of the anchor
    double cold_t = 0.5;
    double cold_gamma = 10.0;
    bool validate_during_training = true;
    kernels::Exec exec = kernels::Exec::kSerial;

    void validate() const;
};

ClassWeights rebalanced_weights(const std::vector<bool>& labels, double smoothing);

/// Negated weighted BCE summed over the anchor's neighbours.
double step_reward(std::span<const double> scores, const std::vector<bool>& labels, double t, double gamma,
                   ClassWeights weights);

/// Nearest earlier prompt of every training prompt and the inverse relation.
struct NeighborMap {
    std::vector<std::size_t> nn;  // kernels::kNone for the first prompt
    std::vector<double> score;
    std::vector<bool> label;
    std::vector<std::vector<std::size_t>> inverse;

    std::vector<std::size_t> anchors() const;
};

NeighborMap refresh_neighbor_map(std::span<const CorpusRecord* const> records, const Segmenter& segmenter,
                                 EmbeddingCache& embeddings, SimMode mode,
                                 kernels::Exec exec = kernels::Exec::kSerial);

struct TrainStep {
    std::size_t step = 0;
    std::string anchor;
    std::size_t neighbors = 0;
    double reward = 0.0;    // mean over the joint samples
    double baseline = 0.0;  // value used for the advantages
    double grad_norm = 0.0;
    double t = 0.0;         // anchor fit after the update
    double gamma = 0.0;
};

struct ValidationPoint {
    std::size_t step = 0;
    double hit_rate = 0.0;
    double error_rate = 0.0;
};

struct TrainResult {
    std::vector<TrainStep> log;
    std::vector<ValidationPoint> validation;
    std::size_t best_step = 0;
};

struct GradientEstimate {
    PolicyParams grad;
    std::vector<double> rewards;
    double baseline = 0.0;
};

/// Offline REINFORCE trainer for the segmentation policy over the train
/// split, with greedy-policy hit rate on the val split for model selection.
class Trainer {
public:
    Trainer(const Corpus& corpus, SegmentationPolicy& policy, EmbeddingCache& embeddings, TrainConfig config,
            SimMode sim_mode, PolicyConfig validation_policy);

    void refresh();
    const NeighborMap& neighbor_map() const { return map_; }
    std::span<const CorpusRecord* const> records() const { return records_; }

    /// Score-function gradient of the expected reward at one anchor. Uses
    /// the given baseline, or the running one when absent.
    GradientEstimate estimate_gradient(std::size_t anchor, std::size_t samples, std::optional<double> baseline);

    TrainStep reinforce_update(std::size_t anchor);
    ValidationPoint validate(std::size_t step);
    TrainResult train();

    /// Current (t, gamma) of an anchor; fitted from greedy neighbour scores on
    /// first use.
    std::pair<double, double> anchor_fit(std::size_t anchor);
    ClassWeights class_weights() const { return weights_; }

private:
    std::vector<double> neighbour_scores(std::size_t anchor, const std::vector<std::size_t>& nbrs);
    std::vector<std::size_t> neighbours_of(std::size_t anchor);
    void refit(std::size_t anchor);
    void apply(const PolicyParams& grad);

    const Corpus* corpus_;
    SegmentationPolicy* policy_;
    EmbeddingCache* embeddings_;
    TrainConfig config_;
    SimMode sim_mode_;
    PolicyConfig validation_policy_;
    std::vector<const CorpusRecord*> records_;
    NeighborMap map_;
    ClassWeights weights_;
    std::vector<std::optional<std::pair<double, double>>> fits_;
    std::optional<double> baseline_;
    std::mt19937_64 rng_;
    PolicyParams adam_m_, adam_v_;
    std::size_t adam_t_ = 0;
};

}  // namespace mvrcache
