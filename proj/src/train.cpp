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

#include "mvrcache/train.h"

#include <algorithm>
#include <cmath>

#include "mvrcache/error.h"

namespace mvrcache {

namespace {

MultiVector embed_segments(const Prompt& prompt, const Segmentation& seg, EmbeddingCache& embeddings) {
    return MultiVector(embeddings.get_many(apply_segmentation(prompt, seg)));
}

}  // namespace

void TrainConfig::validate() const {
    if (refresh_every < 1 || samples < 1) {
        throw Error(ErrorCode::kConfig, "refresh period and sample count must be >= 1");
    }
    if (!(learning_rate > 0.0) || !(baseline_decay >= 0.0 && baseline_decay < 1.0)) {
        throw Error(ErrorCode::kConfig, "learning rate must be positive and baseline decay in [0,1)");
    }
    if (smoothing < 0.0) {
        throw Error(ErrorCode::kConfig, "smoothing must be non-negative");
    }
}

ClassWeights rebalanced_weights(const std::vector<bool>& labels, double smoothing) {
    if (labels.empty()) {
        throw Error(ErrorCode::kInsufficientData, "no labels to rebalance");
    }
    double pos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
    double n = static_cast<double>(labels.size());
    double pi = (pos + smoothing) / (n + 2.0 * smoothing);
    return {1.0 / pi, 1.0 / (1.0 - pi)};
}

double step_reward(std::span<const double> scores, const std::vector<bool>& labels, double t, double gamma,
                   ClassWeights weights) {
    double r = 0.0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        r -= weighted_bce(scores[j], labels[j], t, gamma, weights);
    }
    return r;
}

std::vector<std::size_t> NeighborMap::anchors() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < inverse.size(); ++i) {
        if (!inverse[i].empty()) {
            out.push_back(i);
        }
    }
    return out;
}

NeighborMap refresh_neighbor_map(std::span<const CorpusRecord* const> records, const Segmenter& segmenter,
                                 EmbeddingCache& embeddings, SimMode mode, kernels::Exec exec) {
    std::vector<MultiVector> mvs;
    mvs.reserve(records.size());
    for (const auto* r : records) {
        mvs.push_back(embed_segments(r->prompt, segmenter.segment(r->prompt), embeddings));
    }
    auto best = kernels::nearest_predecessors(mvs, mode, exec);
    NeighborMap map;
    map.nn.resize(records.size(), kernels::kNone);
    map.score.resize(records.size(), 0.0);
    map.label.resize(records.size(), false);
    map.inverse.resize(records.size());
    for (std::size_t i = 1; i < records.size(); ++i) {
        map.nn[i] = best[i].index;
        map.score[i] = best[i].score;
        map.label[i] = responses_equal(records[i]->response, records[best[i].index]->response);
        map.inverse[best[i].index].push_back(i);
    }
    return map;
}

Trainer::Trainer(const Corpus& corpus, SegmentationPolicy& policy, EmbeddingCache& embeddings, TrainConfig config,
                 SimMode sim_mode, PolicyConfig validation_policy)
    : corpus_(&corpus),
      policy_(&policy),
      embeddings_(&embeddings),
      config_(config),
      sim_mode_(sim_mode),
      validation_policy_(validation_policy),
      rng_(config.seed) {
    config_.validate();
    for (auto i : corpus.split("train")) {
        records_.push_back(&corpus.at(i));
    }
    adam_m_ = policy.params().zeros_like();
    adam_v_ = adam_m_;
    refresh();
}

void Trainer::refresh() {
    PolicySegmenter policy_seg(*policy_);
    map_ = refresh_neighbor_map(records_, MemoizedSegmenter(policy_seg), *embeddings_, sim_mode_, config_.exec);
    std::vector<bool> labels;
    for (std::size_t i = 1; i < records_.size(); ++i) {
        labels.push_back(map_.label[i]);
    }
    weights_ = labels.empty() ? ClassWeights{} : rebalanced_weights(labels, config_.smoothing);
    fits_.assign(records_.size(), std::nullopt);
}

std::vector<std::size_t> Trainer::neighbours_of(std::size_t anchor) {
    auto nbrs = map_.inverse.at(anchor);
    if (config_.max_neighbors > 0 && nbrs.size() > config_.max_neighbors) {
        std::shuffle(nbrs.begin(), nbrs.end(), rng_);
        nbrs.resize(config_.max_neighbors);
        std::sort(nbrs.begin(), nbrs.end());
    }
    return nbrs;
}

std::vector<double> Trainer::neighbour_scores(std::size_t anchor, const std::vector<std::size_t>& nbrs) {
    PolicySegmenter policy_seg(*policy_);
    MemoizedSegmenter seg(policy_seg);
    const auto& a = records_[anchor]->prompt;
    auto amv = embed_segments(a, seg.segment(a), *embeddings_);
    std::vector<double> out;
    for (auto j : nbrs) {
        const auto& p = records_[j]->prompt;
        out.push_back(std::min(1.0, smaxsim(amv, embed_segments(p, seg.segment(p), *embeddings_), sim_mode_)));
    }
    return out;
}

void Trainer::refit(std::size_t anchor) {
    const auto& nbrs = map_.inverse.at(anchor);
    auto scores = neighbour_scores(anchor, nbrs);
    std::vector<Observation> obs;
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
        obs.push_back({scores[k], map_.label[nbrs[k]]});
    }
    try {
        auto options = validation_policy_.fit_options();
        options.likelihood_level = 0.0;
        auto fit = fit_logistic(obs, weights_, options);
        fits_[anchor] = std::make_pair(fit.t, fit.gamma);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::kNotIdentifiable) {
            throw;
        }
        fits_[anchor] = std::make_pair(config_.cold_t, config_.cold_gamma);
    }
}

std::pair<double, double> Trainer::anchor_fit(std::size_t anchor) {
    if (!fits_.at(anchor)) {
        refit(anchor);
    }
    return *fits_[anchor];
}

GradientEstimate Trainer::estimate_gradient(std::size_t anchor, std::size_t samples,
                                            std::optional<double> baseline) {
    auto nbrs = neighbours_of(anchor);
    if (nbrs.empty()) {
        throw Error(ErrorCode::kTrainingInfeasible, "anchor " + records_.at(anchor)->prompt.id + " has no neighbours");
    }
    auto [t, gamma] = anchor_fit(anchor);
    std::vector<bool> labels;
    for (auto j : nbrs) {
        labels.push_back(map_.label[j]);
    }

    // Sequence 0 is the anchor, the rest are its neighbours.
    std::vector<const Prompt*> seqs{&records_[anchor]->prompt};
    for (auto j : nbrs) {
        seqs.push_back(&records_[j]->prompt);
    }
    std::vector<EncodedPrompt> enc;
    enc.reserve(seqs.size());
    for (const auto* p : seqs) {
        enc.push_back(policy_->encode(*p));
    }

    std::vector<std::vector<DecodeTrace>> traces(seqs.size());
    GradientEstimate est;
    est.rewards.resize(samples);
    std::vector<double> scores(nbrs.size());
    for (std::size_t s = 0; s < samples; ++s) {
        for (std::size_t q = 0; q < seqs.size(); ++q) {
            traces[q].push_back(policy_->decode(enc[q], DecodeMode::kSample, &rng_));
        }
        auto amv = embed_segments(*seqs[0], traces[0].back().segmentation, *embeddings_);
        for (std::size_t k = 0; k < nbrs.size(); ++k) {
            auto nmv = embed_segments(*seqs[k + 1], traces[k + 1].back().segmentation, *embeddings_);
            scores[k] = std::min(1.0, smaxsim(amv, nmv, sim_mode_));
        }
        est.rewards[s] = step_reward(scores, labels, t, gamma, weights_);
    }

    double mean = 0.0;
    for (double r : est.rewards) {
        mean += r / static_cast<double>(samples);
    }
    if (baseline) {
        est.baseline = *baseline;
    } else {
        if (!baseline_) {
            baseline_ = mean;
        }
        est.baseline = *baseline_;
    }
    std::vector<double> w(samples);
    for (std::size_t s = 0; s < samples; ++s) {
        w[s] = (est.rewards[s] - est.baseline) / static_cast<double>(samples);
    }
    est.grad = policy_->params().zeros_like();
    for (std::size_t q = 0; q < seqs.size(); ++q) {
        std::vector<const DecodeTrace*> ptrs;
        for (const auto& tr : traces[q]) {
            ptrs.push_back(&tr);
        }
        policy_->accumulate_log_prob_grad(enc[q], ptrs, w, est.grad);
    }
    if (!baseline) {
        *baseline_ = config_.baseline_decay * *baseline_ + (1.0 - config_.baseline_decay) * mean;
    }
    return est;
}

void Trainer::apply(const PolicyParams& grad) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++adam_t_;
    double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_t_));
    double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_t_));
    std::vector<Eigen::MatrixXd*> p, m, v;
    std::vector<const Eigen::MatrixXd*> g;
    policy_->params().visit([&](const char*, Eigen::MatrixXd& x) { p.push_back(&x); });
    adam_m_.visit([&](const char*, Eigen::MatrixXd& x) { m.push_back(&x); });
    adam_v_.visit([&](const char*, Eigen::MatrixXd& x) { v.push_back(&x); });
    grad.visit([&](const char*, const Eigen::MatrixXd& x) { g.push_back(&x); });
    for (std::size_t i = 0; i < p.size(); ++i) {
        *m[i] = b1 * *m[i] + (1.0 - b1) * *g[i];
        *v[i] = b2 * *v[i] + (1.0 - b2) * g[i]->cwiseAbs2();
        // Ascent: the objective is the expected reward.
        p[i]->array() += config_.learning_rate * (m[i]->array() / c1) / ((v[i]->array() / c2).sqrt() + eps);
    }
}

TrainStep Trainer::reinforce_update(std::size_t anchor) {
    auto est = estimate_gradient(anchor, config_.samples, std::nullopt);
    TrainStep st;
    st.anchor = records_[anchor]->prompt.id;
    st.neighbors = std::min(map_.inverse[anchor].size(),
                            config_.max_neighbors > 0 ? config_.max_neighbors : map_.inverse[anchor].size());
    for (double r : est.rewards) {
        st.reward += r / static_cast<double>(est.rewards.size());
    }
    st.baseline = est.baseline;
    double norm2 = est.grad.squared_norm();
    if (!std::isfinite(norm2)) {
        throw Error(ErrorCode::kNumeric, "non-finite policy gradient at anchor " + st.anchor + " (reward " +
                                             std::to_string(st.reward) + ", baseline " +
                                             std::to_string(st.baseline) + ")");
    }
    st.grad_norm = std::sqrt(norm2);
    if (config_.grad_clip > 0.0 && st.grad_norm > config_.grad_clip) {
        auto scaled = est.grad.zeros_like();
        scaled.add_scaled(est.grad, config_.grad_clip / st.grad_norm);
        est.grad = std::move(scaled);
    }
    if (norm2 > 0.0) {
        apply(est.grad);
    }
    refit(anchor);
    st.t = fits_[anchor]->first;
    st.gamma = fits_[anchor]->second;
    return st;
}

ValidationPoint Trainer::validate(std::size_t step) {
    ValidationPoint vp;
    vp.step = step;
    const auto& val = corpus_->split("val");
    if (val.empty()) {
        return vp;
    }
    SemanticCache cache(embeddings_->fingerprint(), embeddings_->dimension(), StoreConfig{20, sim_mode_, config_.exec});
    PolicySegmenter policy_seg(*policy_);
    MemoizedSegmenter seg(policy_seg);
    Oracle oracle(*corpus_);
    CacheEngine engine({&cache, embeddings_, &seg, &seg, &oracle}, validation_policy_, config_.seed);
    std::size_t hits = 0, errors = 0;
    for (auto i : val) {
        const auto& r = corpus_->at(i);
        auto rec = engine.process_prompt(r.prompt, r.response);
        hits += rec.hit ? 1 : 0;
        errors += rec.hit && !rec.correct ? 1 : 0;
    }
    vp.hit_rate = static_cast<double>(hits) / static_cast<double>(val.size());
    vp.error_rate = static_cast<double>(errors) / static_cast<double>(val.size());
    return vp;
}

TrainResult Trainer::train() {
    TrainResult result;
    if (config_.steps == 0) {
        return result;
    }
    if (records_.size() < 2) {
        throw Error(ErrorCode::kTrainingInfeasible, "train split needs at least two prompts");
    }
    auto best_params = policy_->params();
    double best_hit = -1.0;
    auto checkpoint = [&](std::size_t step) {
        if (!config_.validate_during_training) {
            return;
        }
        auto vp = validate(step);
        result.validation.push_back(vp);
        if (vp.hit_rate > best_hit) {
            best_hit = vp.hit_rate;
            best_params = policy_->params();
            result.best_step = step;
        }
    };
    checkpoint(0);
    auto anchors = map_.anchors();
    for (std::size_t step = 1; step <= config_.steps; ++step) {
        if (anchors.empty()) {
            throw Error(ErrorCode::kTrainingInfeasible, "no training prompt has a neighbour");
        }
        std::uniform_int_distribution<std::size_t> pick(0, anchors.size() - 1);
        auto st = reinforce_update(anchors[pick(rng_)]);
        st.step = step;
        result.log.push_back(std::move(st));
        if (step % config_.refresh_every == 0) {
            refresh();
            anchors = map_.anchors();
            checkpoint(step);
        }
    }
    if (config_.validate_during_training) {
        if (config_.steps % config_.refresh_every != 0) {
            checkpoint(config_.steps);
        }
        policy_->params() = best_params;
    }
    return result;
}

}  // namespace mvrcache
