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

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mvrcache/corpus.h"

namespace mvrcache {

enum class CandidateVariant { kPunctuation, kSentence, kKeyword, kToken };

CandidateVariant parse_candidate_variant(std::string_view name);
std::string_view to_string(CandidateVariant v);

/// Strictly increasing 1-based token indices; the last element is always the
/// stop slot at L.
struct CandidatePositions {
    std::vector<std::size_t> positions;

    std::size_t size() const { return positions.size(); }
    std::size_t stop() const { return positions.back(); }
};

CandidatePositions candidate_positions(const Prompt& prompt,
                                       CandidateVariant variant = CandidateVariant::kPunctuation,
                                       std::string_view punctuation = kDefaultPunctuation);

/// Split indices, stop slot excluded. Segment t covers tokens
/// (splits[t-1], splits[t]] with implicit bounds 0 and L.
struct Segmentation {
    std::vector<std::size_t> splits;

    std::size_t segments() const { return splits.size() + 1; }
    friend bool operator==(const Segmentation&, const Segmentation&) = default;
};

std::vector<std::string> apply_segmentation(const Prompt& prompt, const Segmentation& seg);

struct SegmenterConfig {
    std::size_t vocab_buckets = 8192;
    std::size_t token_dim = 64;
    std::size_t hidden = 128;  // split evenly between the two encoder directions
    std::size_t max_segments = 16;
    std::string punctuation{kDefaultPunctuation};
    CandidateVariant variant = CandidateVariant::kPunctuation;
    std::uint64_t init_seed = 7;

    void validate() const;
    std::string fingerprint() const;
};

/// All trainable tensors. Vectors are stored as single-column matrices so
/// every tensor can be visited uniformly.
struct PolicyParams {
    Eigen::MatrixXd emb;                  // token_dim x vocab_buckets
    Eigen::MatrixXd ef_w, ef_u, ef_b;     // forward encoder cell
    Eigen::MatrixXd eb_w, eb_u, eb_b;     // backward encoder cell
    Eigen::MatrixXd wp, bp;               // projection
    Eigen::MatrixXd dw, du, db;           // decoder cell
    Eigen::MatrixXd w1, w2, v;            // pointer attention
    Eigen::MatrixXd h_stop;               // pointer state of the stop slot

    template <class F>
    void visit(F&& f) {
        f("emb", emb);
        f("ef_w", ef_w);
        f("ef_u", ef_u);
        f("ef_b", ef_b);
        f("eb_w", eb_w);
        f("eb_u", eb_u);
        f("eb_b", eb_b);
        f("wp", wp);
        f("bp", bp);
        f("dw", dw);
        f("du", du);
        f("db", db);
        f("w1", w1);
        f("w2", w2);
        f("v", v);
        f("h_stop", h_stop);
    }
    template <class F>
    void visit(F&& f) const {
        const_cast<PolicyParams*>(this)->visit([&](const char* name, Eigen::MatrixXd& m) {
            f(name, static_cast<const Eigen::MatrixXd&>(m));
        });
    }

    PolicyParams zeros_like() const;
    std::size_t parameter_count() const;
    void add_scaled(const PolicyParams& other, double scale);
    double squared_norm() const;
    bool all_finite() const;
};

struct LstmTrace {
    Eigen::MatrixXd x;     // in x T
    Eigen::MatrixXd act;   // 4n x T, activated gates (i, f, g, o)
    Eigen::MatrixXd h;     // n x (T+1), column 0 is the initial state
    Eigen::MatrixXd c;     // n x (T+1)
};

/// Forward pass of one prompt up to the decoder's initial state. Shared by
/// every decode of that prompt.
struct EncodedPrompt {
    CandidatePositions candidates;
    std::vector<std::size_t> buckets;
    LstmTrace enc_f, enc_b;
    Eigen::MatrixXd e;         // hidden x L, concatenated encoder states
    Eigen::MatrixXd h;         // hidden x L, projected pointer states
    LstmTrace init;            // decoder run over h_1..h_L
    Eigen::MatrixXd pointers;  // hidden x |candidates|
    Eigen::MatrixXd w1p;       // W1 * pointers
};

struct DecoderState {
    Eigen::VectorXd d;
    Eigen::VectorXd c;
    std::size_t last = 0;  // last selected position, 0 before any selection
    std::size_t step = 0;
};

struct DecodeStep {
    std::vector<std::size_t> admissible;  // candidate slots
    std::vector<double> probs;            // over admissible
    std::size_t chosen = 0;               // index into admissible
    Eigen::MatrixXd z;                    // tanh pre-scores, hidden x |admissible|
    Eigen::VectorXd d;                    // context state at this step
    LstmTrace next;                       // transition fed by the readout, empty on the last step
};

struct DecodeTrace {
    Segmentation segmentation;
    double log_prob = 0.0;
    std::vector<DecodeStep> steps;
};

enum class DecodeMode { kGreedy, kSample };

class SegmentationPolicy {
public:
    SegmentationPolicy() = default;
    explicit SegmentationPolicy(SegmenterConfig config);

    const SegmenterConfig& config() const { return config_; }
    PolicyParams& params() { return params_; }
    const PolicyParams& params() const { return params_; }

    EncodedPrompt encode(const Prompt& prompt) const;
    EncodedPrompt encode(const Prompt& prompt, const CandidatePositions& candidates) const;
    DecoderState initial_state(const EncodedPrompt& enc) const;

    /// Distribution over all candidate slots; masked-out slots get exactly 0.
    std::vector<double> step_distribution(const EncodedPrompt& enc, const Eigen::VectorXd& d,
                                          const std::vector<char>& mask) const;

    DecodeTrace decode(const EncodedPrompt& enc, DecodeMode mode, std::mt19937_64* rng = nullptr) const;
    /// Teacher-forced decode of a known segmentation.
    DecodeTrace replay(const EncodedPrompt& enc, const Segmentation& seg) const;

    /// Accumulates sum_k weight_k * grad log pi(trace_k) into grad.
    void accumulate_log_prob_grad(const EncodedPrompt& enc, const std::vector<const DecodeTrace*>& traces,
                                  const std::vector<double>& weights, PolicyParams& grad) const;

    void save(const std::filesystem::path& path) const;
    static SegmentationPolicy load(const std::filesystem::path& path);

private:
    DecodeTrace run(const EncodedPrompt& enc, DecodeMode mode, std::mt19937_64* rng, const Segmentation* forced) const;

    SegmenterConfig config_;
    PolicyParams params_;
};

/// policy_step: distribution over candidate slots given a decoder state.
std::vector<double> policy_step(const SegmentationPolicy& policy, const EncodedPrompt& enc,
                                const DecoderState& state, const std::vector<char>& mask);

struct DecodeResult {
    Segmentation segmentation;
    double log_prob = 0.0;
};

DecodeResult decode(const SegmentationPolicy& policy, const Prompt& prompt, const CandidatePositions& positions,
                    DecodeMode mode, std::uint64_t seed = 0);

/// Produces the segmentation used to build multi-vector representations.
class Segmenter {
public:
    virtual ~Segmenter() = default;
    virtual Segmentation segment(const Prompt& prompt) const = 0;
    virtual std::string fingerprint() const = 0;
};

class WholePromptSegmenter final : public Segmenter {
public:
    Segmentation segment(const Prompt&) const override { return {}; }
    std::string fingerprint() const override { return "whole"; }
};

/// Splits at every candidate position, optionally capped.
class SplitAllSegmenter final : public Segmenter {
public:
    SplitAllSegmenter(CandidateVariant variant, std::string punctuation = std::string(kDefaultPunctuation),
                      std::size_t max_segments = 0);
    Segmentation segment(const Prompt& prompt) const override;
    std::string fingerprint() const override;

private:
    CandidateVariant variant_;
    std::string punctuation_;
    std::size_t max_segments_;
};

class PolicySegmenter final : public Segmenter {
public:
    explicit PolicySegmenter(const SegmentationPolicy& policy) : policy_(&policy) {}
    Segmentation segment(const Prompt& prompt) const override;
    std::string fingerprint() const override { return "policy:" + policy_->config().fingerprint(); }

private:
    const SegmentationPolicy* policy_;
};

/// Caches another segmenter's output by prompt text. Valid only while the
/// wrapped segmenter is unchanged.
class MemoizedSegmenter final : public Segmenter {
public:
    explicit MemoizedSegmenter(const Segmenter& inner) : inner_(&inner) {}
    Segmentation segment(const Prompt& prompt) const override;
    std::string fingerprint() const override { return inner_->fingerprint(); }

private:
    const Segmenter* inner_;
    mutable std::mutex mu_;
    mutable std::unordered_map<std::string, Segmentation> memo_;
};

}  // namespace mvrcache
