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

#include "mvrcache/policy.h"

#include <chrono>

#include "mvrcache/error.h"

namespace mvrcache {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

Protocol parse_protocol(std::string_view name) {
    if (name == "cache-on-miss") return Protocol::kCacheOnMiss;
    if (name == "always-cache") return Protocol::kAlwaysCache;
    throw Error(ErrorCode::kConfig, "unknown protocol \"" + std::string(name) + "\"");
}

std::string_view to_string(Protocol p) {
    return p == Protocol::kCacheOnMiss ? "cache-on-miss" : "always-cache";
}

void PolicyConfig::validate() const {
    exploration.validate();
}

StageLatency& StageLatency::operator+=(const StageLatency& o) {
    segment_ms += o.segment_ms;
    embed_ms += o.embed_ms;
    retrieve_ms += o.retrieve_ms;
    decide_ms += o.decide_ms;
    oracle_ms += o.oracle_ms;
    return *this;
}

Representation represent(const Prompt& prompt, const Segmenter& segmenter, EmbeddingCache& embeddings) {
    Representation r;
    r.segmentation = segmenter.segment(prompt);
    auto texts = apply_segmentation(prompt, r.segmentation);
    r.multivector = MultiVector(embeddings.get_many(texts));
    r.single_vector = r.segmentation.splits.empty() ? embeddings.get(texts.front())
                                                    : embeddings.get(apply_segmentation(prompt, {}).front());
    return r;
}

CacheEngine::CacheEngine(Parts parts, PolicyConfig config, std::uint64_t seed, double oracle_latency_ms)
    : parts_(parts), config_(config), rng_(seed), oracle_latency_ms_(oracle_latency_ms) {
    config_.validate();
}

StepRecord CacheEngine::process_prompt(const Prompt& prompt, const Response& ground_truth) {
    StepRecord rec;
    rec.step = step_++;
    rec.prompt_id = prompt.id;
    auto& d = rec.decision;

    auto t0 = Clock::now();
    auto seg = parts_.query_segmenter->segment(prompt);
    rec.latency.segment_ms = ms_since(t0);
    rec.segments = seg.segments();

    t0 = Clock::now();
    auto texts = apply_segmentation(prompt, seg);
    MultiVector mv(parts_.embeddings->get_many(texts));
    auto whole = apply_segmentation(prompt, {}).front();
    auto sv = parts_.embeddings->get(whole);
    rec.latency.embed_ms = ms_since(t0);

    t0 = Clock::now();
    auto nn = parts_.cache->retrieve_nn(mv, sv);
    rec.latency.retrieve_ms = ms_since(t0);

    t0 = Clock::now();
    if (nn) {
        d.nn = nn->entry_id;
        d.s = std::min(nn->score, 1.0);
        auto fit = parts_.cache->current_fit(nn->entry_id, config_.fit_options(), config_.min_obs_per_class);
        d.tau = fit ? exploration_prob(*fit, d.s, config_.exploration) : 1.0;
        double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
        d.action = u < d.tau ? Action::kExplore : Action::kExploit;
    }
    rec.latency.decide_ms = ms_since(t0);

    if (d.action == Action::kExploit) {
        d.response = parts_.cache->response(*d.nn);
        rec.hit = true;
        rec.correct = responses_equal(d.response, ground_truth);
    } else {
        t0 = Clock::now();
        d.response = parts_.oracle->respond(prompt.id);
        rec.latency.oracle_ms = ms_since(t0) + oracle_latency_ms_;
        if (d.nn) {
            bool c = responses_equal(d.response, parts_.cache->response(*d.nn));
            d.label = c;
            parts_.cache->append_observation(*d.nn, d.s, c);
        }
    }

    if (d.action == Action::kExplore || config_.protocol == Protocol::kAlwaysCache) {
        if (parts_.entry_segmenter == parts_.query_segmenter) {
            parts_.cache->insert(prompt, std::move(seg), std::move(mv), std::move(sv), d.response,
                                 parts_.embeddings->fingerprint());
        } else {
            auto r = represent(prompt, *parts_.entry_segmenter, *parts_.embeddings);
            parts_.cache->insert(prompt, std::move(r.segmentation), std::move(r.multivector),
                                 std::move(r.single_vector), d.response, parts_.embeddings->fingerprint());
        }
    }
    return rec;
}

}  // namespace mvrcache
