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

#include "mvrcache/synth.h"

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mvrcache/error.h"

namespace mvrcache {

namespace {

struct Topic {
    const char* genre;
    const char* kind;
    const char* subject;
};

constexpr std::array<Topic, 12> kTopics{{
    {"crime", "drama", "detectives"},   {"crime", "thriller", "gangsters"},
    {"space", "opera", "starships"},    {"space", "documentary", "astronauts"},
    {"romantic", "comedy", "weddings"}, {"romantic", "drama", "letters"},
    {"war", "documentary", "soldiers"}, {"war", "epic", "generals"},
    {"horror", "thriller", "ghosts"},   {"horror", "comedy", "zombies"},
    {"fantasy", "epic", "dragons"},     {"fantasy", "musical", "fairies"},
}};

constexpr std::array<const char*, 3> kTopicTemplates{
    "this review is about a {g} {k} featuring {s}",
    "the film under review is a {g} {k} with {s}",
    "a {g} {k} about {s} is reviewed here",
};

// Phrases of one polarity share their sentiment word and nothing else with
// the other polarity, so a clause-level comparison can tell them apart.
constexpr std::array<const char*, 5> kPositive{
    "honestly i loved it", "i truly loved this one", "loved it from start to finish",
    "we all loved the whole thing", "my family loved every minute",
};
constexpr std::array<const char*, 5> kNegative{
    "frankly i hated it", "i really hated this film", "hated it from the opening scene",
    "everyone hated the entire mess", "my friends hated each moment",
};
constexpr std::array<const char*, 2> kMixed{
    "i loved parts of it but hated others",
    "loved the start and hated the ending",
};

constexpr std::array<const char*, 16> kFillers{
    "i watched it at home last weekend",      "it runs a little over two hours",
    "my neighbour recommended it to me",      "it came out last year",
    "the soundtrack is mostly old jazz",      "i streamed it on a long train ride",
    "the cast is mostly unknown actors",      "the cinema was almost empty",
    "it is based on a short novel",           "the trailer gave away very little",
    "i saw it with my younger brother",       "the subtitles were slightly out of sync",
    "the popcorn was stale and overpriced",   "it was shown in black and white",
    "the director is from norway",            "the poster looks very retro",
};

constexpr std::array<const char*, 3> kVerdicts{"negative", "positive", "mixed"};

std::string fill_template(std::string tpl, const Topic& t) {
    auto put = [&](const std::string& key, const char* value) {
        auto at = tpl.find(key);
        tpl.replace(at, key.size(), value);
    };
    put("{g}", t.genre);
    put("{k}", t.kind);
    put("{s}", t.subject);
    return tpl;
}

template <class T>
std::size_t uniform_index(std::mt19937_64& rng, T n) {
    return std::uniform_int_distribution<std::size_t>(0, static_cast<std::size_t>(n) - 1)(rng);
}

}  // namespace

void SynthConfig::validate() const {
    if (train + val + test == 0) {
        throw Error(ErrorCode::kConfig, "synthetic corpus needs at least one prompt");
    }
    if (scenarios < 1 || fillers > kFillers.size()) {
        throw Error(ErrorCode::kConfig, "need >= 1 scenario and at most " + std::to_string(kFillers.size()) +
                                            " fillers");
    }
    if (sentiment_phrases < 1 || sentiment_phrases > kPositive.size()) {
        throw Error(ErrorCode::kConfig, "sentiment phrases must lie in [1, 5]");
    }
    if (topic_templates < 1 || topic_templates > kTopicTemplates.size()) {
        throw Error(ErrorCode::kConfig, "topic templates must lie in [1, 3]");
    }
    if (!(mixed_fraction >= 0.0 && mixed_fraction < 1.0)) {
        throw Error(ErrorCode::kConfig, "mixed fraction must lie in [0, 1)");
    }
}

Corpus generate_synthetic_corpus(const SynthConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    struct Scenario {
        std::size_t topic;
        std::vector<std::size_t> fillers;
    };
    std::vector<Scenario> scenarios(config.scenarios);
    for (auto& sc : scenarios) {
        sc.topic = (uniform_index(rng, kTopics.size()) + config.vocabulary_offset) % kTopics.size();
        std::vector<std::size_t> all(kFillers.size());
        std::iota(all.begin(), all.end(), 0);
        std::shuffle(all.begin(), all.end(), rng);
        for (std::size_t k = 0; k < config.fillers; ++k) {
            sc.fillers.push_back((all[k] + config.vocabulary_offset) % kFillers.size());
        }
    }

    auto n = config.train + config.val + config.test;
    std::vector<CorpusRecord> records;
    records.reserve(n);
    std::map<std::string, std::vector<std::size_t>> splits;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& sc = scenarios[uniform_index(rng, scenarios.size())];
        std::size_t verdict = unit(rng) < config.mixed_fraction ? 2 : uniform_index(rng, 2);
        const auto& topic = kTopics[sc.topic];

        std::vector<std::string> clauses;
        clauses.push_back(fill_template(kTopicTemplates[uniform_index(rng, config.topic_templates)], topic));
        for (auto f : sc.fillers) {
            clauses.emplace_back(kFillers[f]);
        }
        std::string sentiment = verdict == 2   ? kMixed[uniform_index(rng, kMixed.size())]
                                : verdict == 1 ? kPositive[uniform_index(rng, config.sentiment_phrases)]
                                               : kNegative[uniform_index(rng, config.sentiment_phrases)];
        auto slot = config.sentiment_last ? clauses.size() : 1 + uniform_index(rng, clauses.size());
        clauses.insert(clauses.begin() + static_cast<std::ptrdiff_t>(slot), sentiment);

        std::string text = "is this movie review friendly? ";
        for (std::size_t k = 0; k < clauses.size(); ++k) {
            text += (k ? ", " : "") + clauses[k];
        }
        text += ".";
        std::string response =
            std::string(topic.genre) + " " + topic.kind + " review: " + kVerdicts[verdict];

        char id[32];
        std::snprintf(id, sizeof id, "syn-%05zu", i);
        records.push_back({make_prompt(id, std::move(text)), Response{std::move(response)}});
        auto name = i < config.train ? "train" : (i < config.train + config.val ? "val" : "test");
        splits[name].push_back(i);
    }
    return Corpus(std::move(records), std::move(splits));
}

}  // namespace mvrcache
