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

#include "mvrcache/corpus.h"

namespace mvrcache {

/// Clause-composition review corpus. Each prompt asks whether a movie review
/// is friendly and composes a topic clause, a sentiment clause and filler
/// clauses. The response depends on (topic, sentiment) only, so two prompts
/// that share a topic and fillers but differ in sentiment look alike as a
/// whole while needing different answers.
struct SynthConfig {
    std::uint64_t seed = 20260101;
    std::size_t train = 3000;
    std::size_t val = 500;
    std::size_t test = 2000;
    std::size_t scenarios = 2;       // (topic, filler set) combinations the stream draws from
    std::size_t fillers = 3;         // filler clauses per prompt
    std::size_t sentiment_phrases = 3;
    std::size_t topic_templates = 1;
    double mixed_fraction = 0.0;     // share of prompts with a mixed verdict
    bool sentiment_last = true;      // otherwise inserted at a random clause slot
    /// Offsets the topic and filler vocabulary so two corpora can share
    /// clause structure while drawing different scenarios.
    std::size_t vocabulary_offset = 0;

    void validate() const;
};

Corpus generate_synthetic_corpus(const SynthConfig& config);

}  // namespace mvrcache
