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

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mvrcache {

inline constexpr std::string_view kDefaultPunctuation = ",.;:!?";

/// Lowercases ASCII, emits maximal alphanumeric runs as tokens and every
/// character of `punctuation` as a token of its own. Everything else
/// separates tokens. Bytes >= 0x80 are treated as word characters so UTF-8
/// sequences are never split.
std::vector<std::string> tokenize(std::string_view text,
                                  std::string_view punctuation = kDefaultPunctuation);

bool is_punctuation_token(std::string_view token, std::string_view punctuation = kDefaultPunctuation);

struct Prompt {
    std::string id;
    std::string text;
    std::vector<std::string> tokens;

    std::size_t length() const { return tokens.size(); }
};

Prompt make_prompt(std::string id, std::string text,
                   std::string_view punctuation = kDefaultPunctuation);

struct Response {
    std::string text;
};

/// Outer-whitespace trim followed by a case-sensitive byte comparison.
bool responses_equal(std::string_view a, std::string_view b);
inline bool responses_equal(const Response& a, const Response& b) {
    return responses_equal(a.text, b.text);
}

struct CorpusRecord {
    Prompt prompt;
    Response response;
};

struct SplitCounts {
    std::size_t train = 0;
    std::size_t val = 0;
};

struct LoadOptions {
    std::optional<std::filesystem::path> split_file;
    /// Used only when neither the records nor a split file assign splits.
    SplitCounts counts;
    std::string punctuation{kDefaultPunctuation};
};

class Corpus {
public:
    Corpus() = default;
    Corpus(std::vector<CorpusRecord> records, std::map<std::string, std::vector<std::size_t>> splits);

    const std::vector<CorpusRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    const CorpusRecord& at(std::size_t i) const { return records_.at(i); }

    std::optional<std::size_t> find(std::string_view id) const;

    /// Indices of a named split in arrival order. Unknown names yield an
    /// empty list.
    const std::vector<std::size_t>& split(std::string_view name) const;
    const std::map<std::string, std::vector<std::size_t>>& splits() const { return splits_; }

private:
    std::vector<CorpusRecord> records_;
    std::map<std::string, std::vector<std::size_t>> splits_;
    std::unordered_map<std::string, std::size_t> index_;
};

Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& options = {});

/// Parses corpus text directly; `source` only labels error messages.
Corpus parse_corpus(std::string_view content, const LoadOptions& options = {},
                    std::string_view source = "<memory>");

void write_corpus(const std::filesystem::path& path, const Corpus& corpus);

/// Serves stored ground-truth responses in place of a live model and counts
/// every call, which is how replay accounts for model invocations.
class Oracle {
public:
    explicit Oracle(const Corpus& corpus) : corpus_(&corpus) {}

    Response respond(std::string_view id);
    std::uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }
    void reset_calls() { calls_.store(0, std::memory_order_relaxed); }

private:
    const Corpus* corpus_;
    std::atomic<std::uint64_t> calls_{0};
};

}  // namespace mvrcache
