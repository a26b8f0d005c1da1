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

#include "mvrcache/corpus.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "mvrcache/error.h"

namespace mvrcache {

namespace {

bool is_word_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

std::string_view trim(std::string_view s) {
    constexpr std::string_view ws = " \t\r\n\f\v";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) {
        return {};
    }
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

const std::set<std::string, std::less<>> kSplitNames = {"train", "val", "test"};

}  // namespace

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::kParse: return "parse error";
        case ErrorCode::kDuplicateKey: return "duplicate key";
        case ErrorCode::kEmptyCorpus: return "empty corpus";
        case ErrorCode::kNotFound: return "not found";
        case ErrorCode::kEmptySegment: return "empty segment";
        case ErrorCode::kInvalidSegmentation: return "invalid segmentation";
        case ErrorCode::kNumeric: return "numeric error";
        case ErrorCode::kNotIdentifiable: return "not identifiable";
        case ErrorCode::kConfig: return "configuration error";
        case ErrorCode::kRange: return "range error";
        case ErrorCode::kRetryable: return "retryable error";
        case ErrorCode::kService: return "service error";
        case ErrorCode::kInsufficientData: return "insufficient data";
        case ErrorCode::kTrainingInfeasible: return "training infeasible";
        case ErrorCode::kIo: return "io error";
    }
    return "error";
}

std::vector<std::string> tokenize(std::string_view text, std::string_view punctuation) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (is_word_byte(c)) {
            cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
            continue;
        }
        if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
        if (punctuation.find(ch) != std::string_view::npos) {
            out.emplace_back(1, ch);
        }
    }
    if (!cur.empty()) {
        out.push_back(std::move(cur));
    }
    return out;
}

bool is_punctuation_token(std::string_view token, std::string_view punctuation) {
    return token.size() == 1 && punctuation.find(token[0]) != std::string_view::npos;
}

Prompt make_prompt(std::string id, std::string text, std::string_view punctuation) {
    Prompt p;
    p.id = std::move(id);
    p.text = std::move(text);
    p.tokens = tokenize(p.text, punctuation);
    return p;
}

bool responses_equal(std::string_view a, std::string_view b) {
    return trim(a) == trim(b);
}

Corpus::Corpus(std::vector<CorpusRecord> records, std::map<std::string, std::vector<std::size_t>> splits)
    : records_(std::move(records)), splits_(std::move(splits)) {
    for (std::size_t i = 0; i < records_.size(); ++i) {
        auto [it, inserted] = index_.emplace(records_[i].prompt.id, i);
        if (!inserted) {
            throw Error(ErrorCode::kDuplicateKey, "id \"" + records_[i].prompt.id + "\"");
        }
    }
    std::vector<char> seen(records_.size(), 0);
    for (const auto& [name, idx] : splits_) {
        for (auto i : idx) {
            if (i >= records_.size()) {
                throw Error(ErrorCode::kRange, "split " + name + " references record " + std::to_string(i));
            }
            if (seen[i]) {
                throw Error(ErrorCode::kConfig, "record " + records_[i].prompt.id + " belongs to two splits");
            }
            seen[i] = 1;
        }
    }
}

std::optional<std::size_t> Corpus::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

const std::vector<std::size_t>& Corpus::split(std::string_view name) const {
    static const std::vector<std::size_t> empty;
    auto it = splits_.find(std::string(name));
    return it == splits_.end() ? empty : it->second;
}

Corpus parse_corpus(std::string_view content, const LoadOptions& options, std::string_view source) {
    std::vector<CorpusRecord> records;
    std::vector<std::optional<std::string>> labels;
    std::set<std::string, std::less<>> ids;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= content.size()) {
        auto nl = content.find('\n', pos);
        auto line = content.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? content.size() + 1 : nl + 1;
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        auto where = std::string(source) + ":" + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorCode::kParse, where + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("prompt") ||
            !j["prompt"].is_string() || !j.contains("response") || !j["response"].is_string()) {
            throw Error(ErrorCode::kParse, where + ": expected string fields id, prompt, response");
        }
        auto id = j["id"].get<std::string>();
        if (!ids.insert(id).second) {
            throw Error(ErrorCode::kDuplicateKey, "id \"" + id + "\" at " + where);
        }
        auto text = j["prompt"].get<std::string>();
        auto prompt = make_prompt(id, text, options.punctuation);
        if (prompt.tokens.empty()) {
            throw Error(ErrorCode::kParse, where + ": prompt has no tokens");
        }
        std::optional<std::string> label;
        if (j.contains("split") && !j["split"].is_null()) {
            if (!j["split"].is_string() || !kSplitNames.contains(j["split"].get<std::string>())) {
                throw Error(ErrorCode::kParse, where + ": split must be one of train, val, test");
            }
            label = j["split"].get<std::string>();
        }
        records.push_back({std::move(prompt), Response{j["response"].get<std::string>()}});
        labels.push_back(std::move(label));
    }
    if (records.empty()) {
        throw Error(ErrorCode::kEmptyCorpus, std::string(source));
    }

    std::map<std::string, std::vector<std::size_t>> splits;
    bool any_label = false;
    for (const auto& l : labels) {
        any_label = any_label || l.has_value();
    }
    if (options.split_file) {
        std::ifstream in(*options.split_file);
        if (!in) {
            throw Error(ErrorCode::kIo, "cannot read split file " + options.split_file->string());
        }
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorCode::kParse, options.split_file->string() + ": " + e.what());
        }
        std::unordered_map<std::string, std::size_t> idx;
        for (std::size_t i = 0; i < records.size(); ++i) {
            idx.emplace(records[i].prompt.id, i);
        }
        for (auto it = j.begin(); it != j.end(); ++it) {
            auto& list = splits[it.key()];
            for (const auto& id : it.value()) {
                auto f = idx.find(id.get<std::string>());
                if (f == idx.end()) {
                    throw Error(ErrorCode::kNotFound, "split file id " + id.get<std::string>());
                }
                list.push_back(f->second);
            }
            std::sort(list.begin(), list.end());
        }
    } else if (any_label) {
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (labels[i]) {
                splits[*labels[i]].push_back(i);
            }
        }
    } else {
        auto n = records.size();
        auto n_train = std::min(options.counts.train, n);
        auto n_val = std::min(options.counts.val, n - n_train);
        for (std::size_t i = 0; i < n; ++i) {
            auto name = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
            splits[name].push_back(i);
        }
    }
    return Corpus(std::move(records), std::move(splits));
}

Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::kIo, "cannot read corpus " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_corpus(ss.str(), options, path.string());
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::kIo, "cannot write corpus " + path.string());
    }
    std::vector<std::string> label(corpus.size());
    for (const auto& [name, idx] : corpus.splits()) {
        for (auto i : idx) {
            label[i] = name;
        }
    }
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& r = corpus.at(i);
        nlohmann::ordered_json j;
        j["id"] = r.prompt.id;
        j["prompt"] = r.prompt.text;
        j["response"] = r.response.text;
        if (!label[i].empty()) {
            j["split"] = label[i];
        }
        out << j.dump() << '\n';
    }
}

Response Oracle::respond(std::string_view id) {
    auto i = corpus_->find(id);
    if (!i) {
        throw Error(ErrorCode::kNotFound, "oracle id \"" + std::string(id) + "\"");
    }
    calls_.fetch_add(1, std::memory_order_relaxed);
    return corpus_->at(*i).response;
}

}  // namespace mvrcache
