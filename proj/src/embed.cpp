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

#include "mvrcache/embed.h"

#include <httplib.h>

#include <cmath>
#include <mutex>
#include <json.hpp>

#include "mvrcache/corpus.h"
#include "mvrcache/error.h"
#include "mvrcache/hash.h"

namespace mvrcache {

namespace {

constexpr std::uint64_t kBucketSalt = 0x6a09e667f3bcc908ULL;
constexpr std::uint64_t kSignSalt = 0xbb67ae8584caa73bULL;

void add_feature(std::vector<double>& acc, std::string_view feature) {
    auto h = fnv1a64(feature);
    auto bucket = splitmix64(h ^ kBucketSalt) % acc.size();
    auto sign = (splitmix64(h ^ kSignSalt) >> 63) != 0 ? -1.0 : 1.0;
    acc[bucket] += sign;
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

UnitVector UnitVector::normalized(std::vector<double> raw) {
    double n2 = 0.0;
    for (double x : raw) {
        n2 += x * x;
    }
    if (!(n2 > 0.0) || !std::isfinite(n2)) {
        throw Error(ErrorCode::kNumeric, "cannot normalize a zero or non-finite vector");
    }
    double inv = 1.0 / std::sqrt(n2);
    for (double& x : raw) {
        x *= inv;
    }
    return UnitVector(std::move(raw));
}

UnitVector UnitVector::from_unit(std::vector<double> values) {
    double n2 = 0.0;
    for (double x : values) {
        n2 += x * x;
    }
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-6) {
        throw Error(ErrorCode::kRange, "vector norm " + std::to_string(std::sqrt(n2)) + " is not 1");
    }
    return UnitVector(std::move(values));
}

void EmbedderConfig::validate() const {
    if (dimension < 8) {
        throw Error(ErrorCode::kConfig, "embedding dimension must be >= 8");
    }
    if (batch_size < 1) {
        throw Error(ErrorCode::kConfig, "batch size must be >= 1");
    }
    if (ngram < 1) {
        throw Error(ErrorCode::kConfig, "ngram width must be >= 1");
    }
    if (mode == EmbedMode::kRemote && endpoint.empty()) {
        throw Error(ErrorCode::kConfig, "remote embedder needs an endpoint");
    }
}

std::string EmbedderConfig::fingerprint() const {
    if (mode == EmbedMode::kRemote) {
        return "remote:" + endpoint + ":d=" + std::to_string(dimension);
    }
    return "hash-v1:d=" + std::to_string(dimension) + ":n=" + std::to_string(ngram);
}

UnitVector embed_text(const EmbedderConfig& config, std::string_view text) {
    auto tokens = tokenize(text);
    if (tokens.empty()) {
        throw Error(ErrorCode::kEmptySegment, "no features in \"" + std::string(text) + "\"");
    }
    std::vector<double> acc(config.dimension, 0.0);
    std::string feature;
    for (const auto& tok : tokens) {
        feature.assign("w:").append(tok);
        add_feature(acc, feature);
        if (is_punctuation_token(tok)) {
            continue;
        }
        std::string padded = "<" + tok + ">";
        if (padded.size() < config.ngram) {
            continue;
        }
        for (std::size_t i = 0; i + config.ngram <= padded.size(); ++i) {
            feature.assign("c:").append(padded, i, config.ngram);
            add_feature(acc, feature);
        }
    }
    return UnitVector::normalized(std::move(acc));
}

HashEmbedder::HashEmbedder(EmbedderConfig config) : config_(std::move(config)) {
    config_.validate();
}

std::vector<UnitVector> HashEmbedder::embed_batch(std::span<const std::string> texts) {
    std::vector<UnitVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        out.push_back(embed_text(config_, t));
    }
    return out;
}

RemoteEmbedder::RemoteEmbedder(EmbedderConfig config) : config_(std::move(config)) {
    config_.validate();
    std::string_view ep = config_.endpoint;
    constexpr std::string_view scheme = "http://";
    if (ep.substr(0, scheme.size()) != scheme) {
        throw Error(ErrorCode::kConfig, "only http:// endpoints are supported: " + config_.endpoint);
    }
    ep.remove_prefix(scheme.size());
    auto slash = ep.find('/');
    auto hostport = ep.substr(0, slash);
    path_ = slash == std::string_view::npos ? "/" : std::string(ep.substr(slash));
    auto colon = hostport.rfind(':');
    if (colon == std::string_view::npos) {
        host_ = std::string(hostport);
    } else {
        host_ = std::string(hostport.substr(0, colon));
        port_ = std::stoi(std::string(hostport.substr(colon + 1)));
    }
}

std::vector<UnitVector> RemoteEmbedder::request(std::span<const std::string> texts) {
    httplib::Client client(host_, port_);
    auto secs = config_.timeout.count() / 1000;
    auto usecs = (config_.timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    nlohmann::json body;
    body["inputs"] = std::vector<std::string>(texts.begin(), texts.end());

    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        auto res = client.Post(path_, body.dump(), "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            throw Error(ErrorCode::kService,
                        "status " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorCode::kService, std::string("malformed body: ") + e.what());
        }
        if (!j.contains("embeddings") || !j["embeddings"].is_array() || j["embeddings"].size() != texts.size()) {
            throw Error(ErrorCode::kService, "expected one embedding per input");
        }
        std::vector<UnitVector> out;
        out.reserve(texts.size());
        for (const auto& row : j["embeddings"]) {
            auto v = row.get<std::vector<double>>();
            if (v.size() != config_.dimension) {
                throw Error(ErrorCode::kConfig, "service returned dimension " + std::to_string(v.size()) +
                                                    ", configured " + std::to_string(config_.dimension));
            }
            out.push_back(UnitVector::normalized(std::move(v)));
        }
        return out;
    }
    throw Error(ErrorCode::kRetryable,
                "embedding service unreachable after " + std::to_string(config_.retries + 1) + " attempts (" +
                    last_error + ")");
}

std::vector<UnitVector> RemoteEmbedder::embed_batch(std::span<const std::string> texts) {
    std::vector<UnitVector> out;
    out.reserve(texts.size());
    for (std::size_t i = 0; i < texts.size(); i += config_.batch_size) {
        auto n = std::min(config_.batch_size, texts.size() - i);
        auto part = request(texts.subspan(i, n));
        std::move(part.begin(), part.end(), std::back_inserter(out));
    }
    return out;
}

std::vector<UnitVector> embed_batch_remote(const EmbedderConfig& config, std::span<const std::string> texts) {
    if (config.mode != EmbedMode::kRemote) {
        throw Error(ErrorCode::kConfig, "embed_batch_remote requires remote mode");
    }
    return RemoteEmbedder(config).embed_batch(texts);
}

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config) {
    if (config.mode == EmbedMode::kRemote) {
        return std::make_unique<RemoteEmbedder>(config);
    }
    return std::make_unique<HashEmbedder>(config);
}

EmbeddingCache::EmbeddingCache(std::shared_ptr<Embedder> embedder)
    : embedder_(std::move(embedder)), fingerprint_(embedder_->fingerprint()) {}

UnitVector EmbeddingCache::get(const std::string& text) {
    {
        std::shared_lock lock(mu_);
        auto it = memo_.find(text);
        if (it != memo_.end()) {
            return it->second;
        }
    }
    auto v = embedder_->embed(text);
    std::unique_lock lock(mu_);
    return memo_.try_emplace(text, std::move(v)).first->second;
}

std::vector<UnitVector> EmbeddingCache::get_many(std::span<const std::string> texts) {
    std::vector<UnitVector> out(texts.size());
    std::vector<std::string> missing;
    std::vector<std::size_t> where;
    {
        std::shared_lock lock(mu_);
        for (std::size_t i = 0; i < texts.size(); ++i) {
            auto it = memo_.find(texts[i]);
            if (it != memo_.end()) {
                out[i] = it->second;
            } else {
                missing.push_back(texts[i]);
                where.push_back(i);
            }
        }
    }
    if (missing.empty()) {
        return out;
    }
    auto fresh = embedder_->embed_batch(missing);
    std::unique_lock lock(mu_);
    for (std::size_t k = 0; k < fresh.size(); ++k) {
        out[where[k]] = memo_.try_emplace(missing[k], std::move(fresh[k])).first->second;
    }
    return out;
}

std::size_t EmbeddingCache::size() const {
    std::shared_lock lock(mu_);
    return memo_.size();
}

}  // namespace mvrcache
