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

#include <chrono>
#include <cstddef>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mvrcache {

/// A vector with Euclidean norm 1 (within 1e-6).
class UnitVector {
public:
    UnitVector() = default;

    /// Scales `raw` to unit length; throws kNumeric on a zero or non-finite norm.
    static UnitVector normalized(std::vector<double> raw);
    /// Wraps values that are already unit length; throws kRange otherwise.
    static UnitVector from_unit(std::vector<double> values);

    std::span<const double> values() const { return values_; }
    std::size_t dim() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }

    friend bool operator==(const UnitVector&, const UnitVector&) = default;

private:
    explicit UnitVector(std::vector<double> v) : values_(std::move(v)) {}
    std::vector<double> values_;
};

enum class EmbedMode { kLocalHash, kRemote };

struct EmbedderConfig {
    std::size_t dimension = 256;
    EmbedMode mode = EmbedMode::kLocalHash;
    std::string endpoint;  // http://host:port/path, remote mode only
    std::size_t batch_size = 32;
    std::chrono::milliseconds timeout{5000};
    int retries = 2;
    std::size_t ngram = 3;

    void validate() const;
    /// Identifies every knob that changes the produced vectors.
    std::string fingerprint() const;
};

/// Signed feature hashing over word unigrams (punctuation tokens included)
/// and boundary-padded character n-grams of each word.
UnitVector embed_text(const EmbedderConfig& config, std::string_view text);

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<UnitVector> embed_batch(std::span<const std::string> texts) = 0;
    virtual const EmbedderConfig& config() const = 0;

    UnitVector embed(const std::string& text) { return embed_batch(std::span(&text, 1)).front(); }
    std::string fingerprint() const { return config().fingerprint(); }
};

class HashEmbedder final : public Embedder {
public:
    explicit HashEmbedder(EmbedderConfig config);
    std::vector<UnitVector> embed_batch(std::span<const std::string> texts) override;
    const EmbedderConfig& config() const override { return config_; }

private:
    EmbedderConfig config_;
};

/// Client for an embedding service speaking
/// POST {"inputs": [..]} -> {"embeddings": [[..]]}.
class RemoteEmbedder final : public Embedder {
public:
    explicit RemoteEmbedder(EmbedderConfig config);
    std::vector<UnitVector> embed_batch(std::span<const std::string> texts) override;
    const EmbedderConfig& config() const override { return config_; }

private:
    std::vector<UnitVector> request(std::span<const std::string> texts);

    EmbedderConfig config_;
    std::string host_;
    int port_ = 80;
    std::string path_;
};

std::vector<UnitVector> embed_batch_remote(const EmbedderConfig& config, std::span<const std::string> texts);

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config);

/// Memoizes segment embeddings keyed by text. Safe for concurrent use.
class EmbeddingCache {
public:
    explicit EmbeddingCache(std::shared_ptr<Embedder> embedder);

    UnitVector get(const std::string& text);
    std::vector<UnitVector> get_many(std::span<const std::string> texts);

    std::size_t size() const;
    const std::string& fingerprint() const { return fingerprint_; }
    std::size_t dimension() const { return embedder_->config().dimension; }
    Embedder& embedder() { return *embedder_; }

private:
    std::shared_ptr<Embedder> embedder_;
    std::string fingerprint_;
    mutable std::shared_mutex mu_;
    std::unordered_map<std::string, UnitVector> memo_;
};

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace mvrcache
