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

#include "mvrcache/store.h"

#include <fstream>
#include <mutex>
#include <json.hpp>

#include "mvrcache/error.h"

namespace mvrcache {

namespace {

constexpr int kSnapshotVersion = 1;

}  // namespace

SemanticCache::SemanticCache(std::string embedder_fingerprint, std::size_t dimension, StoreConfig config)
    : embedder_fingerprint_(std::move(embedder_fingerprint)), dimension_(dimension), config_(config) {
    if (config_.top_k < 1) {
        throw Error(ErrorCode::kConfig, "retrieval k must be >= 1");
    }
}

SemanticCache::SemanticCache(SemanticCache&& other) noexcept
    : embedder_fingerprint_(std::move(other.embedder_fingerprint_)),
      dimension_(other.dimension_),
      config_(other.config_),
      entries_(std::move(other.entries_)),
      single_rows_(std::move(other.single_rows_)) {}

std::size_t SemanticCache::insert(const Prompt& prompt, Segmentation segmentation, MultiVector multivector,
                                  UnitVector single_vector, Response response,
                                  std::string_view embedder_fingerprint) {
    if (embedder_fingerprint != embedder_fingerprint_) {
        throw Error(ErrorCode::kConfig, "embedder fingerprint \"" + std::string(embedder_fingerprint) +
                                            "\" does not match cache \"" + embedder_fingerprint_ + "\"");
    }
    if (single_vector.dim() != dimension_ || multivector.dim() != dimension_) {
        throw Error(ErrorCode::kConfig, "representation dimension does not match the cache");
    }
    if (multivector.size() != segmentation.segments()) {
        throw Error(ErrorCode::kInvalidSegmentation, "multivector rows do not match the segment count");
    }
    std::unique_lock lock(mu_);
    CacheEntry e;
    e.id = entries_.size();
    e.prompt_id = prompt.id;
    e.prompt_text = prompt.text;
    e.segmentation = std::move(segmentation);
    e.multivector = std::move(multivector);
    e.single_vector = std::move(single_vector);
    e.response = std::move(response);
    single_rows_.insert(single_rows_.end(), e.single_vector.values().begin(), e.single_vector.values().end());
    entries_.push_back(std::move(e));
    return entries_.back().id;
}

std::optional<RetrievalResult> SemanticCache::rerank(const MultiVector& query_mv,
                                                     std::vector<kernels::Scored> cands) const {
    if (cands.empty()) {
        return std::nullopt;
    }
    std::vector<const MultiVector*> docs;
    docs.reserve(cands.size());
    for (const auto& c : cands) {
        docs.push_back(&entries_[c.index].multivector);
    }
    auto scores = kernels::smaxsim_batch(query_mv, docs, config_.sim_mode, config_.exec);
    RetrievalResult r;
    bool have = false;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        cands[i].score = scores[i];
        if (!have || scores[i] > r.score || (scores[i] == r.score && cands[i].index < r.entry_id)) {
            r.entry_id = cands[i].index;
            r.score = scores[i];
            have = true;
        }
    }
    r.candidates = std::move(cands);
    return r;
}

std::optional<RetrievalResult> SemanticCache::retrieve_nn(const MultiVector& query_mv,
                                                          const UnitVector& query_sv) const {
    return retrieve_nn(query_mv, query_sv, config_.top_k);
}

std::optional<RetrievalResult> SemanticCache::retrieve_nn(const MultiVector& query_mv, const UnitVector& query_sv,
                                                          std::size_t k) const {
    if (k < 1) {
        throw Error(ErrorCode::kConfig, "retrieval k must be >= 1");
    }
    std::shared_lock lock(mu_);
    auto cands = kernels::top_k_cosine(single_rows_, dimension_, query_sv.values(), k, config_.exec);
    return rerank(query_mv, std::move(cands));
}

std::optional<RetrievalResult> SemanticCache::full_scan_nn(const MultiVector& query_mv) const {
    std::shared_lock lock(mu_);
    std::vector<kernels::Scored> all(entries_.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        all[i].index = i;
    }
    return rerank(query_mv, std::move(all));
}

void SemanticCache::append_observation(std::size_t entry_id, double s, bool c) {
    if (!(s >= 0.0 && s <= 1.0)) {
        throw Error(ErrorCode::kRange, "similarity " + std::to_string(s) + " outside [0,1]");
    }
    std::unique_lock lock(mu_);
    if (entry_id >= entries_.size()) {
        throw Error(ErrorCode::kNotFound, "cache entry " + std::to_string(entry_id));
    }
    auto& e = entries_[entry_id];
    e.observations.push_back({s, c});
    e.fit_stale = true;
}

std::optional<LogisticFit> SemanticCache::current_fit(std::size_t entry_id, const FitOptions& options,
                                                      std::size_t min_per_class) {
    std::unique_lock lock(mu_);
    if (entry_id >= entries_.size()) {
        throw Error(ErrorCode::kNotFound, "cache entry " + std::to_string(entry_id));
    }
    auto& e = entries_[entry_id];
    bool same_options = e.fit_options.gamma_max == options.gamma_max &&
                        e.fit_options.max_iterations == options.max_iterations &&
                        e.fit_options.grad_tol == options.grad_tol &&
                        e.fit_options.likelihood_level == options.likelihood_level;
    if (e.fit_stale || !same_options) {
        std::size_t pos = 0;
        for (const auto& o : e.observations) {
            pos += o.c ? 1 : 0;
        }
        std::size_t neg = e.observations.size() - pos;
        e.fit.reset();
        if (pos >= 1 && neg >= 1) {
            e.fit = fit_logistic(e.observations, {}, options);
        }
        e.fit_options = options;
        e.fit_stale = false;
    }
    if (e.fit && (e.fit->n_pos < min_per_class || e.fit->n_neg < min_per_class)) {
        return std::nullopt;
    }
    return e.fit;
}

std::size_t SemanticCache::size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
}

CacheEntry SemanticCache::entry(std::size_t entry_id) const {
    std::shared_lock lock(mu_);
    if (entry_id >= entries_.size()) {
        throw Error(ErrorCode::kNotFound, "cache entry " + std::to_string(entry_id));
    }
    return entries_[entry_id];
}

Response SemanticCache::response(std::size_t entry_id) const {
    std::shared_lock lock(mu_);
    if (entry_id >= entries_.size()) {
        throw Error(ErrorCode::kNotFound, "cache entry " + std::to_string(entry_id));
    }
    return entries_[entry_id].response;
}

void SemanticCache::save(const std::filesystem::path& path) const {
    std::shared_lock lock(mu_);
    nlohmann::ordered_json j;
    j["format"] = "mvrcache-snapshot";
    j["version"] = kSnapshotVersion;
    j["embedder"] = embedder_fingerprint_;
    j["dimension"] = dimension_;
    auto& arr = j["entries"] = nlohmann::ordered_json::array();
    for (const auto& e : entries_) {
        nlohmann::ordered_json je;
        je["prompt_id"] = e.prompt_id;
        je["prompt"] = e.prompt_text;
        je["splits"] = e.segmentation.splits;
        je["multivector"] = std::vector<double>(e.multivector.data().begin(), e.multivector.data().end());
        je["single_vector"] = std::vector<double>(e.single_vector.values().begin(), e.single_vector.values().end());
        je["response"] = e.response.text;
        auto& obs = je["observations"] = nlohmann::ordered_json::array();
        for (const auto& o : e.observations) {
            obs.push_back({o.s, o.c});
        }
        arr.push_back(std::move(je));
    }
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::kIo, "cannot write snapshot " + path.string());
    }
    out << j.dump() << '\n';
}

SemanticCache SemanticCache::load(const std::filesystem::path& path, StoreConfig config) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::kIo, "cannot read snapshot " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
    }
    if (j.value("format", "") != "mvrcache-snapshot" || j.value("version", 0) != kSnapshotVersion) {
        throw Error(ErrorCode::kConfig, path.string() + " is not a version " + std::to_string(kSnapshotVersion) +
                                            " cache snapshot");
    }
    auto dim = j.at("dimension").get<std::size_t>();
    SemanticCache cache(j.at("embedder").get<std::string>(), dim, config);
    for (const auto& je : j.at("entries")) {
        auto prompt = make_prompt(je.at("prompt_id").get<std::string>(), je.at("prompt").get<std::string>());
        Segmentation seg{je.at("splits").get<std::vector<std::size_t>>()};
        auto flat = je.at("multivector").get<std::vector<double>>();
        std::vector<UnitVector> rows;
        for (std::size_t r = 0; r * dim < flat.size(); ++r) {
            rows.push_back(UnitVector::from_unit(std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(r * dim),
                                                                     flat.begin() + static_cast<std::ptrdiff_t>((r + 1) * dim))));
        }
        auto sv = UnitVector::from_unit(je.at("single_vector").get<std::vector<double>>());
        auto id = cache.insert(prompt, std::move(seg), MultiVector(rows), std::move(sv),
                               Response{je.at("response").get<std::string>()}, cache.embedder_fingerprint_);
        for (const auto& o : je.at("observations")) {
            cache.append_observation(id, o.at(0).get<double>(), o.at(1).get<bool>());
        }
    }
    return cache;
}

}  // namespace mvrcache
