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

#include "mvrcache/replay.h"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <memory>

#include "mvrcache/error.h"
#include "mvrcache/hash.h"

namespace mvrcache {

namespace {

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::kIo, "cannot write " + path.string());
    }
    return out;
}

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
    open_out(path) << j.dump(2) << '\n';
}

std::string_view to_string(SimMode m) {
    return m == SimMode::kSymmetric ? "smaxsim" : "vanilla";
}

SimMode parse_sim_mode(std::string_view name) {
    if (name == "smaxsim") return SimMode::kSymmetric;
    if (name == "vanilla") return SimMode::kVanilla;
    throw Error(ErrorCode::kConfig, "unknown similarity mode \"" + std::string(name) + "\"");
}

bool needs_policy(BaselineMode m) {
    return m == BaselineMode::kMvrCache || m == BaselineMode::kSentenceHeuristic;
}

Corpus load_run_corpus(const RunConfig& config) {
    LoadOptions opts;
    opts.split_file = config.split_file;
    opts.punctuation = config.segmenter.punctuation;
    return load_corpus(config.corpus, opts);
}

std::shared_ptr<Embedder> shared_embedder(const EmbedderConfig& config) {
    return std::shared_ptr<Embedder>(make_embedder(config));
}

nlohmann::ordered_json manifest(const RunConfig& config, std::string_view command,
                                const std::vector<std::string>& files,
                                const std::vector<std::string>& measured = {}) {
    nlohmann::ordered_json m;
    m["command"] = command;
    m["config_fingerprint"] = config.fingerprint();
    m["seeds"] = {{"run", config.seed}, {"train", config.train.seed}, {"policy_init", config.segmenter.init_seed}};
    m["config"] = config.to_json();
    m["deterministic_files"] = files;
    m["measured_files"] = measured;
    return m;
}

void check_sidecar(const RunConfig& config, const std::filesystem::path& checkpoint) {
    auto side = checkpoint_sidecar(checkpoint);
    if (!std::filesystem::exists(side)) {
        return;
    }
    std::ifstream in(side);
    auto j = nlohmann::json::parse(in);
    auto want = config.embedder.fingerprint();
    auto have = j.value("embedder", "");
    if (have != want) {
        throw Error(ErrorCode::kConfig, "checkpoint was trained with embedder " + have + ", run uses " + want);
    }
}

}  // namespace

BaselineMode parse_baseline_mode(std::string_view name) {
    if (name == "mvr-cache") return BaselineMode::kMvrCache;
    if (name == "single-vector") return BaselineMode::kSingleVector;
    if (name == "token-level") return BaselineMode::kTokenLevel;
    if (name == "sentence-heuristic") return BaselineMode::kSentenceHeuristic;
    throw Error(ErrorCode::kConfig, "unknown baseline mode \"" + std::string(name) + "\"");
}

std::string_view to_string(BaselineMode m) {
    switch (m) {
        case BaselineMode::kMvrCache: return "mvr-cache";
        case BaselineMode::kSingleVector: return "single-vector";
        case BaselineMode::kTokenLevel: return "token-level";
        case BaselineMode::kSentenceHeuristic: return "sentence-heuristic";
    }
    return "mvr-cache";
}

void RunConfig::validate() const {
    policy_config().validate();
    embedder.validate();
    segmenter.validate();
    train.validate();
    if (top_k < 1) {
        throw Error(ErrorCode::kConfig, "retrieval k must be >= 1");
    }
    if (oracle_latency_ms < 0.0) {
        throw Error(ErrorCode::kConfig, "oracle latency must be non-negative");
    }
}

PolicyConfig RunConfig::policy_config() const {
    PolicyConfig p;
    p.exploration = {delta, epsilon, gamma_max, region};
    p.min_obs_per_class = min_obs_per_class;
    p.protocol = protocol;
    return p;
}

nlohmann::ordered_json RunConfig::to_json() const {
    nlohmann::ordered_json j;
    j["corpus"] = corpus.string();
    j["split_file"] = split_file ? nlohmann::ordered_json(split_file->string()) : nlohmann::ordered_json();
    j["split"] = split;
    j["delta"] = delta;
    j["epsilon"] = epsilon;
    j["gamma_max"] = gamma_max;
    j["region"] = mvrcache::to_string(region);
    j["min_obs_per_class"] = min_obs_per_class;
    j["protocol"] = mvrcache::to_string(protocol);
    j["top_k"] = top_k;
    j["similarity"] = to_string(sim_mode);
    j["embedder"] = {{"mode", embedder.mode == EmbedMode::kRemote ? "remote" : "hash"},
                     {"dimension", embedder.dimension},
                     {"endpoint", embedder.endpoint},
                     {"batch_size", embedder.batch_size},
                     {"timeout_ms", embedder.timeout.count()},
                     {"retries", embedder.retries},
                     {"ngram", embedder.ngram}};
    j["segmenter"] = {{"vocab_buckets", segmenter.vocab_buckets},
                      {"token_dim", segmenter.token_dim},
                      {"hidden", segmenter.hidden},
                      {"max_segments", segmenter.max_segments},
                      {"punctuation", segmenter.punctuation},
                      {"candidates", mvrcache::to_string(segmenter.variant)},
                      {"init_seed", segmenter.init_seed}};
    j["train"] = {{"steps", train.steps},
                  {"refresh_every", train.refresh_every},
                  {"samples", train.samples},
                  {"learning_rate", train.learning_rate},
                  {"baseline_decay", train.baseline_decay},
                  {"seed", train.seed},
                  {"smoothing", train.smoothing},
                  {"grad_clip", train.grad_clip},
                  {"max_neighbors", train.max_neighbors},
                  {"validate", train.validate_during_training}};
    j["seed"] = seed;
    j["mode"] = mvrcache::to_string(mode);
    j["checkpoint"] = checkpoint ? nlohmann::ordered_json(checkpoint->string()) : nlohmann::ordered_json();
    j["oracle_latency_ms"] = oracle_latency_ms;
    j["exec"] = kernels::to_string(exec);
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    auto str = [&](const nlohmann::json& o, const char* key, auto apply) {
        if (o.contains(key) && !o[key].is_null()) {
            apply(o[key].get<std::string>());
        }
    };
    auto num = [&](const nlohmann::json& o, const char* key, auto& field) {
        if (o.contains(key) && !o[key].is_null()) {
            field = o[key].get<std::remove_reference_t<decltype(field)>>();
        }
    };
    try {
        str(j, "corpus", [&](std::string v) { c.corpus = v; });
        str(j, "split_file", [&](std::string v) { c.split_file = v; });
        str(j, "split", [&](std::string v) { c.split = v; });
        num(j, "delta", c.delta);
        num(j, "epsilon", c.epsilon);
        num(j, "gamma_max", c.gamma_max);
        str(j, "region", [&](std::string v) { c.region = parse_region_mode(v); });
        num(j, "min_obs_per_class", c.min_obs_per_class);
        str(j, "protocol", [&](std::string v) { c.protocol = parse_protocol(v); });
        num(j, "top_k", c.top_k);
        str(j, "similarity", [&](std::string v) { c.sim_mode = parse_sim_mode(v); });
        if (j.contains("embedder")) {
            const auto& e = j["embedder"];
            str(e, "mode", [&](std::string v) {
                if (v != "hash" && v != "remote") {
                    throw Error(ErrorCode::kConfig, "unknown embedder mode \"" + v + "\"");
                }
                c.embedder.mode = v == "remote" ? EmbedMode::kRemote : EmbedMode::kLocalHash;
            });
            num(e, "dimension", c.embedder.dimension);
            num(e, "endpoint", c.embedder.endpoint);
            num(e, "batch_size", c.embedder.batch_size);
            if (e.contains("timeout_ms")) {
                c.embedder.timeout = std::chrono::milliseconds(e["timeout_ms"].get<long>());
            }
            num(e, "retries", c.embedder.retries);
            num(e, "ngram", c.embedder.ngram);
        }
        if (j.contains("segmenter")) {
            const auto& s = j["segmenter"];
            num(s, "vocab_buckets", c.segmenter.vocab_buckets);
            num(s, "token_dim", c.segmenter.token_dim);
            num(s, "hidden", c.segmenter.hidden);
            num(s, "max_segments", c.segmenter.max_segments);
            num(s, "punctuation", c.segmenter.punctuation);
            str(s, "candidates", [&](std::string v) { c.segmenter.variant = parse_candidate_variant(v); });
            num(s, "init_seed", c.segmenter.init_seed);
        }
        if (j.contains("train")) {
            const auto& t = j["train"];
            num(t, "steps", c.train.steps);
            num(t, "refresh_every", c.train.refresh_every);
            num(t, "samples", c.train.samples);
            num(t, "learning_rate", c.train.learning_rate);
            num(t, "baseline_decay", c.train.baseline_decay);
            num(t, "seed", c.train.seed);
            num(t, "smoothing", c.train.smoothing);
            num(t, "grad_clip", c.train.grad_clip);
            num(t, "max_neighbors", c.train.max_neighbors);
            num(t, "validate", c.train.validate_during_training);
        }
        num(j, "seed", c.seed);
        str(j, "mode", [&](std::string v) { c.mode = parse_baseline_mode(v); });
        str(j, "checkpoint", [&](std::string v) { c.checkpoint = v; });
        num(j, "oracle_latency_ms", c.oracle_latency_ms);
        str(j, "exec", [&](std::string v) { c.exec = kernels::parse_exec(v); });
        str(j, "out", [&](std::string v) { c.out = v; });
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kConfig, std::string("run config: ") + e.what());
    }
    c.train.exec = c.exec;
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::kIo, "cannot read config " + path.string());
    }
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
    }
}

std::string RunConfig::fingerprint() const {
    auto j = to_json();
    for (const auto* key : {"corpus", "split_file", "checkpoint"}) j.erase(key);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a64(j.dump()));
    return buf;
}

MetricsSeries replay_stream(const RunConfig& config, const ReplayInputs& inputs) {
    config.validate();
    if (!inputs.corpus) {
        throw Error(ErrorCode::kConfig, "replay needs a corpus");
    }
    if (needs_policy(config.mode) && !inputs.policy) {
        throw Error(ErrorCode::kConfig, std::string(to_string(config.mode)) + " mode needs a trained policy");
    }
    std::unique_ptr<EmbeddingCache> own;
    EmbeddingCache* embeddings = inputs.embeddings;
    if (!embeddings) {
        own = std::make_unique<EmbeddingCache>(shared_embedder(config.embedder));
        embeddings = own.get();
    }
    if (embeddings->fingerprint() != config.embedder.fingerprint()) {
        throw Error(ErrorCode::kConfig, "embedding cache " + embeddings->fingerprint() + " does not match config " +
                                            config.embedder.fingerprint());
    }

    std::unique_ptr<Segmenter> query, entry;
    switch (config.mode) {
        case BaselineMode::kMvrCache:
            query = std::make_unique<PolicySegmenter>(*inputs.policy);
            break;
        case BaselineMode::kSingleVector:
            query = std::make_unique<WholePromptSegmenter>();
            break;
        case BaselineMode::kTokenLevel:
            query = std::make_unique<SplitAllSegmenter>(CandidateVariant::kToken, config.segmenter.punctuation);
            break;
        case BaselineMode::kSentenceHeuristic:
            query = std::make_unique<PolicySegmenter>(*inputs.policy);
            entry = std::make_unique<SplitAllSegmenter>(CandidateVariant::kSentence, config.segmenter.punctuation);
            break;
    }

    SemanticCache cache(embeddings->fingerprint(), embeddings->dimension(),
                        StoreConfig{config.top_k, config.sim_mode, config.exec});
    Oracle oracle(*inputs.corpus);
    CacheEngine engine({&cache, embeddings, query.get(), entry ? entry.get() : query.get(), &oracle},
                       config.policy_config(), config.seed, config.oracle_latency_ms);

    MetricsSeries m;
    const auto& idx = inputs.corpus->split(config.split);
    if (idx.empty()) {
        throw Error(ErrorCode::kEmptyCorpus, "split \"" + config.split + "\" is empty");
    }
    for (auto i : idx) {
        const auto& r = inputs.corpus->at(i);
        auto rec = engine.process_prompt(r.prompt, r.response);
        m.hits += rec.hit ? 1 : 0;
        m.errors += rec.hit && !rec.correct ? 1 : 0;
        m.latency += rec.latency;
        auto n = static_cast<double>(m.steps.size() + 1);
        m.hit_rate.push_back(static_cast<double>(m.hits) / n);
        m.error_rate.push_back(static_cast<double>(m.errors) / n);
        m.steps.push_back(std::move(rec));
    }
    m.oracle_calls = oracle.calls();
    m.cache_size = cache.size();
    return m;
}

void write_replay_artifacts(const RunConfig& config, const MetricsSeries& m, std::string_view command) {
    std::filesystem::create_directories(config.out);
    {
        auto out = open_out(config.out / "steps.csv");
        out << "step,prompt_id,action,nn,s,tau,hit,correct,label,segments\n";
        for (const auto& r : m.steps) {
            const auto& d = r.decision;
            out << r.step << ',' << r.prompt_id << ',' << (d.action == Action::kExploit ? "exploit" : "explore") << ','
                << (d.nn ? std::to_string(*d.nn) : "") << ',' << fmt(d.s) << ',' << fmt(d.tau) << ','
                << (r.hit ? 1 : 0) << ',' << (r.correct ? 1 : 0) << ','
                << (d.label ? (*d.label ? "1" : "0") : "") << ',' << r.segments << '\n';
        }
    }
    {
        auto out = open_out(config.out / "curve.csv");
        out << "step,hit_rate,error_rate\n";
        for (std::size_t i = 0; i < m.hit_rate.size(); ++i) {
            out << i + 1 << ',' << fmt(m.hit_rate[i]) << ',' << fmt(m.error_rate[i]) << '\n';
        }
    }
    nlohmann::ordered_json s;
    s["mode"] = to_string(config.mode);
    s["prompts"] = m.steps.size();
    s["hits"] = m.hits;
    s["errors"] = m.errors;
    s["hit_rate"] = m.final_hit_rate();
    s["error_rate"] = m.final_error_rate();
    s["oracle_calls"] = m.oracle_calls;
    s["exploits"] = m.hits;
    s["cache_size"] = m.cache_size;
    s["config_fingerprint"] = config.fingerprint();
    write_json(config.out / "summary.json", s);
    {
        auto out = open_out(config.out / "latency.csv");
        out << "step,segment_ms,embed_ms,retrieve_ms,decide_ms,oracle_ms\n";
        for (const auto& r : m.steps) {
            const auto& l = r.latency;
            out << r.step << ',' << fmt(l.segment_ms) << ',' << fmt(l.embed_ms) << ',' << fmt(l.retrieve_ms) << ','
                << fmt(l.decide_ms) << ',' << fmt(l.oracle_ms) << '\n';
        }
    }
    auto per = [&](double total) { return m.steps.empty() ? 0.0 : total / static_cast<double>(m.steps.size()); };
    const auto& l = m.latency;
    nlohmann::ordered_json lat;
    lat["total_ms"] = {{"segment", l.segment_ms}, {"embed", l.embed_ms}, {"retrieve", l.retrieve_ms},
                       {"decide", l.decide_ms},   {"oracle", l.oracle_ms}};
    lat["per_prompt_ms"] = {{"segment", per(l.segment_ms)}, {"embed", per(l.embed_ms)},
                            {"retrieve", per(l.retrieve_ms)}, {"decide", per(l.decide_ms)},
                            {"oracle", per(l.oracle_ms)}};
    write_json(config.out / "latency.json", lat);
    write_json(config.out / "manifest.json",
               manifest(config, command, {"steps.csv", "curve.csv", "summary.json", "manifest.json"},
                        {"latency.csv", "latency.json"}));
}

MetricsSeries run_replay(const RunConfig& config) {
    config.validate();
    auto corpus = load_run_corpus(config);
    std::optional<SegmentationPolicy> policy;
    if (needs_policy(config.mode)) {
        if (!config.checkpoint) {
            throw Error(ErrorCode::kConfig, std::string(to_string(config.mode)) + " mode needs --checkpoint");
        }
        check_sidecar(config, *config.checkpoint);
        policy = SegmentationPolicy::load(*config.checkpoint);
        if (policy->config().punctuation != config.segmenter.punctuation) {
            throw Error(ErrorCode::kConfig, "checkpoint tokenizer punctuation differs from the run config");
        }
    }
    auto m = replay_stream(config, {&corpus, policy ? &*policy : nullptr, nullptr});
    write_replay_artifacts(config, m, "replay");
    return m;
}

TrainRun train_policy(const RunConfig& config, const Corpus& corpus, EmbeddingCache& embeddings) {
    config.validate();
    if (corpus.split("train").empty()) {
        throw Error(ErrorCode::kTrainingInfeasible, "train split is empty");
    }
    TrainRun run{SegmentationPolicy(config.segmenter), {}};
    auto tc = config.train;
    tc.exec = config.exec;
    Trainer trainer(corpus, run.policy, embeddings, tc, config.sim_mode, config.policy_config());
    run.result = trainer.train();
    return run;
}

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& checkpoint) {
    auto p = checkpoint;
    p.replace_extension(".meta.json");
    return p;
}

TrainRun run_train(const RunConfig& config) {
    config.validate();
    auto corpus = load_run_corpus(config);
    EmbeddingCache embeddings(shared_embedder(config.embedder));
    auto run = train_policy(config, corpus, embeddings);

    std::filesystem::create_directories(config.out);
    auto ckpt = config.out / "policy.json";
    run.policy.save(ckpt);
    write_json(checkpoint_sidecar(ckpt), {{"embedder", config.embedder.fingerprint()},
                                          {"segmenter", run.policy.config().fingerprint()}});
    {
        auto out = open_out(config.out / "train_log.csv");
        out << "step,anchor,neighbors,reward,baseline,grad_norm,t,gamma\n";
        for (const auto& s : run.result.log) {
            out << s.step << ',' << s.anchor << ',' << s.neighbors << ',' << fmt(s.reward) << ','
                << fmt(s.baseline) << ',' << fmt(s.grad_norm) << ',' << fmt(s.t) << ',' << fmt(s.gamma) << '\n';
        }
    }
    {
        auto out = open_out(config.out / "validation.csv");
        out << "step,hit_rate,error_rate,best\n";
        for (const auto& v : run.result.validation) {
            out << v.step << ',' << fmt(v.hit_rate) << ',' << fmt(v.error_rate) << ','
                << (v.step == run.result.best_step ? 1 : 0) << '\n';
        }
    }
    write_json(config.out / "manifest.json",
               manifest(config, "train",
                        {"policy.json", "policy.meta.json", "train_log.csv", "validation.csv", "manifest.json"}));
    return run;
}

MetricsSeries run_crossdomain(const RunConfig& train_a, const RunConfig& replay_b) {
    if (train_a.embedder.fingerprint() != replay_b.embedder.fingerprint()) {
        throw Error(ErrorCode::kConfig, "embedder " + train_a.embedder.fingerprint() + " used for training differs from " +
                                            replay_b.embedder.fingerprint());
    }
    if (train_a.segmenter.punctuation != replay_b.segmenter.punctuation) {
        throw Error(ErrorCode::kConfig, "tokenizer punctuation differs between the two corpora");
    }
    auto cfg = replay_b;
    cfg.mode = BaselineMode::kMvrCache;
    if (!cfg.checkpoint) {
        auto a = train_a;
        a.out = replay_b.out / "train";
        run_train(a);
        cfg.checkpoint = a.out / "policy.json";
    }
    cfg.validate();
    auto corpus = load_run_corpus(cfg);
    check_sidecar(cfg, *cfg.checkpoint);
    auto policy = SegmentationPolicy::load(*cfg.checkpoint);
    auto m = replay_stream(cfg, {&corpus, &policy, nullptr});
    write_replay_artifacts(cfg, m, "crossdomain");
    return m;
}

nlohmann::ordered_json run_theory(const RunConfig& config, const TheoryConfig& theory) {
    config.validate();
    std::vector<Observation> scored;
    if (!config.corpus.empty()) {
        auto corpus = load_run_corpus(config);
        std::optional<SegmentationPolicy> policy;
        if (needs_policy(config.mode)) {
            if (!config.checkpoint) {
                throw Error(ErrorCode::kConfig, std::string(to_string(config.mode)) + " mode needs --checkpoint");
            }
            policy = SegmentationPolicy::load(*config.checkpoint);
        }
        auto m = replay_stream(config, {&corpus, policy ? &*policy : nullptr, nullptr});
        for (const auto& r : m.steps) {
            if (r.decision.label) {
                scored.push_back({r.decision.s, *r.decision.label});
            }
        }
    }
    auto report = theory_report(theory, scored);
    std::filesystem::create_directories(config.out);
    write_json(config.out / "theory.json", report);
    write_json(config.out / "manifest.json", manifest(config, "theory", {"theory.json", "manifest.json"}));
    return report;
}

}  // namespace mvrcache
