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

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "mvrcache/error.h"
#include "mvrcache/replay.h"
#include "mvrcache/synth.h"

using namespace mvrcache;

namespace {

/// Flags that override fields of a RunConfig loaded from --config.
struct RunFlags {
    std::string config;
    std::optional<std::string> corpus, split_file, split, out, checkpoint;
    std::optional<std::string> region, protocol, mode, sim, exec, embed_endpoint;
    std::optional<double> delta, epsilon, gamma_max, lr, oracle_latency_ms;
    std::optional<std::size_t> min_obs, top_k, dim, steps, refresh_every, samples, max_neighbors;
    std::optional<std::uint64_t> seed;

    void add(CLI::App* app) {
        app->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
        app->add_option("--corpus", corpus, "corpus file (JSONL or JSON array)");
        app->add_option("--split-file", split_file, "split assignment file");
        app->add_option("--split", split, "split to stream");
        app->add_option("--out", out, "output directory");
        app->add_option("--checkpoint", checkpoint, "segmentation policy checkpoint");
        app->add_option("--region", region, "paper-min | worst-case-max | likelihood-max");
        app->add_option("--protocol", protocol, "cache-on-miss | always-cache");
        app->add_option("--mode", mode, "mvr-cache | single-vector | token-level | sentence-heuristic");
        app->add_option("--sim", sim, "smaxsim | vanilla");
        app->add_option("--exec", exec, "serial | parallel");
        app->add_option("--embed-endpoint", embed_endpoint, "remote embedding service URL");
        app->add_option("--delta", delta, "target error rate");
        app->add_option("--epsilon", epsilon, "confidence parameter");
        app->add_option("--gamma-max", gamma_max, "upper bound on gamma");
        app->add_option("--lr", lr, "learning rate");
        app->add_option("--oracle-latency-ms", oracle_latency_ms, "simulated model latency per call");
        app->add_option("--min-obs", min_obs, "observations per class before exploiting");
        app->add_option("--top-k", top_k, "stage-1 candidates");
        app->add_option("--dim", dim, "embedding dimension");
        app->add_option("--steps", steps, "training steps");
        app->add_option("--refresh-every", refresh_every, "training refresh period");
        app->add_option("--samples", samples, "joint samples per training step");
        app->add_option("--max-neighbors", max_neighbors, "neighbours per anchor, 0 for all");
        app->add_option("--seed", seed, "seed for decisions and training");
    }

    RunConfig resolve() const {
        RunConfig c = config.empty() ? RunConfig{} : RunConfig::load(config);
        if (corpus) c.corpus = *corpus;
        if (split_file) c.split_file = *split_file;
        if (split) c.split = *split;
        if (out) c.out = *out;
        if (checkpoint) c.checkpoint = *checkpoint;
        if (region) c.region = parse_region_mode(*region);
        if (protocol) c.protocol = parse_protocol(*protocol);
        if (mode) c.mode = parse_baseline_mode(*mode);
        if (sim) {
            if (*sim != "smaxsim" && *sim != "vanilla") {
                throw Error(ErrorCode::kConfig, "unknown similarity \"" + *sim + "\"");
            }
            c.sim_mode = *sim == "vanilla" ? SimMode::kVanilla : SimMode::kSymmetric;
        }
        if (exec) c.exec = c.train.exec = kernels::parse_exec(*exec);
        if (embed_endpoint) {
            c.embedder.mode = EmbedMode::kRemote;
            c.embedder.endpoint = *embed_endpoint;
        }
        if (delta) c.delta = *delta;
        if (epsilon) c.epsilon = *epsilon;
        if (gamma_max) c.gamma_max = *gamma_max;
        if (lr) c.train.learning_rate = *lr;
        if (oracle_latency_ms) c.oracle_latency_ms = *oracle_latency_ms;
        if (min_obs) c.min_obs_per_class = *min_obs;
        if (top_k) c.top_k = *top_k;
        if (dim) c.embedder.dimension = *dim;
        if (steps) c.train.steps = *steps;
        if (refresh_every) c.train.refresh_every = *refresh_every;
        if (samples) c.train.samples = *samples;
        if (max_neighbors) c.train.max_neighbors = *max_neighbors;
        if (seed) c.seed = c.train.seed = *seed;
        c.validate();
        return c;
    }
};

void print_summary(const MetricsSeries& m, const RunConfig& c) {
    std::printf("steps=%zu hit_rate=%.4f error_rate=%.4f oracle_calls=%llu cache_size=%zu out=%s\n", m.steps.size(),
                m.final_hit_rate(), m.final_error_rate(), static_cast<unsigned long long>(m.oracle_calls),
                m.cache_size, c.out.string().c_str());
}

int exit_code(ErrorCode code) {
    switch (code) {
        case ErrorCode::kConfig:
            return 2;
        case ErrorCode::kIo:
        case ErrorCode::kParse:
            return 3;
        default:
            return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-vector semantic cache: training, replay and diagnostics"};
    app.require_subcommand(1);

    RunFlags train_flags, replay_flags, theory_flags, cross_flags;
    auto* train = app.add_subcommand("train", "train the segmentation policy on the train split");
    train_flags.add(train);

    auto* replay = app.add_subcommand("replay", "stream a split through a fresh cache");
    replay_flags.add(replay);

    auto* cross = app.add_subcommand("crossdomain", "replay corpus B with a policy trained on corpus A");
    cross_flags.add(cross);
    std::string corpus_a;
    std::optional<std::string> split_file_a;
    cross->add_option("--train-corpus", corpus_a, "corpus A")->required();
    cross->add_option("--train-split-file", split_file_a, "split file of corpus A");

    auto* theory = app.add_subcommand("theory", "run the theoretical validators");
    theory_flags.add(theory);
    TheoryConfig tc;
    theory->add_option("--sigma", tc.sigma, "score standard deviation of the loss sweep");
    theory->add_option("--mc-samples", tc.mc_samples, "Monte Carlo samples per loss estimate");
    theory->add_option("--sweep-points", tc.sweep_points, "points of the log-odds sweep");
    theory->add_option("--flow-pairs", tc.flow_pairs, "antithetic pairs of the midpoint flow");
    theory->add_option("--flow-steps", tc.flow_steps, "Euler steps of the midpoint flow");

    auto* synth = app.add_subcommand("synth", "write the synthetic review corpus");
    SynthConfig sc;
    std::string synth_out;
    synth->add_option("--out", synth_out, "output corpus file")->required();
    synth->add_option("--seed", sc.seed);
    synth->add_option("--train", sc.train);
    synth->add_option("--val", sc.val);
    synth->add_option("--test", sc.test);
    synth->add_option("--scenarios", sc.scenarios);
    synth->add_option("--fillers", sc.fillers);
    synth->add_option("--sentiment-phrases", sc.sentiment_phrases);
    synth->add_option("--topic-templates", sc.topic_templates);
    synth->add_option("--mixed-fraction", sc.mixed_fraction);
    synth->add_option("--sentiment-last", sc.sentiment_last);
    synth->add_option("--vocabulary-offset", sc.vocabulary_offset);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            auto c = train_flags.resolve();
            auto run = run_train(c);
            std::printf("steps=%zu best_step=%zu out=%s\n", run.result.log.size(), run.result.best_step,
                        c.out.string().c_str());
        } else if (replay->parsed()) {
            auto c = replay_flags.resolve();
            print_summary(run_replay(c), c);
        } else if (cross->parsed()) {
            auto b = cross_flags.resolve();
            auto a = b;
            a.corpus = corpus_a;
            a.split_file = split_file_a;
            a.checkpoint.reset();
            print_summary(run_crossdomain(a, b), b);
        } else if (theory->parsed()) {
            auto c = theory_flags.resolve();
            tc.seed = c.seed;
            std::cout << run_theory(c, tc).dump(2) << "\n";
        } else if (synth->parsed()) {
            sc.validate();
            auto corpus = generate_synthetic_corpus(sc);
            write_corpus(synth_out, corpus);
            std::printf("records=%zu out=%s\n", corpus.size(), synth_out.c_str());
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code(e.code());
    }
    return 0;
}
