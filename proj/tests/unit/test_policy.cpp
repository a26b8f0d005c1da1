#include <doctest.h>

#include <memory>

#include "mvrcache/policy.h"

using namespace mvrcache;

namespace {

struct Harness {
    Corpus corpus;
    EmbeddingCache embeddings{std::make_shared<HashEmbedder>(EmbedderConfig{.dimension = 64})};
    SemanticCache cache;
    WholePromptSegmenter whole;
    Oracle oracle;
    CacheEngine engine;

    Harness(Corpus c, PolicyConfig config, std::uint64_t seed = 1)
        : corpus(std::move(c)),
          cache(embeddings.fingerprint(), 64),
          oracle(corpus),
          engine({&cache, &embeddings, &whole, &whole, &oracle}, config, seed) {}

    std::vector<StepRecord> run() {
        std::vector<StepRecord> out;
        for (const auto& r : corpus.records()) {
            out.push_back(engine.process_prompt(r.prompt, r.response));
        }
        return out;
    }
};

Corpus make_corpus(const std::vector<std::pair<std::string, std::string>>& rows) {
    std::vector<CorpusRecord> recs;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        recs.push_back({make_prompt("q" + std::to_string(i), rows[i].first), {rows[i].second}});
        idx.push_back(i);
    }
    return Corpus(std::move(recs), {{"test", idx}});
}

}  // namespace

TEST_CASE("cold start explores and inserts") {
    Harness h(make_corpus({{"what is the capital of france", "paris"}}), {});
    auto r = h.run();
    CHECK(r[0].decision.action == Action::kExplore);
    CHECK_FALSE(r[0].decision.nn);
    CHECK_FALSE(r[0].hit);
    CHECK(h.cache.size() == 1);
    CHECK(h.oracle.calls() == 1);
}

TEST_CASE("identical prompts without negatives never become identifiable") {
    std::vector<std::pair<std::string, std::string>> rows(50, {"is this review friendly? i loved it.", "positive"});
    Harness h(make_corpus(rows), {});
    auto r = h.run();
    for (std::size_t i = 1; i < r.size(); ++i) {
        CHECK(r[i].decision.nn == std::optional<std::size_t>(0));
        CHECK(r[i].decision.s == doctest::Approx(1.0));
        CHECK(r[i].decision.tau == 1.0);
        CHECK_FALSE(r[i].hit);
    }
    CHECK(h.oracle.calls() == 50);
}

TEST_CASE("identical prompts reach a hit rate near one once a negative is observed") {
    std::vector<std::pair<std::string, std::string>> rows;
    rows.push_back({"is this review friendly? i loved it.", "positive"});
    rows.push_back({"is this review friendly? i hated it.", "negative"});
    for (int i = 0; i < 400; ++i) {
        rows.push_back({"is this review friendly? i loved it.", "positive"});
    }
    PolicyConfig cfg;
    cfg.exploration.region = RegionMode::kPaperMin;
    Harness h(make_corpus(rows), cfg);
    auto r = h.run();
    std::size_t hits = 0, errors = 0;
    for (std::size_t i = 302; i < r.size(); ++i) {
        hits += r[i].hit;
        errors += r[i].hit && !r[i].correct;
    }
    CHECK(hits >= 95);
    CHECK(errors == 0);
}

TEST_CASE("every step either calls the oracle or exploits") {
    std::vector<std::pair<std::string, std::string>> rows;
    const char* a[] = {"loved", "hated", "liked", "enjoyed"};
    for (int i = 0; i < 200; ++i) {
        rows.push_back({std::string("review number ") + std::to_string(i % 7) + ": i " + a[i % 4] + " it",
                        i % 4 == 1 ? "negative" : "positive"});
    }
    PolicyConfig cfg;
    cfg.exploration.region = RegionMode::kPaperMin;
    Harness h(make_corpus(rows), cfg);
    auto r = h.run();
    std::size_t explore = 0, inserted = 0;
    for (const auto& s : r) {
        CHECK((s.hit == (s.decision.action == Action::kExploit)));
        CHECK(s.decision.tau >= 0.0);
        CHECK(s.decision.tau <= 1.0);
        CHECK((s.decision.label.has_value() == (s.decision.action == Action::kExplore && s.decision.nn.has_value())));
        explore += s.decision.action == Action::kExplore;
    }
    inserted = h.cache.size();
    CHECK(h.oracle.calls() == explore);
    CHECK(inserted == explore);
}

TEST_CASE("always-cache inserts every prompt") {
    std::vector<std::pair<std::string, std::string>> rows(30, {"same prompt", "same"});
    rows.push_back({"other prompt", "other"});
    PolicyConfig cfg;
    cfg.protocol = Protocol::kAlwaysCache;
    Harness h(make_corpus(rows), cfg);
    h.run();
    CHECK(h.cache.size() == 31);
}

TEST_CASE("decisions are deterministic for a fixed seed") {
    std::vector<std::pair<std::string, std::string>> rows;
    for (int i = 0; i < 120; ++i) {
        rows.push_back({"question " + std::to_string(i % 5) + (i % 3 ? " please" : ""), i % 3 ? "yes" : "no"});
    }
    auto run = [&](std::uint64_t seed) {
        Harness h(make_corpus(rows), {}, seed);
        std::vector<std::tuple<int, double, double>> out;
        for (const auto& s : h.run()) {
            out.emplace_back(static_cast<int>(s.decision.action), s.decision.s, s.decision.tau);
        }
        return out;
    };
    CHECK(run(7) == run(7));
}

TEST_CASE("protocol names") {
    CHECK(parse_protocol("cache-on-miss") == Protocol::kCacheOnMiss);
    CHECK(parse_protocol("always-cache") == Protocol::kAlwaysCache);
    CHECK_THROWS(parse_protocol("never"));
}
