#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mvrcache/error.h"
#include "mvrcache/replay.h"
#include "mvrcache/synth.h"

using namespace mvrcache;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

SynthConfig small_synth(std::uint64_t seed = 3) {
    SynthConfig s;
    s.seed = seed;
    s.train = 40;
    s.val = 10;
    s.test = 120;
    s.scenarios = 4;
    return s;
}

RunConfig small_run(const fs::path& corpus, const fs::path& out) {
    RunConfig c;
    c.corpus = corpus;
    c.out = out;
    c.embedder.dimension = 64;
    c.segmenter.vocab_buckets = 64;
    c.segmenter.token_dim = 6;
    c.segmenter.hidden = 8;
    c.train.steps = 4;
    c.train.refresh_every = 2;
    c.train.samples = 2;
    c.train.max_neighbors = 4;
    return c;
}

ErrorCode code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::kIo;
}

}  // namespace

TEST_CASE("synthetic corpus is deterministic and well formed") {
    auto a = generate_synthetic_corpus(small_synth());
    auto b = generate_synthetic_corpus(small_synth());
    auto c = generate_synthetic_corpus(small_synth(4));
    REQUIRE(a.size() == 170);
    CHECK(a.split("train").size() == 40);
    CHECK(a.split("val").size() == 10);
    CHECK(a.split("test").size() == 120);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.at(i).prompt.text == b.at(i).prompt.text);
        CHECK(a.at(i).response.text == b.at(i).response.text);
        differs = differs || a.at(i).prompt.text != c.at(i).prompt.text;
        CHECK(a.at(i).prompt.length() >= 1);
    }
    CHECK(differs);
    SynthConfig bad = small_synth();
    bad.scenarios = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("run config round-trips through json") {
    RunConfig c = small_run("corpus.jsonl", "x");
    c.region = RegionMode::kWorstCaseMax;
    c.mode = BaselineMode::kTokenLevel;
    auto back = RunConfig::from_json(c.to_json());
    CHECK(back.to_json().dump() == c.to_json().dump());
    CHECK(back.fingerprint() == c.fingerprint());
    RunConfig moved = c;
    moved.out = "elsewhere";
    CHECK(moved.fingerprint() == c.fingerprint());
    c.delta = 1.0;
    CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfig);
    CHECK(code_of([&] { parse_baseline_mode("oracle"); }) == ErrorCode::kConfig);
}

TEST_CASE("replay artifacts are self-consistent and reproducible") {
    TempDir dir("mvrcache_replay_test");
    write_corpus(dir.path / "corpus.jsonl", generate_synthetic_corpus(small_synth()));
    auto cfg = small_run(dir.path / "corpus.jsonl", dir.path / "a");
    cfg.mode = BaselineMode::kSingleVector;
    auto m = run_replay(cfg);
    CHECK(m.steps.size() == 120);
    CHECK(m.hit_rate.size() == 120);
    CHECK(m.oracle_calls + m.hits == 120);

    std::ifstream steps(cfg.out / "steps.csv");
    std::string line;
    std::getline(steps, line);
    CHECK(line.rfind("step,prompt_id,action", 0) == 0);
    std::size_t rows = 0, wrong = 0;
    while (std::getline(steps, line)) {
        ++rows;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string x; std::getline(ss, x, ',');) {
            f.push_back(x);
        }
        wrong += f[6] == "1" && f[7] == "0";
    }
    CHECK(rows == 120);
    CHECK(wrong == m.errors);
    CHECK(static_cast<double>(wrong) / 120.0 == doctest::Approx(m.final_error_rate()));

    auto again = cfg;
    again.out = dir.path / "b";
    run_replay(again);
    auto manifest = nlohmann::json::parse(slurp(cfg.out / "manifest.json"));
    for (const auto& f : manifest["deterministic_files"]) {
        auto name = f.get<std::string>();
        CHECK_MESSAGE(slurp(cfg.out / name) == slurp(again.out / name), name);
    }
}

TEST_CASE("mvr-cache replay requires a policy and a matching checkpoint") {
    TempDir dir("mvrcache_replay_ckpt");
    write_corpus(dir.path / "corpus.jsonl", generate_synthetic_corpus(small_synth()));
    auto cfg = small_run(dir.path / "corpus.jsonl", dir.path / "train");
    auto corpus = load_corpus(cfg.corpus);
    CHECK(code_of([&] { replay_stream(cfg, {&corpus, nullptr, nullptr}); }) == ErrorCode::kConfig);

    run_train(cfg);
    REQUIRE(fs::exists(cfg.out / "policy.json"));
    REQUIRE(fs::exists(checkpoint_sidecar(cfg.out / "policy.json")));
    auto replay = cfg;
    replay.out = dir.path / "replay";
    replay.checkpoint = cfg.out / "policy.json";
    CHECK(run_replay(replay).steps.size() == 120);

    auto wrong_dim = replay;
    wrong_dim.embedder.dimension = 32;
    CHECK(code_of([&] { run_replay(wrong_dim); }) == ErrorCode::kConfig);
}

TEST_CASE("cross-domain replay with A equal to B matches in-domain replay") {
    TempDir dir("mvrcache_crossdomain");
    write_corpus(dir.path / "corpus.jsonl", generate_synthetic_corpus(small_synth()));
    auto a = small_run(dir.path / "corpus.jsonl", dir.path / "a");
    run_train(a);
    auto in_domain = a;
    in_domain.out = dir.path / "in";
    in_domain.checkpoint = a.out / "policy.json";
    auto m1 = run_replay(in_domain);
    auto b = in_domain;
    b.out = dir.path / "cross";
    auto m2 = run_crossdomain(a, b);
    CHECK(m1.hits == m2.hits);
    CHECK(m1.errors == m2.errors);
    CHECK(slurp(in_domain.out / "steps.csv") == slurp(b.out / "steps.csv"));

    auto mismatched = b;
    mismatched.embedder.dimension = 128;
    CHECK(code_of([&] { run_crossdomain(a, mismatched); }) == ErrorCode::kConfig);
}
