#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mvrcache/corpus.h"
#include "mvrcache/error.h"

using namespace mvrcache;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::kIo;
}

}  // namespace

TEST_CASE("tokenizer lowercases and isolates punctuation") {
    auto t = tokenize("Summarize Section 3, list three limitations, and format as bullet points.");
    REQUIRE(t.size() == 14);
    CHECK(t[0] == "summarize");
    CHECK(t[3] == ",");
    CHECK(t[13] == ".");
    CHECK(tokenize("  hello -- WORLD  ") == std::vector<std::string>{"hello", "world"});
    CHECK(tokenize("a,b") == std::vector<std::string>{"a", ",", "b"});
}

TEST_CASE("load preserves arrival order") {
    auto c = parse_corpus(R"({"id":"a","prompt":"x y","response":"1"}
{"id":"b","prompt":"z","response":"2"}

{"id":"c","prompt":"w, v","response":"3"}
)");
    REQUIRE(c.size() == 3);
    CHECK(c.at(0).prompt.id == "a");
    CHECK(c.at(2).prompt.id == "c");
    CHECK(c.at(2).prompt.length() == 3);
}

TEST_CASE("load errors") {
    CHECK(code_of([] { parse_corpus(""); }) == ErrorCode::kEmptyCorpus);
    CHECK(code_of([] {
              parse_corpus(R"({"id":"q1","prompt":"a","response":"r"}
{"id":"q1","prompt":"b","response":"r"})");
          }) == ErrorCode::kDuplicateKey);
    try {
        parse_corpus("{\"id\":\"q1\",\"prompt\":\"a\",\"response\":\"r\"}\n{\"id\":\"q1\",\"prompt\":\"b\",\"response\":\"r\"}");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("q1") != std::string::npos);
    }
    try {
        parse_corpus("{\"id\":\"a\",\"prompt\":\"a\",\"response\":\"r\"}\nnot json\n");
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kParse);
        CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
}

TEST_CASE("split assignment") {
    std::string body;
    for (int i = 0; i < 10; ++i) {
        body += "{\"id\":\"p" + std::to_string(i) + "\",\"prompt\":\"text\",\"response\":\"r\"}\n";
    }
    LoadOptions opt;
    opt.counts = {4, 3};
    auto c = parse_corpus(body, opt);
    CHECK(c.split("train") == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(c.split("val") == std::vector<std::size_t>{4, 5, 6});
    CHECK(c.split("test") == std::vector<std::size_t>{7, 8, 9});

    auto labelled = parse_corpus(R"({"id":"a","prompt":"x","response":"1","split":"test"}
{"id":"b","prompt":"x","response":"1","split":"train"})");
    CHECK(labelled.split("train") == std::vector<std::size_t>{1});
    CHECK(labelled.split("test") == std::vector<std::size_t>{0});

    auto dir = std::filesystem::temp_directory_path() / "mvrcache_corpus_test";
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "splits.json") << R"({"train":["b"],"val":["a"]})";
    LoadOptions side;
    side.split_file = dir / "splits.json";
    auto s = parse_corpus(R"({"id":"a","prompt":"x","response":"1"}
{"id":"b","prompt":"x","response":"1"})",
                          side);
    CHECK(s.split("val") == std::vector<std::size_t>{0});
    CHECK(s.split("train") == std::vector<std::size_t>{1});

    std::ofstream(dir / "bad.json") << R"({"train":["a"],"val":["a"]})";
    side.split_file = dir / "bad.json";
    CHECK(code_of([&] {
              parse_corpus(R"({"id":"a","prompt":"x","response":"1"})", side);
          }) == ErrorCode::kConfig);
}

TEST_CASE("write then load round-trips") {
    auto c = parse_corpus(R"({"id":"a","prompt":"x, y","response":"1","split":"train"}
{"id":"b","prompt":"z","response":" 2 ","split":"test"})");
    auto path = std::filesystem::temp_directory_path() / "mvrcache_roundtrip.jsonl";
    write_corpus(path, c);
    auto d = load_corpus(path);
    REQUIRE(d.size() == 2);
    CHECK(d.at(1).response.text == " 2 ");
    CHECK(d.split("test") == std::vector<std::size_t>{1});
}

TEST_CASE("oracle") {
    auto c = parse_corpus(R"({"id":"q","prompt":"x","response":"Positive"})");
    Oracle o(c);
    CHECK(o.respond("q").text == "Positive");
    CHECK(o.respond("q").text == "Positive");
    CHECK(o.calls() == 2);
    CHECK(code_of([&] { o.respond("missing"); }) == ErrorCode::kNotFound);
    CHECK(o.calls() == 2);
}

TEST_CASE("responses_equal") {
    CHECK(responses_equal("Positive", "Positive"));
    CHECK_FALSE(responses_equal("Positive", "positive"));
    CHECK(responses_equal("Positive\n", "Positive"));
    CHECK(responses_equal("  a b ", "a b"));
    CHECK_FALSE(responses_equal("a  b", "a b"));
}
