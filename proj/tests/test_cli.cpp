#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <nlohmann/json.hpp>
#include <regex>

#include "support/test_support.hpp"

using nlohmann::json;
using ragline::testing::TempDir;
using ragline::testing::fixtures_dir;
using ragline::testing::read_file;
using ragline::testing::write_file;

namespace {

struct Run {
    int status = -1;
    std::string out;
};

// Runs `args` through /bin/sh with the CLI path prepended; stderr is
// folded into the output when `with_stderr` is set.
Run cli(const std::string& args, bool with_stderr = false, const std::string& env = "") {
    std::string cmd = env + (env.empty() ? "" : " ") + "'" + std::string(RAGLINE_CLI_PATH) + "' " + args;
    if (with_stderr) cmd += " 2>&1";
    else cmd += " 2>/dev/null";
    Run r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    std::size_t n = 0;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    int raw = ::pclose(pipe);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

std::string quote(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        index_ = tmp_ / "index.json";
        auto r = cli("--mock --index " + quote(index_) + " ingest --input " + quote(fixtures_dir() / "corpus"));
        ASSERT_EQ(r.status, 0) << r.out;
        ASSERT_NE(r.out.find("docs=10"), std::string::npos) << r.out;
    }
    std::string base() const { return "--mock --index " + quote(index_) + " "; }

    TempDir tmp_{"cli"};
    std::filesystem::path index_;
};

}  // namespace

TEST_F(Cli, QueryPrintsAnswerAndSources) {
    auto r = cli(base() + "query --text 'What does the bm25 k1 parameter control?' --no-cache");
    ASSERT_EQ(r.status, 0) << r.out;
    EXPECT_NE(r.out.find("answer: "), std::string::npos);
    EXPECT_NE(r.out.find("sources:\n  - "), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("timings_ms:"), std::string::npos);

    auto j = cli(base() + "query --json --text 'How does reciprocal rank fusion combine lists?'");
    ASSERT_EQ(j.status, 0) << j.out;
    auto parsed = json::parse(j.out);
    EXPECT_FALSE(parsed["sources"].empty());
    EXPECT_FALSE(parsed["cache_hit"].get<bool>());

    auto s = cli(base() + "query --search-only --json --text 'reciprocal rank fusion'");
    ASSERT_EQ(s.status, 0) << s.out;
    EXPECT_FALSE(json::parse(s.out).empty());
}

TEST_F(Cli, IngestIsIdempotent) {
    std::string before = read_file(index_);
    auto r = cli(base() + "ingest --input " + quote(fixtures_dir() / "corpus"));
    ASSERT_EQ(r.status, 0) << r.out;
    EXPECT_EQ(read_file(index_), before);
}

TEST_F(Cli, StdioServeAnswersToolsList) {
    write_file(tmp_ / "req.jsonl",
               R"({"jsonrpc":"2.0","id":1,"method":"tools/list"})" "\n"
               R"({"jsonrpc":"2.0","id":2,"method":"tools/call","params":{"name":"rag_search","arguments":{"query":"reciprocal rank fusion"}}})" "\n");
    auto r = cli(base() + "serve --transport stdio < " + quote(tmp_ / "req.jsonl"));
    ASSERT_EQ(r.status, 0) << r.out;
    std::istringstream in(r.out);
    std::vector<json> replies;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) replies.push_back(json::parse(line));
    }
    ASSERT_EQ(replies.size(), 2u) << r.out;
    EXPECT_EQ(replies[0]["id"], 1);
    ASSERT_EQ(replies[0]["result"]["tools"].size(), 2u);
    EXPECT_EQ(replies[0]["result"]["tools"][0]["name"], "rag_chat");
    EXPECT_EQ(replies[0]["result"]["tools"][1]["name"], "rag_search");
    EXPECT_EQ(replies[1]["id"], 2);
    EXPECT_TRUE(replies[1].contains("result")) << replies[1].dump();
}

TEST_F(Cli, EvalWithoutCacheHasZeroHitRate) {
    auto report = tmp_ / "report";
    auto r = cli(base() + "eval --no-cache --dataset " + quote(fixtures_dir() / "dataset.jsonl") +
                 " --report " + quote(report));
    ASSERT_EQ(r.status, 0) << r.out;
    std::smatch m;
    ASSERT_TRUE(std::regex_search(r.out, m, std::regex(R"(cache hit rate\s+([0-9.]+))"))) << r.out;
    EXPECT_EQ(std::stod(m[1]), 0.0);
    auto text = read_file(report.string() + ".txt");
    EXPECT_NE(text.find("cache hit rate"), std::string::npos);
    EXPECT_FALSE(read_file(report.string() + ".jsonl").empty());
}

TEST(CliConfig, LayerMatrix) {
    TempDir tmp("cli-cfg");
    write_file(tmp / "cfg.json", R"({"pipeline": {"top_k_retrieve": 11}})");
    const std::string file = "--config " + quote(tmp / "cfg.json") + " ";
    const std::string env = "RAGLINE_PIPELINE_TOP_K_RETRIEVE=12";
    const std::string flag = "--set pipeline.top_k_retrieve=13 ";
    for (int mask = 0; mask < 8; ++mask) {
        bool f = mask & 1, e = mask & 2, s = mask & 4;
        auto r = cli((f ? file : "") + (s ? flag : "") + "config", false, e ? "env " + env : "");
        ASSERT_EQ(r.status, 0) << r.out;
        int expected = s ? 13 : e ? 12 : f ? 11 : 20;
        EXPECT_EQ(json::parse(r.out)["pipeline"]["top_k_retrieve"], expected) << "mask " << mask;
    }
}

TEST(CliErrors, ExitCodesAndMessages) {
    TempDir tmp("cli-err");
    auto missing = cli("--mock --index " + quote(tmp / "none.json") + " query --text hello", true);
    EXPECT_EQ(missing.status, 1);
    EXPECT_NE(missing.out.find("ragline ingest"), std::string::npos) << missing.out;

    auto bad_set = cli("--set pipeline.top_k_retrieve=lots config", true);
    EXPECT_EQ(bad_set.status, 2);
    EXPECT_NE(bad_set.out.find("configuration error"), std::string::npos) << bad_set.out;

    auto unknown = cli("--set nope=1 config", true);
    EXPECT_EQ(unknown.status, 2);

    auto no_sub = cli("", true);
    EXPECT_NE(no_sub.status, 0);

    auto bad_input = cli("--mock --index " + quote(tmp / "i.json") + " ingest --input /nonexistent/dir", true);
    EXPECT_EQ(bad_input.status, 1);
    EXPECT_NE(bad_input.out.find("/nonexistent/dir"), std::string::npos) << bad_input.out;

    // No backends configured and no --mock.
    auto no_backend = cli("--index " + quote(tmp / "i.json") + " ingest --input " + quote(fixtures_dir() / "small"), true);
    EXPECT_EQ(no_backend.status, 2);
    EXPECT_NE(no_backend.out.find("--mock"), std::string::npos) << no_backend.out;
}
