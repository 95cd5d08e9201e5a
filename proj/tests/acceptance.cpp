// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit if
// any fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdio>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ragline/mcp_server.hpp"
#include "ragline/post_retrieval.hpp"
#include "ragline/retrieval.hpp"
#include "ragline/semantic_cache.hpp"
#include "support/test_support.hpp"

using namespace ragline;
using json = nlohmann::json;
using ragline::testing::MockStack;
using ragline::testing::fixtures_dir;
using ragline::testing::read_file;

namespace {

// Thrown by `require` to end a criterion with a reason.
struct Failed {
    std::string why;
};

void require(bool ok, const std::string& why) {
    if (!ok) throw Failed{why};
}

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string num(double v, int precision = 6) {
    std::ostringstream out;
    out.precision(precision);
    out << v;
    return out.str();
}

Chunk chunk(std::string id, std::string text, std::string partition, Metadata meta = {}) {
    Chunk c;
    c.id = std::move(id);
    c.doc_id = "doc-" + c.id;
    c.content = std::move(text);
    c.partition_key = std::move(partition);
    c.metadata = std::move(meta);
    c.char_span = {0, c.content.size()};
    return c;
}

std::vector<std::string> ids(const std::vector<ScoredChunk>& r) {
    std::vector<std::string> out;
    for (const auto& s : r) out.push_back(s.id());
    return out;
}

bool bitwise_equal(const std::vector<ScoredChunk>& a, const std::vector<ScoredChunk>& b) {
    if (ids(a) != ids(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::bit_cast<std::uint64_t>(a[i].score) != std::bit_cast<std::uint64_t>(b[i].score)) return false;
    }
    return true;
}

std::string criterion_rrf() {
    auto start = Clock::now();
    std::mt19937 rng(2024);
    std::vector<std::string> pool;
    for (int i = 0; i < 45; ++i) pool.push_back("doc" + std::to_string(i));
    const int k = 60;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::vector<std::string>> lists(2);
        for (auto& list : lists) {
            auto shuffled = pool;
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
            shuffled.resize(rng() % 31);
            list = shuffled;
        }
        // score(d) = sum over lists containing d of 1 / (k + rank), rank from 1.
        std::map<std::string, double> oracle;
        for (const auto& list : lists) {
            for (std::size_t r = 0; r < list.size(); ++r) {
                oracle[list[r]] += 1.0 / (k + static_cast<double>(r + 1));
            }
        }
        std::vector<std::pair<std::string, double>> expected(oracle.begin(), oracle.end());
        std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        auto fused = rrf_fuse(lists, RrfConfig{k});
        require(fused.size() == expected.size(), "trial " + std::to_string(trial) + ": size differs");
        for (std::size_t i = 0; i < fused.size(); ++i) {
            require(fused[i].first == expected[i].first,
                    "trial " + std::to_string(trial) + ": order differs at " + std::to_string(i));
            require(std::abs(fused[i].second - expected[i].second) <= 1e-12,
                    "trial " + std::to_string(trial) + ": score differs at " + std::to_string(i));
        }
    }
    double ms = ms_since(start);
    require(ms < 5000, "took " + num(ms) + " ms");
    return "200 random list pairs match the brute-force fusion in " + num(ms, 3) + " ms";
}

std::string criterion_boost() {
    auto official = std::make_shared<const Chunk>(chunk("o", "t", "A", {{"doc_type", "official"}}));
    auto out = apply_boost({{official, 0.5, Stage::Fused}}, {{"doc_type", "official", 1.2}});
    require(out.size() == 1 && std::abs(out[0].score - 0.6) <= 1e-12,
            "boosted score " + (out.empty() ? std::string("missing") : num(out[0].score, 17)));

    // a: rank 1 in both legs (2/61); b: rank 2 in both (2/62), official.
    HybridIndex index;
    index.upsert_chunks({{chunk("a", "gateway gateway plugin", "A"), EmbeddingVector({1, 0})},
                         {chunk("b", "gateway routing notes here", "A", {{"doc_type", "official"}}),
                          EmbeddingVector({0.8, 0.6})}});
    auto q = EmbeddingVector({1, 0});
    auto plain = hybrid_search(index, "gateway", q, "A", 2, {}, {});
    auto boosted = hybrid_search(index, "gateway", q, "A", 2, {}, {{"doc_type", "official", 1.2}});
    require(ids(plain) == std::vector<std::string>{"a", "b"}, "unboosted order is not a, b");
    require(ids(boosted) == std::vector<std::string>{"b", "a"}, "boost did not invert the ranks");
    return "0.5 x 1.2 = " + num(out[0].score, 17) + "; ranks a,b become b,a";
}

std::string criterion_splitter() {
    auto start = Clock::now();
    std::mt19937 rng(77);
    std::size_t chunks = 0;
    const std::vector<std::string> partitions = {"default", "docs", "tenant-a"};
    for (int i = 0; i < 500; ++i) {
        SplitterConfig cfg;
        cfg.max_chunk_chars = std::vector<std::size_t>{200, 500, 1500}[static_cast<std::size_t>(i) % 3];
        std::string text = ragline::testing::random_markdown(rng);
        if (i % 5 == 0) text = "---\npartition: fm-" + std::to_string(i) + "\nauthor: x\n---\n" + text;
        auto doc = make_document("doc" + std::to_string(i) + ".md", "doc.md", text,
                                 partitions[static_cast<std::size_t>(i) % partitions.size()]);
        auto out = split_document(doc, cfg);
        chunks += out.size();
        auto bad = ragline::testing::split_violations(doc, out, cfg);
        require(bad.empty(), "document " + std::to_string(i) + ": " + (bad.empty() ? "" : bad.front()));
    }
    double ms = ms_since(start);
    require(ms < 30000, "took " + num(ms) + " ms");
    return "500 documents, " + std::to_string(chunks) + " chunks, 0 violations in " + num(ms, 4) + " ms";
}

std::string criterion_cache() {
    auto entry = [](std::string text, EmbeddingVector v, std::int64_t created) {
        return CacheEntry{std::move(text), std::move(v), "ans", {"c1"}, created, 604800, "p"};
    };
    const EmbeddingVector stored({1.0, 0.0});
    const EmbeddingVector near({0.96, 0.28});  // cosine 0.96 against `stored`
    SemanticCache cache;
    cache.insert(entry("how do I enable caching", stored, 0));
    auto self = cache.lookup("how do I enable caching", stored, "p", 10);
    require(self && self->similarity == 1.0, "self match missed");
    auto plain = cache.lookup("how do I enable caching", near, "p", 10);
    require(plain && std::abs(plain->similarity - 0.96) < 1e-12, "0.96 pair missed without a fuzzy marker");
    require(!cache.lookup("possibly how do I enable caching", near, "p", 10), "0.96 pair hit with a fuzzy marker");
    const std::int64_t hour = 3600;
    require(!cache.lookup("how do I enable caching", stored, "p", 168 * hour + 1), "entry returned past 168h");
    require(!cache.lookup("how do I enable caching", stored, "p", 500 * hour), "entry returned at 500h");

    const std::size_t dim = 1024;
    std::mt19937 rng(1);
    std::normal_distribution<double> nd;
    SemanticCache big;
    for (std::size_t i = 0; i < 10000; ++i) {
        std::vector<double> v(dim);
        for (auto& x : v) x = nd(rng);
        big.insert(entry("entry " + std::to_string(i), EmbeddingVector(std::move(v)), static_cast<std::int64_t>(i)));
    }
    std::vector<double> qv(dim);
    for (auto& x : qv) x = nd(rng);
    EmbeddingVector q(std::move(qv));
    auto start = Clock::now();
    auto hit = big.lookup("a fresh question", q, "p", 20000);
    double ms = ms_since(start);
    require(!hit, "random query hit the cache");
    require(ms < 50, "10k lookup took " + num(ms) + " ms");
    return "thresholds and TTL hold; 10,000-entry lookup at dim 1024 took " + num(ms, 3) + " ms";
}

std::string criterion_crag() {
    auto log = std::make_shared<CallLog>();
    auto gen = std::make_shared<MockGenerator>(log);
    auto web = std::make_shared<MockWebSearch>(log);
    web->add_fixture("question", {{"Web", "https://example.com/a", "web snippet", 0.7}});
    CragEvaluator crag(gen, web, std::make_shared<PromptCatalog>(PromptCatalog::defaults()));
    auto table = std::make_shared<std::map<std::string, std::string>>();
    gen->script("evaluate", [table](const PromptFields& f) -> std::optional<std::string> {
        auto it = table->find(f.passage);
        if (it == table->end()) return std::nullopt;
        return it->second;
    });

    std::mt19937 rng(909);
    std::uniform_real_distribution<double> u(0, 1);
    std::map<CragVerdict, int> seen;
    const CragConfig cfg;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> scores(rng() % 7);
        for (auto& s : scores) {
            s = u(rng);
            if (rng() % 8 == 0) s = rng() % 2 ? cfg.lower_threshold : cfg.upper_threshold;
        }
        table->clear();
        std::vector<ScoredChunk> chunks;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            std::string text = "passage " + std::to_string(i) + " question text.";
            std::ostringstream v;
            v.precision(17);
            v << scores[i];
            (*table)[text] = v.str();
            auto c = std::make_shared<Chunk>(chunk("c" + std::to_string(i), text, "p"));
            chunks.push_back({c, 1.0 / static_cast<double>(i + 1), Stage::Fused});
        }
        auto out = crag.evaluate("question", chunks, cfg);

        double best = scores.empty() ? 0.0 : *std::max_element(scores.begin(), scores.end());
        CragVerdict expected = scores.empty()                  ? CragVerdict::Incorrect
                               : best >= cfg.upper_threshold   ? CragVerdict::Correct
                               : best <= cfg.lower_threshold   ? CragVerdict::Incorrect
                                                               : CragVerdict::Ambiguous;
        const std::string at = "trial " + std::to_string(trial);
        require(out.verdict == expected, at + ": verdict differs from the band rule");
        require(classify_confidence(scores, cfg) == expected, at + ": classify_confidence disagrees");
        if (out.verdict == CragVerdict::Correct) require(out.web_results.empty(), at + ": Correct with web results");
        if (out.verdict == CragVerdict::Incorrect) require(out.retained.empty(), at + ": Incorrect retained chunks");
        ++seen[out.verdict];
    }
    return "1000 score vectors: " + std::to_string(seen[CragVerdict::Correct]) + " Correct, " +
           std::to_string(seen[CragVerdict::Ambiguous]) + " Ambiguous, " +
           std::to_string(seen[CragVerdict::Incorrect]) + " Incorrect, no invariant violated";
}

std::string criterion_routing() {
    MockStack s;
    const std::string simple =
        "# BM25 Scoring\n\nBM25 ranks passages by term frequency with saturation and length normalization. "
        "The parameter k1 controls how quickly repeated terms stop adding weight. The parameter b sets how "
        "strongly long passages are penalized.";
    auto r = s.pipeline->chat(simple);
    require(r.route == RouteDecision::Simple, "query was not routed Simple");
    std::size_t transforms = s.log->count("generator", "rewrite") + s.log->count("generator", "decompose") +
                             s.log->count("generator", "hyde");
    require(transforms == 0, std::to_string(transforms) + " transform calls on a Simple route");

    s.web().load_fixtures(read_file(fixtures_dir() / "web_fixtures.json"));
    auto before = s.index->search_count();
    auto ext = s.pipeline->chat("what is the weather today");
    require(ext.route == RouteDecision::External, "query was not routed External");
    require(s.index->search_count() == before, "External route searched the index");
    require(!ext.sources.empty() && ext.sources[0].web, "External answer has no web source");
    return "Simple: 0 rewrite/decompose/hyde calls; External: 0 index searches";
}

std::string criterion_partitions() {
    std::mt19937 rng(31337);
    std::normal_distribution<double> nd;
    const std::vector<std::string> vocab = {"cache", "route", "plugin", "vector", "rank", "fusion",
                                            "token", "gateway", "partition", "score", "tenant"};
    std::size_t searches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        HybridIndex index;
        std::size_t parts = 1 + rng() % 5;
        std::size_t n = 1 + rng() % 100;
        for (std::size_t i = 0; i < n; ++i) {
            std::string text;
            for (std::size_t w = 0; w < 1 + rng() % 10; ++w) text += vocab[rng() % vocab.size()] + " ";
            std::vector<double> v(8);
            for (auto& x : v) x = nd(rng);
            index.upsert_chunks({{chunk("c" + std::to_string(i), text, "P" + std::to_string(rng() % parts)),
                                  EmbeddingVector(std::move(v))}});
        }
        std::vector<double> qv(8);
        for (auto& x : qv) x = nd(rng);
        EmbeddingVector q(std::move(qv));
        std::string qt = vocab[rng() % vocab.size()] + " " + vocab[rng() % vocab.size()];

        struct Rankings {
            std::vector<ScoredChunk> dense, sparse, hybrid;
        };
        auto rank = [&](const std::string& key) {
            Rankings r{index.dense_search(q, key, 1000), index.sparse_search(qt, key, 1000),
                       hybrid_search(index, qt, q, key, 1000, {}, {})};
            searches += 3;
            for (const auto* list : {&r.dense, &r.sparse, &r.hybrid}) {
                for (const auto& hit : *list) {
                    require(hit.chunk->partition_key == key,
                            "search in " + key + " returned a chunk of " + hit.chunk->partition_key);
                }
            }
            return r;
        };
        std::map<std::string, Rankings> snapshot;
        for (std::size_t p = 0; p < parts; ++p) snapshot["P" + std::to_string(p)] = rank("P" + std::to_string(p));

        std::string victim = "P" + std::to_string(rng() % parts);
        index.delete_partition(victim);
        for (const auto& [key, before] : snapshot) {
            auto after = rank(key);
            if (key == victim) {
                require(after.dense.empty() && after.sparse.empty() && after.hybrid.empty(),
                        "deleted partition still searchable");
                continue;
            }
            require(bitwise_equal(before.dense, after.dense) && bitwise_equal(before.sparse, after.sparse) &&
                        bitwise_equal(before.hybrid, after.hybrid),
                    "trial " + std::to_string(trial) + ": " + key + " changed after deleting " + victim);
        }
    }
    return "100 random corpora, " + std::to_string(searches) +
           " searches, no cross-partition hits, survivors bitwise identical";
}

std::string criterion_jsonrpc() {
    MockStack stack;
    McpServer server(stack.pipeline);
    auto call = [&](const std::string& body) {
        auto out = server.handle_request(body);
        require(out.has_value(), "no response to " + body);
        return json::parse(*out);
    };
    auto list = call(R"({"jsonrpc":"2.0","id":1,"method":"tools/list"})");
    std::vector<std::string> names;
    for (const auto& t : list["result"]["tools"]) names.push_back(t["name"]);
    require(names == std::vector<std::string>{"rag_chat", "rag_search"}, "tools/list returned " + list.dump());
    require(call("{not json")["error"]["code"] == -32700, "malformed JSON is not -32700");
    require(call(R"({"jsonrpc":"2.0","id":2,"method":"nope"})")["error"]["code"] == -32601,
            "unknown method is not -32601");
    require(call(R"({"jsonrpc":"2.0","id":3,"method":"tools/call","params":{"name":"rag_chat","arguments":{}}})")
                    ["error"]["code"] == -32602,
            "missing query is not -32602");

    HttpTransport http(server);
    int port = http.bind("127.0.0.1:0");
    std::thread runner([&] { http.run(); });
    for (int i = 0; i < 200; ++i) {
        httplib::Client probe("127.0.0.1", port);
        if (probe.Get("/")) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    std::vector<std::future<std::pair<int, json>>> futures;
    for (int i = 0; i < 16; ++i) {
        futures.push_back(std::async(std::launch::async, [port, i] {
            httplib::Client client("127.0.0.1", port);
            client.set_read_timeout(30, 0);
            json req = {{"jsonrpc", "2.0"}, {"id", 500 + i}, {"method", "tools/call"},
                        {"params",
                         {{"name", i % 2 ? "rag_search" : "rag_chat"},
                          {"arguments", {{"query", "query number " + std::to_string(i) + " about rrf"},
                                         {"no_cache", true}}}}}};
            if (i % 2) req["params"]["arguments"].erase("no_cache");
            auto res = client.Post("/rpc", req.dump(), "application/json");
            return std::make_pair(i, res && res->status == 200 ? json::parse(res->body) : json());
        }));
    }
    std::string problem;
    for (auto& f : futures) {
        auto [i, body] = f.get();
        if (!body.is_object() || !body.contains("result") || body["id"] != 500 + i) {
            if (problem.empty()) problem = "request " + std::to_string(i) + " got " + body.dump();
        }
    }
    http.stop();
    runner.join();
    require(problem.empty(), problem);
    return "tools/list exact; -32700, -32601, -32602 returned; 16 concurrent HTTP calls paired by id";
}

EvalReport eval_once(const std::string& dataset, bool no_cache, MockStack* shared = nullptr) {
    MockStack fresh;
    MockStack& s = shared ? *shared : fresh;
    EvalOptions opts;
    opts.no_cache = no_cache;
    return run_eval(fixtures_dir() / dataset, *s.pipeline, s.pipeline->defaults(), opts);
}

std::string criterion_determinism() {
    auto a = eval_once("dataset.jsonl", true);
    auto b = eval_once("dataset.jsonl", true);
    require(a.rows.size() == 10 && b.rows.size() == 10, "expected 10 rows");
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        const auto& x = a.rows[i];
        const auto& y = b.rows[i];
        require(x.sample_id == y.sample_id && x.em == y.em && x.f1 == y.f1 && x.recall == y.recall &&
                    x.precision == y.precision && x.prediction == y.prediction,
                "row " + std::to_string(i) + " differs between runs");
    }
    require(a.aggregates.mean_recall == 1.0, "verbatim mean recall " + num(a.aggregates.mean_recall));
    require(a.aggregates.mean_em == 1.0, "verbatim mean EM " + num(a.aggregates.mean_em));
    return "two --no-cache runs produce identical rows; verbatim recall 1.0, EM 1.0";
}

std::string criterion_ablation() {
    MockStack off;
    auto uncached = eval_once("dataset.jsonl", true, &off);
    require(uncached.aggregates.cache_hit_rate == 0.0, "no-cache hit rate " + num(uncached.aggregates.cache_hit_rate));
    require(off.cache->lookup_count() == 0, std::to_string(off.cache->lookup_count()) + " cache lookups with no-cache");

    // Rows 5-9 of the duplicated dataset repeat rows 0-4 verbatim.
    auto dupes = eval_once("dataset_dupes.jsonl", false);
    require(dupes.rows.size() == 10, "expected 10 rows");
    std::size_t hits = 0;
    double worst_ratio = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& first = dupes.rows[i];
        const auto& second = dupes.rows[i + 5];
        require(!first.cache_hit, "first occurrence " + first.sample_id + " hit the cache");
        hits += second.cache_hit ? 1 : 0;
        require(second.latency_ms < first.latency_ms,
                "row " + second.sample_id + " took " + num(second.latency_ms) + " ms vs " +
                    num(first.latency_ms) + " ms uncached");
        worst_ratio = std::max(worst_ratio, second.latency_ms / first.latency_ms);
    }
    require(hits == 5, "second pass hit rate " + num(static_cast<double>(hits) / 5.0));
    return "no-cache: hit rate 0, 0 lookups; duplicate pass: hit rate 1.0, slowest cached/uncached latency ratio " +
           num(worst_ratio, 3);
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<std::string()>>> criteria = {
        {"rrf oracle equivalence", criterion_rrf},
        {"boost ranker", criterion_boost},
        {"splitter properties", criterion_splitter},
        {"cache thresholds and ttl", criterion_cache},
        {"crag decision table", criterion_crag},
        {"routing bypass", criterion_routing},
        {"partition isolation", criterion_partitions},
        {"json-rpc conformance", criterion_jsonrpc},
        {"mock end-to-end determinism", criterion_determinism},
        {"no-cache ablation", criterion_ablation},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& [name, run] = criteria[i];
        std::string status = "PASS";
        std::string detail;
        try {
            detail = run();
        } catch (const Failed& f) {
            status = "FAIL";
            detail = f.why;
        } catch (const std::exception& e) {
            status = "FAIL";
            detail = std::string("exception: ") + e.what();
        }
        if (status == "FAIL") ++failed;
        std::cout << status << "  " << (i + 1) << ". " << name << ": " << detail << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
