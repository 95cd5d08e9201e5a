#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ragline/core.hpp"

using namespace ragline;

namespace {
EmbeddingVector vec(std::vector<double> v) { return EmbeddingVector(std::move(v)); }

std::vector<std::string> toks(std::initializer_list<const char*> list) {
    return {list.begin(), list.end()};
}
}  // namespace

TEST(Cosine, IdenticalAndOrthogonal) {
    EXPECT_DOUBLE_EQ(cosine_similarity(vec({1, 0}), vec({1, 0})), 1.0);
    EXPECT_DOUBLE_EQ(cosine_similarity(vec({1, 0}), vec({0, 1})), 0.0);
}

TEST(Cosine, HandComputedValue) {
    // 32 / (sqrt(14) * sqrt(77)), evaluated independently.
    EXPECT_NEAR(cosine_similarity(vec({1, 2, 3}), vec({4, 5, 6})), 0.9746318461970762, 1e-12);
}

TEST(Cosine, Errors) {
    EXPECT_THROW(cosine_similarity(vec({1, 0}), vec({1, 0, 0})), DimensionError);
    EXPECT_THROW(cosine_similarity(vec({0, 0}), vec({1, 0})), DegenerateVectorError);
    EXPECT_THROW(cosine_similarity(vec({1, 0}), vec({0, 0})), DegenerateVectorError);
}

TEST(Cosine, ClampedForParallelVectors) {
    // Values whose product drifts above 1.0 without clamping.
    auto a = vec({0.1, 0.2, 0.3, 1e-8, 7.7});
    EXPECT_LE(cosine_similarity(a, a), 1.0);
    auto b = vec({-0.1, -0.2, -0.3, -1e-8, -7.7});
    EXPECT_GE(cosine_similarity(a, b), -1.0);
}

TEST(Cosine, Properties) {
    std::mt19937 rng(7);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> scale(0.01, 100.0);
    for (int trial = 0; trial < 500; ++trial) {
        std::size_t dim = 1 + trial % 40;
        std::vector<double> av(dim), bv(dim);
        for (auto& x : av) x = nd(rng);
        for (auto& x : bv) x = nd(rng);
        auto a = vec(av), b = vec(bv);
        EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-9);
        EXPECT_LT(std::abs(cosine_similarity(a, b) - cosine_similarity(b, a)), 1e-12);
        double c = scale(rng);
        for (auto& x : av) x *= c;
        EXPECT_NEAR(cosine_similarity(vec(av), b), cosine_similarity(a, b), 1e-9);
    }
}

TEST(EmbeddingVectorType, RejectsNonFiniteAndEmpty) {
    EXPECT_THROW(vec({}), PreconditionError);
    EXPECT_THROW(vec({1.0, std::nan("")}), PreconditionError);
    EXPECT_THROW(vec({INFINITY}), PreconditionError);
    EXPECT_TRUE(vec({0.0, 0.0}).is_zero());
}

TEST(Tokenize, Examples) {
    EXPECT_EQ(tokenize("Semantic Caching, 50ms!"), toks({"semantic", "caching", "50ms"}));
    EXPECT_TRUE(tokenize("").empty());
    EXPECT_EQ(tokenize("RAG RAG rag"), toks({"rag", "rag", "rag"}));
}

TEST(Tokenize, UnicodeAware) {
    EXPECT_EQ(tokenize("Ünïcode—Straße ΑΒΓ Привет"), toks({"ünïcode", "straße", "αβγ", "привет"}));
    EXPECT_EQ(tokenize("日本語 text"), toks({"日本語", "text"}));
    EXPECT_EQ(tokenize("a b"), toks({"a", "b"}));  // no-break space separates
}

TEST(Tokenize, IdempotentOnJoinedOutput) {
    std::mt19937 rng(11);
    const std::string alphabet = "aZ9 ,.!?-_é Ж\n\t";
    for (int i = 0; i < 300; ++i) {
        std::string s;
        for (int j = 0; j < 40; ++j) s += alphabet[rng() % alphabet.size()];
        auto once = tokenize(s);
        std::string joined;
        for (const auto& t : once) joined += t + " ";
        EXPECT_EQ(tokenize(joined), once);
        EXPECT_EQ(tokenize(s), once);
    }
}

TEST(NormalizeAnswer, Examples) {
    EXPECT_EQ(normalize_answer("  The Answer. "), "the answer");
    EXPECT_EQ(normalize_answer("x"), "x");
    EXPECT_EQ(normalize_answer("A  B"), "a b");
    EXPECT_EQ(normalize_answer("Why?!"), "why");
    EXPECT_EQ(normalize_answer("a ."), "a");
}

TEST(NormalizeAnswer, Idempotent) {
    std::mt19937 rng(3);
    const std::string alphabet = "aB .!?\t\nÉ";
    for (int i = 0; i < 500; ++i) {
        std::string s;
        for (int j = 0; j < 25; ++j) s += alphabet[rng() % alphabet.size()];
        auto once = normalize_answer(s);
        EXPECT_EQ(normalize_answer(once), once) << s;
    }
}

TEST(OverlapF1, ClippedCounts) {
    auto a_a = toks({"a", "a"});
    auto a = toks({"a"});
    EXPECT_NEAR(overlap_f1(a_a, a), 2.0 / 3.0, 1e-12);
    auto ab = toks({"a", "b"});
    auto bc = toks({"b", "c"});
    EXPECT_NEAR(overlap_f1(ab, bc), 0.5, 1e-12);
    std::vector<std::string> none;
    EXPECT_EQ(overlap_f1(none, none), 1.0);
    EXPECT_EQ(overlap_f1(none, a), 0.0);
    EXPECT_EQ(overlap_f1(a, none), 0.0);
}

TEST(ContentTokens, DropsStopwords) {
    EXPECT_EQ(content_tokens("hey could you tell me about RRF fusion please"), toks({"rrf", "fusion"}));
}

TEST(Fnv1a, KnownVectors) {
    EXPECT_EQ(to_hex(fnv1a64("")), "cbf29ce484222325");
    EXPECT_EQ(to_hex(fnv1a64("a")), "af63dc4c8601ec8c");
    EXPECT_EQ(to_hex(fnv1a64("foobar")), "85944171f73967e8");
}

TEST(Labels, ToString) {
    EXPECT_EQ(to_string(Stage::Reranked), "reranked");
    EXPECT_EQ(to_string(RouteDecision::External), "external");
    EXPECT_EQ(to_string(CragVerdict::Ambiguous), "ambiguous");
}
