#include <gtest/gtest.h>

#include <random>

#include "ragline/splitter.hpp"
#include "support/test_support.hpp"

using namespace ragline;
using ragline::testing::random_markdown;
using ragline::testing::split_violations;

namespace {
Document doc_of(std::string content, std::string partition = "p1") {
    Document d;
    d.id = "doc.md";
    d.source_path = "doc.md";
    d.content = std::move(content);
    d.partition_key = std::move(partition);
    return d;
}

using Path = std::vector<std::string>;
}  // namespace

TEST(CodeBlocks, ClosedFenceOffsets) {
    auto spans = detect_code_blocks("a\n```\nx\n```\nb");
    ASSERT_EQ(spans.size(), 1u);
    EXPECT_EQ(spans[0], (CharSpan{2, 11}));  // "```\nx\n```"
}

TEST(CodeBlocks, NoFences) { EXPECT_TRUE(detect_code_blocks("no code here").empty()); }

TEST(CodeBlocks, UnclosedRunsToEnd) {
    auto spans = detect_code_blocks("```go\nf()\n");
    ASSERT_EQ(spans.size(), 1u);
    EXPECT_EQ(spans[0], (CharSpan{0, 10}));
}

TEST(CodeBlocks, SeveralBlocksSortedAndDisjoint) {
    std::string md = "```\na\n```\ntext\n```py\nb\n```\n";
    auto spans = detect_code_blocks(md);
    ASSERT_EQ(spans.size(), 2u);
    EXPECT_EQ(spans[0], (CharSpan{0, 9}));
    EXPECT_EQ(md.substr(spans[1].start, spans[1].length()), "```py\nb\n```");
}

TEST(Split, HeadingBoundaries) {
    auto d = doc_of("# T\n## A\np1\n## B\np2");
    auto chunks = split_document(d, {});
    ASSERT_EQ(chunks.size(), 2u);
    EXPECT_EQ(chunks[0].heading_path, (Path{"T", "A"}));
    EXPECT_EQ(chunks[1].heading_path, (Path{"T", "B"}));
    // Heading lines belong to the chunk they open.
    EXPECT_EQ(chunks[0].content, "# T\n## A\np1");
    EXPECT_EQ(chunks[1].content, "## B\np2");
    EXPECT_TRUE(split_violations(d, chunks, {}).empty());
}

TEST(Split, OversizeCodeBlockIsOneChunk) {
    std::string code = "```\n";
    while (code.size() < 5000) code += "x = compute(x)  # keep going\n";
    code += "```";
    auto d = doc_of("## Only\n" + code + "\n");
    SplitterConfig cfg;
    cfg.max_chunk_chars = 1500;
    auto chunks = split_document(d, cfg);
    ASSERT_EQ(chunks.size(), 1u);
    EXPECT_GE(chunks[0].content.size(), 5000u);
    EXPECT_TRUE(split_violations(d, chunks, cfg).empty());
}

TEST(Split, NoHeadingsShortDoc) {
    auto d = doc_of("Just a paragraph.\n\nAnd another one.\n");
    auto chunks = split_document(d, {});
    ASSERT_EQ(chunks.size(), 1u);
    EXPECT_TRUE(chunks[0].heading_path.empty());
}

TEST(Split, EmptyDocumentRejected) {
    EXPECT_THROW(split_document(doc_of(""), {}), EmptyDocumentError);
    EXPECT_THROW(split_document(doc_of(" \n\n\t"), {}), EmptyDocumentError);
}

TEST(Split, LongSectionPackedByParagraphs) {
    std::string body;
    for (int i = 0; i < 30; ++i) {
        body += "Paragraph " + std::to_string(i) + " " + std::string(90, 'w') + ".\n\n";
    }
    auto d = doc_of("## Big\n" + body);
    SplitterConfig cfg;
    cfg.max_chunk_chars = 400;
    auto chunks = split_document(d, cfg);
    EXPECT_GT(chunks.size(), 1u);
    for (const auto& c : chunks) {
        EXPECT_LE(c.content.size(), 400u);
        EXPECT_EQ(c.heading_path, (Path{"Big"}));
        // Cuts land on paragraph boundaries: every chunk starts a paragraph.
        EXPECT_TRUE(c.content.starts_with("Paragraph") || c.content.starts_with("## Big"));
    }
    EXPECT_TRUE(split_violations(d, chunks, cfg).empty());
}

TEST(Split, H4DoesNotSplitButH3Does) {
    auto d = doc_of("# R\n## S\n### T\ntext\n#### U\nmore\n");
    auto chunks = split_document(d, {});
    ASSERT_EQ(chunks.size(), 1u);  // "## S" holds only a heading, so it glues forward
    EXPECT_EQ(chunks[0].heading_path, (Path{"R", "S", "T"}));

    auto d2 = doc_of("# R\n## S\nintro\n### T\ntext\n#### U\nmore\n");
    auto c2 = split_document(d2, {});
    ASSERT_EQ(c2.size(), 2u);
    EXPECT_EQ(c2[0].heading_path, (Path{"R", "S"}));
    EXPECT_EQ(c2[1].heading_path, (Path{"R", "S", "T"}));
}

TEST(Split, HashInsideCodeIsNotAHeading) {
    auto d = doc_of("## A\n```\n## not a heading\n```\ntext\n");
    auto chunks = split_document(d, {});
    ASSERT_EQ(chunks.size(), 1u);
}

TEST(Split, ConfigValidation) {
    SplitterConfig small;
    small.max_chunk_chars = 99;
    EXPECT_THROW(split_document(doc_of("x"), small), PreconditionError);
    SplitterConfig levels;
    levels.split_heading_levels = {0};
    EXPECT_THROW(levels.validate(), PreconditionError);
    levels.split_heading_levels = {7};
    EXPECT_THROW(levels.validate(), PreconditionError);
}

TEST(Split, IdsAreDeterministic) {
    auto d = doc_of("# T\n## A\np1\n## B\np2");
    auto a = split_document(d, {});
    auto b = split_document(d, {});
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_NE(a[0].id, a[1].id);
}

TEST(FrontMatter, MetadataAndPartition) {
    std::string raw = "---\ndoc_type: official\nversion: 2\npartition: tenant-b\n---\n# Title\nBody.\n";
    auto doc = make_document("x.md", "x.md", raw, "default");
    EXPECT_EQ(doc.partition_key, "tenant-b");
    EXPECT_EQ(doc.metadata.at("doc_type"), "official");
    EXPECT_EQ(doc.metadata.at("version"), "2");
    EXPECT_EQ(doc.metadata.count("partition"), 0u);
    EXPECT_EQ(doc.content, "# Title\nBody.\n");
    auto chunks = split_document(doc, {});
    ASSERT_EQ(chunks.size(), 1u);
    EXPECT_EQ(chunks[0].metadata.at("doc_type"), "official");
    EXPECT_EQ(chunks[0].partition_key, "tenant-b");
    EXPECT_EQ(chunks[0].content.find("doc_type"), std::string::npos);
}

TEST(FrontMatter, AbsentBlockLeavesText) {
    auto fm = parse_front_matter("# No front matter\n---\nnot: metadata\n");
    EXPECT_TRUE(fm.fields.empty());
    EXPECT_EQ(fm.body, "# No front matter\n---\nnot: metadata\n");
    auto doc = make_document("y.md", "y.md", "plain", "default");
    EXPECT_EQ(doc.partition_key, "default");
}

TEST(SplitProperties, GeneratedDocuments) {
    std::mt19937 rng(20240611);
    for (int i = 0; i < 300; ++i) {
        SplitterConfig cfg;
        cfg.max_chunk_chars = 100 + rng() % 1500;
        if (i % 5 == 0) cfg.split_heading_levels = {1, 2, 3, 4};
        auto d = doc_of(random_markdown(rng), "tenant-" + std::to_string(i % 4));
        d.metadata = {{"doc_type", i % 2 ? "official" : "community"}};
        auto chunks = split_document(d, cfg);
        auto bad = split_violations(d, chunks, cfg);
        ASSERT_TRUE(bad.empty()) << "doc " << i << ": " << bad.front() << "\n---\n" << d.content;
    }
}
