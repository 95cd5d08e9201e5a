#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ragline/core.hpp"

namespace ragline {

class EmptyDocumentError : public Error {
public:
    explicit EmptyDocumentError(const std::string& doc_id)
        : Error("document '" + doc_id + "' has no content") {}
};

struct SplitterConfig {
    std::size_t max_chunk_chars = 1500;
    std::set<int> split_heading_levels = {2, 3};

    /// Throws PreconditionError when max_chunk_chars < 100 or a level is
    /// outside 1..6.
    void validate() const;
};

using CodeSpan = CharSpan;

/// Fenced regions opened and closed by lines starting with ```. Each span
/// runs from the opening fence to the end of the closing fence line
/// (newline excluded); an unclosed fence runs to end of input.
std::vector<CodeSpan> detect_code_blocks(std::string_view markdown);

/// Structure-aware split of a Markdown document.
///
/// Sections start at headings whose level is in `split_heading_levels`.
/// A section holding nothing but headings is merged into the next one. A
/// section longer than `max_chunk_chars` is packed greedily from paragraphs,
/// then lines, then words; a fenced code block is never cut, so a block
/// longer than the limit yields one oversize chunk.
///
/// Chunk spans are contiguous and cover the whole document; `content` is
/// the span text with boundary whitespace trimmed. `heading_path` is the
/// H1..H3 stack in effect at the chunk's first non-heading line.
std::vector<Chunk> split_document(const Document& doc, const SplitterConfig& cfg);

/// Deterministic chunk id derived from the document id and the span.
std::string make_chunk_id(std::string_view doc_id, CharSpan span);

struct FrontMatter {
    Metadata fields;
    std::string body;
};

/// Parses an optional leading `---` ... `---` block of `key: value` lines.
/// Without a block the body is the input unchanged.
FrontMatter parse_front_matter(std::string_view text);

/// Builds a Document from raw file text. A "partition" front-matter field
/// overrides `default_partition`; every other field becomes metadata.
Document make_document(std::string id, std::string source_path, std::string_view raw_text,
                       const std::string& default_partition);

}  // namespace ragline
