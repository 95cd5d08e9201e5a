#include "ragline/splitter.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>

namespace ragline {

void SplitterConfig::validate() const {
    if (max_chunk_chars < 100) {
        throw PreconditionError("max_chunk_chars must be at least 100");
    }
    for (int level : split_heading_levels) {
        if (level < 1 || level > 6) {
            throw PreconditionError("split heading levels must lie in 1..6");
        }
    }
}

namespace {

struct Line {
    std::size_t start;
    std::size_t end;  // excludes '\n'
};

std::vector<Line> scan_lines(std::string_view text) {
    std::vector<Line> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::size_t end = nl == std::string_view::npos ? text.size() : nl;
        lines.push_back({pos, end});
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
    }
    return lines;
}

bool is_fence(std::string_view line) { return line.starts_with("```"); }

bool is_blank(std::string_view line) { return trim(line).empty(); }

// ATX heading level of a line, 0 when the line is not a heading.
int heading_level(std::string_view line) {
    int level = 0;
    while (level < static_cast<int>(line.size()) && line[level] == '#') ++level;
    if (level == 0 || level > 6) return 0;
    if (level < static_cast<int>(line.size()) && line[level] != ' ' && line[level] != '\t' &&
        line[level] != '\r') {
        return 0;
    }
    return level;
}

std::string heading_text(std::string_view line, int level) {
    std::string_view rest = trim(line.substr(level));
    // Optional closing sequence: "## Title ##".
    std::size_t e = rest.size();
    while (e > 0 && rest[e - 1] == '#') --e;
    if (e == 0) return {};
    if (e < rest.size() && (rest[e - 1] == ' ' || rest[e - 1] == '\t')) rest = trim(rest.substr(0, e));
    return std::string(rest);
}

bool strictly_inside(const std::vector<CodeSpan>& spans, std::size_t pos) {
    auto it = std::upper_bound(spans.begin(), spans.end(), pos,
                               [](std::size_t p, const CodeSpan& s) { return p < s.start; });
    if (it == spans.begin()) return false;
    --it;
    return it->start < pos && pos < it->end;
}

bool is_utf8_boundary(std::string_view text, std::size_t pos) {
    return pos >= text.size() || (static_cast<unsigned char>(text[pos]) & 0xC0) != 0x80;
}

enum class Level { Paragraph = 0, Line = 1, Word = 2, CodePoint = 3 };

class Splitter {
public:
    Splitter(std::string_view text, const SplitterConfig& cfg)
        : text_(text), cfg_(cfg), lines_(scan_lines(text)), code_(detect_code_blocks(text)) {
        heading_levels_.resize(lines_.size(), 0);
        paths_.resize(lines_.size());

        int tracked = std::max(3, cfg.split_heading_levels.empty()
                                      ? 3
                                      : *cfg.split_heading_levels.rbegin());
        std::array<std::optional<std::string>, 7> stack;
        for (std::size_t i = 0; i < lines_.size(); ++i) {
            std::string_view line = line_text(i);
            int level = in_code(lines_[i].start) ? 0 : heading_level(line);
            heading_levels_[i] = level;
            if (level > 0 && level <= tracked) {
                stack[level] = heading_text(line, level);
                for (int deeper = level + 1; deeper < 7; ++deeper) stack[deeper].reset();
            }
            for (int l = 1; l <= tracked; ++l) {
                if (stack[l]) paths_[i].push_back(*stack[l]);
            }
        }
    }

    std::vector<CharSpan> run() {
        std::vector<CharSpan> pieces;
        for (const CharSpan& section : merged_sections()) {
            if (trimmed_length(section) <= cfg_.max_chunk_chars) {
                pieces.push_back(section);
            } else {
                pack(section, Level::Paragraph, pieces);
            }
        }
        absorb_blank_pieces(pieces);
        return pieces;
    }

    std::vector<std::string> heading_path(CharSpan span) const {
        std::size_t first = line_containing(span.start);
        std::size_t last = first;
        for (std::size_t i = first; i < lines_.size() && lines_[i].start < span.end; ++i) {
            last = i;
            if (heading_levels_[i] == 0 && !is_blank(line_text(i))) return paths_[i];
        }
        return paths_.empty() ? std::vector<std::string>{} : paths_[last];
    }

private:
    std::string_view line_text(std::size_t i) const {
        return text_.substr(lines_[i].start, lines_[i].end - lines_[i].start);
    }

    bool in_code(std::size_t pos) const {
        auto it = std::upper_bound(code_.begin(), code_.end(), pos,
                                   [](std::size_t p, const CodeSpan& s) { return p < s.start; });
        if (it == code_.begin()) return false;
        --it;
        return it->start <= pos && pos < it->end;
    }

    std::size_t line_containing(std::size_t pos) const {
        auto it = std::upper_bound(lines_.begin(), lines_.end(), pos,
                                   [](std::size_t p, const Line& l) { return p < l.start; });
        return it == lines_.begin() ? 0 : static_cast<std::size_t>(it - lines_.begin()) - 1;
    }

    std::size_t trimmed_length(CharSpan span) const {
        return trim(text_.substr(span.start, span.length())).size();
    }

    // True when every line starting inside the span is blank or a heading.
    bool heading_only(CharSpan span) const {
        for (std::size_t i = line_containing(span.start);
             i < lines_.size() && lines_[i].start < span.end; ++i) {
            if (heading_levels_[i] == 0 && !is_blank(line_text(i))) return false;
        }
        return true;
    }

    bool contains_oversize_code(CharSpan span) const {
        return std::any_of(code_.begin(), code_.end(), [&](const CodeSpan& c) {
            return span.contains(c) && c.length() > cfg_.max_chunk_chars;
        });
    }

    std::vector<CharSpan> merged_sections() const {
        std::vector<std::size_t> bounds{0};
        for (std::size_t i = 0; i < lines_.size(); ++i) {
            if (lines_[i].start > 0 && cfg_.split_heading_levels.contains(heading_levels_[i])) {
                bounds.push_back(lines_[i].start);
            }
        }
        bounds.push_back(text_.size());

        std::vector<CharSpan> sections;
        std::size_t carry = 0;
        for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
            CharSpan section{carry, bounds[b + 1]};
            bool last = b + 2 == bounds.size();
            if (!last && heading_only(section)) continue;  // glue to the next section
            sections.push_back(section);
            carry = bounds[b + 1];
        }
        return sections;
    }

    std::vector<std::size_t> cut_points(CharSpan span, Level level) const {
        std::vector<std::size_t> cuts;
        auto accept = [&](std::size_t p) {
            if (p > span.start && p < span.end && !strictly_inside(code_, p)) cuts.push_back(p);
        };
        switch (level) {
            case Level::Paragraph:
                for (std::size_t i = line_containing(span.start) + 1;
                     i < lines_.size() && lines_[i].start < span.end; ++i) {
                    if (!is_blank(line_text(i)) && is_blank(line_text(i - 1))) {
                        accept(lines_[i].start);
                    }
                }
                break;
            case Level::Line:
                for (std::size_t i = line_containing(span.start) + 1;
                     i < lines_.size() && lines_[i].start < span.end; ++i) {
                    accept(lines_[i].start);
                }
                break;
            case Level::Word:
                for (std::size_t p = span.start + 1; p < span.end; ++p) {
                    bool prev_space = std::isspace(static_cast<unsigned char>(text_[p - 1])) != 0;
                    bool cur_space = std::isspace(static_cast<unsigned char>(text_[p])) != 0;
                    if (prev_space && !cur_space) accept(p);
                }
                break;
            case Level::CodePoint:
                for (std::size_t p = span.start + 1; p < span.end; ++p) {
                    if (is_utf8_boundary(text_, p)) accept(p);
                }
                break;
        }
        return cuts;
    }

    std::vector<CharSpan> units(CharSpan span, Level level) const {
        std::vector<CharSpan> out;
        std::size_t begin = span.start;
        for (std::size_t cut : cut_points(span, level)) {
            out.push_back({begin, cut});
            begin = cut;
        }
        out.push_back({begin, span.end});

        if (level == Level::Paragraph || level == Level::Line) {
            // A heading never closes a piece on its own: glue it forward.
            std::vector<CharSpan> glued;
            std::optional<std::size_t> carry;
            for (std::size_t i = 0; i < out.size(); ++i) {
                CharSpan u = out[i];
                if (carry) u.start = *carry;
                if (i + 1 < out.size() && heading_only(out[i])) {
                    carry = u.start;
                    continue;
                }
                carry.reset();
                glued.push_back(u);
            }
            out = std::move(glued);
        }
        return out;
    }

    void pack(CharSpan span, Level level, std::vector<CharSpan>& pieces) const {
        std::optional<CharSpan> buffer;
        for (const CharSpan& unit : units(span, level)) {
            if (buffer) {
                CharSpan widened{buffer->start, unit.end};
                if (trimmed_length(widened) <= cfg_.max_chunk_chars) {
                    buffer = widened;
                    continue;
                }
                pieces.push_back(*buffer);
                buffer.reset();
            }
            if (trimmed_length(unit) <= cfg_.max_chunk_chars) {
                buffer = unit;
            } else if (level == Level::CodePoint ||
                       (level != Level::Paragraph && contains_oversize_code(unit))) {
                pieces.push_back(unit);  // atomic code block, allowed to exceed the limit
            } else {
                pack(unit, static_cast<Level>(static_cast<int>(level) + 1), pieces);
            }
        }
        if (buffer) pieces.push_back(*buffer);
    }

    // Whitespace-only pieces carry no content; fold them into a neighbour so
    // the spans still tile the document.
    void absorb_blank_pieces(std::vector<CharSpan>& pieces) const {
        std::vector<CharSpan> out;
        std::optional<std::size_t> pending_start;
        for (CharSpan p : pieces) {
            if (trimmed_length(p) == 0) {
                if (!out.empty()) {
                    out.back().end = p.end;
                } else if (!pending_start) {
                    pending_start = p.start;
                }
                continue;
            }
            if (pending_start) {
                p.start = *pending_start;
                pending_start.reset();
            }
            out.push_back(p);
        }
        pieces = std::move(out);
    }

    std::string_view text_;
    const SplitterConfig& cfg_;
    std::vector<Line> lines_;
    std::vector<CodeSpan> code_;
    std::vector<int> heading_levels_;
    std::vector<std::vector<std::string>> paths_;
};

}  // namespace

std::vector<CodeSpan> detect_code_blocks(std::string_view markdown) {
    std::vector<CodeSpan> spans;
    constexpr std::size_t kNone = std::string_view::npos;
    std::size_t open = kNone;
    for (const Line& line : scan_lines(markdown)) {
        if (!is_fence(markdown.substr(line.start, line.end - line.start))) continue;
        if (open == kNone) {
            open = line.start;
        } else {
            spans.push_back({open, line.end});
            open = kNone;
        }
    }
    if (open != kNone) spans.push_back({open, markdown.size()});
    return spans;
}

std::string make_chunk_id(std::string_view doc_id, CharSpan span) {
    std::string key(doc_id);
    key += ':';
    key += std::to_string(span.start);
    key += '-';
    key += std::to_string(span.end);
    return to_hex(fnv1a64(key));
}

std::vector<Chunk> split_document(const Document& doc, const SplitterConfig& cfg) {
    cfg.validate();
    if (doc.partition_key.empty()) {
        throw PreconditionError("document '" + doc.id + "' has no partition key");
    }
    if (trim(doc.content).empty()) throw EmptyDocumentError(doc.id);

    Splitter splitter(doc.content, cfg);
    std::vector<Chunk> chunks;
    for (const CharSpan& span : splitter.run()) {
        Chunk chunk;
        chunk.id = make_chunk_id(doc.id, span);
        chunk.doc_id = doc.id;
        chunk.content = std::string(trim(std::string_view(doc.content).substr(span.start, span.length())));
        chunk.heading_path = splitter.heading_path(span);
        chunk.partition_key = doc.partition_key;
        chunk.metadata = doc.metadata;
        chunk.char_span = span;
        chunks.push_back(std::move(chunk));
    }
    return chunks;
}

FrontMatter parse_front_matter(std::string_view text) {
    FrontMatter fm;
    auto lines = scan_lines(text);
    auto line_at = [&](std::size_t i) {
        return text.substr(lines[i].start, lines[i].end - lines[i].start);
    };
    if (lines.empty() || trim(line_at(0)) != "---") {
        fm.body = std::string(text);
        return fm;
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
        std::string_view line = trim(line_at(i));
        if (line == "---" || line == "...") {
            std::size_t body_start = i + 1 < lines.size() ? lines[i + 1].start : text.size();
            fm.body = std::string(text.substr(body_start));
            return fm;
        }
        if (line.empty() || line.starts_with('#')) continue;
        std::size_t colon = line.find(':');
        if (colon == std::string_view::npos) continue;
        std::string key(trim(line.substr(0, colon)));
        std::string_view value = trim(line.substr(colon + 1));
        if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
            value.back() == value.front()) {
            value = value.substr(1, value.size() - 2);
        }
        if (!key.empty()) fm.fields[key] = std::string(value);
    }
    // No closing delimiter: not front matter after all.
    fm.fields.clear();
    fm.body = std::string(text);
    return fm;
}

Document make_document(std::string id, std::string source_path, std::string_view raw_text,
                       const std::string& default_partition) {
    FrontMatter fm = parse_front_matter(raw_text);
    Document doc;
    doc.id = std::move(id);
    doc.source_path = std::move(source_path);
    doc.content = std::move(fm.body);
    doc.partition_key = default_partition;
    if (auto it = fm.fields.find("partition"); it != fm.fields.end()) {
        if (!it->second.empty()) doc.partition_key = it->second;
        fm.fields.erase(it);
    }
    doc.metadata = std::move(fm.fields);
    return doc;
}

}  // namespace ragline
