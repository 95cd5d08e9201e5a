#include "ragline/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>
#include <unordered_set>

namespace ragline {

DimensionError::DimensionError(std::size_t expected, std::size_t actual)
    : Error("dimension mismatch: expected " + std::to_string(expected) + ", got " +
            std::to_string(actual)),
      expected_(expected),
      actual_(actual) {}

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::Dense: return "dense";
        case Stage::Sparse: return "sparse";
        case Stage::Fused: return "fused";
        case Stage::Boosted: return "boosted";
        case Stage::Reranked: return "reranked";
    }
    return "unknown";
}

std::string_view to_string(RouteDecision route) {
    switch (route) {
        case RouteDecision::Simple: return "simple";
        case RouteDecision::Complex: return "complex";
        case RouteDecision::External: return "external";
    }
    return "unknown";
}

std::string_view to_string(CragVerdict verdict) {
    switch (verdict) {
        case CragVerdict::Correct: return "correct";
        case CragVerdict::Incorrect: return "incorrect";
        case CragVerdict::Ambiguous: return "ambiguous";
    }
    return "unknown";
}

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) {
        throw PreconditionError("embedding must have a positive dimension");
    }
    for (double v : values_) {
        if (!std::isfinite(v)) {
            throw PreconditionError("embedding contains a non-finite value");
        }
    }
}

bool EmbeddingVector::is_zero() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
}

double EmbeddingVector::norm() const noexcept {
    double sum = 0.0;
    for (double v : values_) sum += v * v;
    return std::sqrt(sum);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) throw DimensionError(a.dim(), b.dim());
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        dot += av[i] * bv[i];
        na += av[i] * av[i];
        nb += bv[i] * bv[i];
    }
    if (na == 0.0 || nb == 0.0) throw DegenerateVectorError();
    double cos = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(cos, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// UTF-8 helpers
// ---------------------------------------------------------------------------

namespace {

constexpr char32_t kInvalid = 0xFFFFFFFF;

// Decodes one code point at text[pos]; advances pos. Malformed sequences
// consume one byte and yield kInvalid.
char32_t decode_utf8(std::string_view text, std::size_t& pos) {
    auto byte = [&](std::size_t i) { return static_cast<unsigned char>(text[i]); };
    unsigned char lead = byte(pos);
    if (lead < 0x80) {
        ++pos;
        return lead;
    }
    int extra = 0;
    char32_t cp = 0;
    if ((lead & 0xE0) == 0xC0) {
        extra = 1;
        cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
        extra = 2;
        cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
        extra = 3;
        cp = lead & 0x07;
    } else {
        ++pos;
        return kInvalid;
    }
    for (int i = 1; i <= extra; ++i) {
        if (pos + i >= text.size() || (byte(pos + i) & 0xC0) != 0x80) {
            ++pos;
            return kInvalid;
        }
        cp = (cp << 6) | (byte(pos + i) & 0x3F);
    }
    pos += extra + 1;
    return cp;
}

void encode_utf8(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

char32_t fold_case(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    if (cp < 0xC0) return cp;
    if (cp <= 0xDE) return cp == 0xD7 ? cp : cp + 32;
    if (cp >= 0x0100 && cp <= 0x017F) {
        if (cp == 0x0178) return 0x00FF;
        bool even_upper = (cp <= 0x012F) || (cp >= 0x0132 && cp <= 0x0137) ||
                          (cp >= 0x014A && cp <= 0x0177);
        bool odd_upper = (cp >= 0x0139 && cp <= 0x0148) || (cp >= 0x0179 && cp <= 0x017E);
        if (even_upper && cp % 2 == 0) return cp + 1;
        if (odd_upper && cp % 2 == 1) return cp + 1;
        return cp;
    }
    if (cp >= 0x0391 && cp <= 0x03A9 && cp != 0x03A2) return cp + 32;
    if (cp >= 0x0410 && cp <= 0x042F) return cp + 32;
    if (cp >= 0x0400 && cp <= 0x040F) return cp + 80;
    return cp;
}

bool is_word_char(char32_t cp) {
    if (cp == kInvalid) return false;
    if (cp < 0x80) {
        return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    }
    if (cp <= 0xBF) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
    if (cp == 0xD7 || cp == 0xF7) return false;
    if (cp >= 0x2000 && cp <= 0x206F) return false;  // general punctuation, spaces
    if (cp >= 0x20A0 && cp <= 0x20CF) return false;  // currency
    if (cp >= 0x2190 && cp <= 0x2BFF) return false;  // arrows, math, box drawing
    if (cp >= 0x3000 && cp <= 0x303F) return false;  // CJK punctuation
    if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
    if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
    if (cp >= 0xFF1A && cp <= 0xFF20) return false;
    if (cp >= 0xFF3B && cp <= 0xFF40) return false;
    if (cp >= 0xFF5B && cp <= 0xFF65) return false;
    if (cp == 0xFEFF) return false;
    if (cp >= 0x1F000 && cp <= 0x1FAFF) return false;  // emoji and pictographs
    return true;
}

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::string to_lower(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t start = pos;
        char32_t cp = decode_utf8(text, pos);
        if (cp == kInvalid) {
            out.append(text.substr(start, pos - start));
        } else {
            encode_utf8(fold_case(cp), out);
        }
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    std::size_t pos = 0;
    while (pos < text.size()) {
        char32_t cp = decode_utf8(text, pos);
        if (is_word_char(cp)) {
            encode_utf8(fold_case(cp), current);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::string_view trim(std::string_view text) {
    std::size_t b = 0;
    std::size_t e = text.size();
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    return text.substr(b, e - b);
}

std::string normalize_answer(std::string_view text) {
    std::string lowered = to_lower(text);
    std::string collapsed;
    collapsed.reserve(lowered.size());
    bool in_space = false;
    for (char c : lowered) {
        if (is_space(c)) {
            in_space = true;
            continue;
        }
        if (in_space && !collapsed.empty()) collapsed.push_back(' ');
        in_space = false;
        collapsed.push_back(c);
    }
    // Stripping punctuation can expose a trailing space ("a ." -> "a "), so
    // repeat until stable to keep the function idempotent.
    for (;;) {
        std::size_t before = collapsed.size();
        while (!collapsed.empty() &&
               (collapsed.back() == '.' || collapsed.back() == '!' || collapsed.back() == '?')) {
            collapsed.pop_back();
        }
        while (!collapsed.empty() && collapsed.back() == ' ') collapsed.pop_back();
        if (collapsed.size() == before) break;
    }
    return collapsed;
}

bool is_stopword(std::string_view token) {
    static const std::unordered_set<std::string_view> kStopwords = {
        "a",      "about",  "an",     "and",   "any",    "are",    "as",    "at",
        "be",     "been",   "but",    "by",    "can",    "could",  "do",    "does",
        "did",    "for",    "from",   "had",   "has",    "have",   "hello", "hey",
        "hi",     "how",    "i",      "if",    "in",     "into",   "is",    "it",
        "its",    "just",   "know",   "me",    "my",     "of",     "on",    "or",
        "our",    "please", "should", "so",    "some",   "tell",   "than",  "thanks",
        "that",   "the",    "their",  "them",  "then",   "there",  "these", "they",
        "this",   "those",  "to",     "us",    "was",    "we",     "were",  "what",
        "when",   "where",  "which",  "who",   "whom",   "why",    "will",  "with",
        "would",  "you",    "your",   "want"};
    return kStopwords.contains(token);
}

std::vector<std::string> content_tokens(std::string_view text) {
    std::vector<std::string> tokens = tokenize(text);
    std::erase_if(tokens, [](const std::string& t) { return is_stopword(t); });
    return tokens;
}

double overlap_f1(std::span<const std::string> predicted,
                  std::span<const std::string> reference) {
    if (predicted.empty() && reference.empty()) return 1.0;
    if (predicted.empty() || reference.empty()) return 0.0;
    std::unordered_map<std::string_view, std::size_t> counts;
    for (const auto& t : reference) ++counts[t];
    std::size_t common = 0;
    for (const auto& t : predicted) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) return 0.0;
    double precision = static_cast<double>(common) / static_cast<double>(predicted.size());
    double recall = static_cast<double>(common) / static_cast<double>(reference.size());
    return 2.0 * precision * recall / (precision + recall);
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (char c : bytes) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string to_hex(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

}  // namespace ragline
