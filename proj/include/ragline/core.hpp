#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ragline {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    DimensionError(std::size_t expected, std::size_t actual);
    std::size_t expected() const noexcept { return expected_; }
    std::size_t actual() const noexcept { return actual_; }

private:
    std::size_t expected_;
    std::size_t actual_;
};

class DegenerateVectorError : public Error {
public:
    DegenerateVectorError() : Error("zero vector has no direction") {}
};

/// Violated call contract (empty input where one is required, k = 0, ...).
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

using Metadata = std::map<std::string, std::string>;

struct Document {
    std::string id;
    std::string source_path;
    std::string content;
    Metadata metadata;
    std::string partition_key;
};

struct CharSpan {
    std::size_t start = 0;
    std::size_t end = 0;  // exclusive

    std::size_t length() const noexcept { return end - start; }
    bool contains(const CharSpan& other) const noexcept {
        return start <= other.start && other.end <= end;
    }
    bool overlaps(const CharSpan& other) const noexcept {
        return start < other.end && other.start < end;
    }
    friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

struct Chunk {
    std::string id;
    std::string doc_id;
    std::string content;
    std::vector<std::string> heading_path;
    std::string partition_key;
    Metadata metadata;
    CharSpan char_span;
};

using ChunkPtr = std::shared_ptr<const Chunk>;

enum class Stage { Dense, Sparse, Fused, Boosted, Reranked };

std::string_view to_string(Stage stage);

struct ScoredChunk {
    ChunkPtr chunk;
    double score = 0.0;
    Stage stage = Stage::Dense;

    const std::string& id() const { return chunk->id; }
};

/// Fixed-length, finite-valued embedding. Construction validates both.
class EmbeddingVector {
public:
    EmbeddingVector() = default;
    explicit EmbeddingVector(std::vector<double> values);

    std::size_t dim() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    bool is_zero() const noexcept;
    double norm() const noexcept;

    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

private:
    std::vector<double> values_;
};

enum class RouteDecision { Simple, Complex, External };
enum class CragVerdict { Correct, Incorrect, Ambiguous };

std::string_view to_string(RouteDecision route);
std::string_view to_string(CragVerdict verdict);

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// dot(a,b) / (|a| |b|), clamped to [-1, 1].
/// Throws DimensionError on length mismatch and DegenerateVectorError when
/// either side is all-zero.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Splits on non-alphanumeric code points and lowercases. Code points above
/// U+007F count as word characters unless they fall in a known punctuation
/// or space block. Case folding covers Latin-1, Latin Extended-A, Greek and
/// Cyrillic; other scripts pass through unchanged.
std::vector<std::string> tokenize(std::string_view text);

/// Lowercase, trim, collapse whitespace runs, drop trailing . ! ?
std::string normalize_answer(std::string_view text);

/// Lowercases the UTF-8 text with the same folding rules as tokenize.
std::string to_lower(std::string_view text);

std::string_view trim(std::string_view text);

/// English function words ignored when deciding content overlap.
bool is_stopword(std::string_view token);

/// tokenize() minus stopwords.
std::vector<std::string> content_tokens(std::string_view text);

/// Multiset (clipped-count) overlap F1 between two token lists.
/// Both empty gives 1.0, exactly one empty gives 0.0.
double overlap_f1(std::span<const std::string> predicted,
                  std::span<const std::string> reference);

/// 64-bit FNV-1a; stable across platforms and runs.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

std::string to_hex(std::uint64_t value);

}  // namespace ragline
