#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ragline/core.hpp"

namespace ragline {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct RrfConfig {
    int k = 60;
};

/// Multiplies a candidate's score by `factor` when
/// `metadata[metadata_key] == metadata_value`.
struct BoostRule {
    std::string metadata_key;
    std::string metadata_value;
    double factor = 1.2;
};

class SnapshotError : public Error {
public:
    using Error::Error;
};

/// In-memory hybrid index: brute-force cosine plus BM25, both scoped to a
/// single partition. Readers share a lock; upserts and deletes are exclusive,
/// so a search never sees a half-applied write.
class HybridIndex {
public:
    explicit HybridIndex(Bm25Params bm25 = {});

    /// Inserts or replaces chunks by id. The first vector ever inserted fixes
    /// the index dimension. Zero vectors are rejected.
    std::size_t upsert_chunks(std::vector<std::pair<Chunk, EmbeddingVector>> items);

    std::vector<ScoredChunk> dense_search(const EmbeddingVector& query, std::string_view partition,
                                          std::size_t top_k) const;

    std::vector<ScoredChunk> sparse_search(std::string_view query_text,
                                           std::string_view partition, std::size_t top_k) const;

    std::size_t delete_partition(std::string_view partition);

    /// Removes every chunk whose doc_id matches, across partitions.
    std::size_t delete_document(std::string_view doc_id);

    ChunkPtr get(std::string_view chunk_id) const;
    std::optional<EmbeddingVector> vector_of(std::string_view chunk_id) const;

    std::size_t size() const;
    std::optional<std::size_t> dim() const;
    std::vector<std::string> partitions() const;
    std::size_t partition_size(std::string_view partition) const;
    const Bm25Params& bm25() const noexcept { return bm25_; }

    /// Number of dense and sparse searches served so far.
    std::uint64_t search_count() const noexcept { return searches_.load(); }

    /// Writes dim, BM25 parameters, chunks and vectors as JSON. Output is
    /// byte-identical for identical index contents.
    void save(const std::filesystem::path& path) const;
    std::string to_json_text() const;

    static HybridIndex load(const std::filesystem::path& path);
    static HybridIndex from_json_text(std::string_view text);

    HybridIndex(HybridIndex&& other) noexcept;
    HybridIndex& operator=(HybridIndex&& other) noexcept;

private:
    struct Entry {
        ChunkPtr chunk;
        EmbeddingVector vector;
        std::size_t length = 0;
        std::map<std::string, std::uint32_t> term_freqs;
    };

    // Everything BM25 needs is kept per partition: statistics of one tenant
    // never depend on another tenant's data.
    struct Partition {
        std::map<std::string, Entry, std::less<>> entries;
        std::unordered_map<std::string, std::map<std::string, std::uint32_t>> postings;
        std::uint64_t total_length = 0;
    };

    void erase_locked(const std::string& id);

    Bm25Params bm25_;
    std::optional<std::size_t> dim_;
    std::map<std::string, Partition, std::less<>> partitions_;
    std::map<std::string, std::string, std::less<>> partition_of_;  // chunk id -> partition
    mutable std::shared_mutex mutex_;
    mutable std::atomic<std::uint64_t> searches_{0};
};

/// Reciprocal rank fusion: score(d) = sum over lists containing d of
/// 1 / (k + rank), ranks 1-based. Sorted by score descending, then id.
/// Throws PreconditionError when a list repeats an id or k < 1.
std::vector<std::pair<std::string, double>> rrf_fuse(
    const std::vector<std::vector<std::string>>& rankings, const RrfConfig& cfg);

/// Rescales each score by the product of all matching rule factors and
/// re-sorts (score descending, then id). Output stage is Boosted.
std::vector<ScoredChunk> apply_boost(std::vector<ScoredChunk> candidates,
                                     const std::vector<BoostRule>& rules);

/// Number of candidates each retriever contributes before fusion.
inline constexpr std::size_t kFusionFanout = 4;

/// dense + sparse at kFusionFanout * top_k each, RRF, boost, truncate.
std::vector<ScoredChunk> hybrid_search(const HybridIndex& index, std::string_view query_text,
                                       const EmbeddingVector& query_vec,
                                       std::string_view partition, std::size_t top_k,
                                       const RrfConfig& rrf,
                                       const std::vector<BoostRule>& boost_rules);

/// Score descending, chunk id ascending.
void sort_ranked(std::vector<ScoredChunk>& items);

}  // namespace ragline
