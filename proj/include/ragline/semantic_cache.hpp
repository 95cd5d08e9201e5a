#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "ragline/core.hpp"

namespace ragline {

struct CacheConfig {
    double default_threshold = 0.95;
    double fuzzy_threshold = 0.98;
    std::int64_t default_ttl_seconds = 604800;  // 168 hours
    std::size_t max_entries = 10000;
    std::vector<std::string> fuzzy_markers = {"maybe", "possibly", "perhaps", "might",
                                              "not sure"};

    void validate() const;
};

struct CacheEntry {
    std::string query_text;
    EmbeddingVector query_vec;
    std::string answer;
    std::vector<std::string> sources;
    std::int64_t created_at = 0;  // seconds
    std::int64_t ttl_seconds = 604800;
    std::string partition_key;
};

struct CacheHit {
    std::string answer;
    std::vector<std::string> sources;
    double similarity = 0.0;
};

/// True when a marker occurs as a whole token (or, for multi-word markers,
/// as a contiguous token run) in the query.
bool is_fuzzy(std::string_view query_text, const CacheConfig& cfg);

/// Vector-similarity answer cache with a tighter threshold for hedged
/// queries and per-entry TTL. Lookups only match entries of the same
/// partition.
class SemanticCache {
public:
    explicit SemanticCache(CacheConfig cfg = {});

    std::optional<CacheHit> lookup(std::string_view query_text, const EmbeddingVector& query_vec,
                                   std::string_view partition, std::int64_t now) const;

    /// Oldest entry (by created_at) is evicted once max_entries is exceeded.
    void insert(CacheEntry entry);

    std::size_t purge_expired(std::int64_t now);

    std::size_t size() const;
    const CacheConfig& config() const noexcept { return cfg_; }

    std::uint64_t lookup_count() const noexcept { return lookups_.load(); }
    std::uint64_t insert_count() const noexcept { return inserts_.load(); }

private:
    struct Stored {
        CacheEntry entry;
        double norm;
        std::uint64_t sequence;
    };

    CacheConfig cfg_;
    std::vector<Stored> entries_;
    std::optional<std::size_t> dim_;
    std::uint64_t next_sequence_ = 0;
    mutable std::shared_mutex mutex_;
    mutable std::atomic<std::uint64_t> lookups_{0};
    std::atomic<std::uint64_t> inserts_{0};
};

}  // namespace ragline
