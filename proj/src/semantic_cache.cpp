#include "ragline/semantic_cache.hpp"

#include <algorithm>
#include <mutex>

namespace ragline {

void CacheConfig::validate() const {
    if (!(default_threshold > 0.0 && default_threshold <= fuzzy_threshold && fuzzy_threshold <= 1.0)) {
        throw PreconditionError("cache thresholds must satisfy 0 < default <= fuzzy <= 1");
    }
    if (default_ttl_seconds <= 0) throw PreconditionError("cache TTL must be positive");
    if (max_entries == 0) throw PreconditionError("cache max_entries must be positive");
}

bool is_fuzzy(std::string_view query_text, const CacheConfig& cfg) {
    auto tokens = tokenize(query_text);
    for (const auto& marker : cfg.fuzzy_markers) {
        auto needle = tokenize(marker);
        if (needle.empty() || needle.size() > tokens.size()) continue;
        if (std::search(tokens.begin(), tokens.end(), needle.begin(), needle.end()) !=
            tokens.end()) {
            return true;
        }
    }
    return false;
}

SemanticCache::SemanticCache(CacheConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::optional<CacheHit> SemanticCache::lookup(std::string_view query_text,
                                              const EmbeddingVector& query_vec,
                                              std::string_view partition,
                                              std::int64_t now) const {
    ++lookups_;
    if (query_vec.is_zero()) throw DegenerateVectorError();
    const double threshold =
        is_fuzzy(query_text, cfg_) ? cfg_.fuzzy_threshold : cfg_.default_threshold;

    std::shared_lock lock(mutex_);
    if (dim_ && query_vec.dim() != *dim_) throw DimensionError(*dim_, query_vec.dim());

    const double qnorm = query_vec.norm();
    auto q = query_vec.values();
    const Stored* best = nullptr;
    double best_sim = -2.0;
    for (const Stored& s : entries_) {
        const CacheEntry& e = s.entry;
        if (now - e.created_at >= e.ttl_seconds) continue;
        if (e.partition_key != partition) continue;
        auto v = e.query_vec.values();
        double dot = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) dot += q[i] * v[i];
        double sim = std::clamp(dot / (qnorm * s.norm), -1.0, 1.0);
        bool better = sim > best_sim ||
                      (sim == best_sim && best &&
                       (e.created_at > best->entry.created_at ||
                        (e.created_at == best->entry.created_at && s.sequence > best->sequence)));
        if (better) {
            best = &s;
            best_sim = sim;
        }
    }
    if (!best || best_sim < threshold) return std::nullopt;
    return CacheHit{best->entry.answer, best->entry.sources, best_sim};
}

void SemanticCache::insert(CacheEntry entry) {
    ++inserts_;
    if (entry.ttl_seconds <= 0) throw PreconditionError("cache entry TTL must be positive");
    if (entry.query_vec.is_zero()) throw DegenerateVectorError();

    std::unique_lock lock(mutex_);
    if (dim_ && entry.query_vec.dim() != *dim_) {
        throw DimensionError(*dim_, entry.query_vec.dim());
    }
    dim_ = entry.query_vec.dim();
    double norm = entry.query_vec.norm();
    entries_.push_back({std::move(entry), norm, next_sequence_++});
    while (entries_.size() > cfg_.max_entries) {
        auto oldest = std::min_element(entries_.begin(), entries_.end(),
                                       [](const Stored& a, const Stored& b) {
                                           if (a.entry.created_at != b.entry.created_at) {
                                               return a.entry.created_at < b.entry.created_at;
                                           }
                                           return a.sequence < b.sequence;
                                       });
        entries_.erase(oldest);
    }
}

std::size_t SemanticCache::purge_expired(std::int64_t now) {
    std::unique_lock lock(mutex_);
    return std::erase_if(entries_, [now](const Stored& s) {
        return now - s.entry.created_at >= s.entry.ttl_seconds;
    });
}

std::size_t SemanticCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

}  // namespace ragline
