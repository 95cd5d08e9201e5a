#include "ragline/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace ragline {

using json = nlohmann::json;

void sort_ranked(std::vector<ScoredChunk>& items) {
    std::sort(items.begin(), items.end(), [](const ScoredChunk& a, const ScoredChunk& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id() < b.id();
    });
}

HybridIndex::HybridIndex(Bm25Params bm25) : bm25_(bm25) {
    if (!(bm25_.k1 >= 0.0) || !(bm25_.b >= 0.0 && bm25_.b <= 1.0)) {
        throw PreconditionError("BM25 requires k1 >= 0 and 0 <= b <= 1");
    }
}

HybridIndex::HybridIndex(HybridIndex&& other) noexcept {
    std::unique_lock lock(other.mutex_);
    bm25_ = other.bm25_;
    dim_ = std::move(other.dim_);
    partitions_ = std::move(other.partitions_);
    partition_of_ = std::move(other.partition_of_);
    searches_ = other.searches_.load();
}

HybridIndex& HybridIndex::operator=(HybridIndex&& other) noexcept {
    if (this == &other) return *this;
    std::scoped_lock lock(mutex_, other.mutex_);
    bm25_ = other.bm25_;
    dim_ = std::move(other.dim_);
    partitions_ = std::move(other.partitions_);
    partition_of_ = std::move(other.partition_of_);
    searches_ = other.searches_.load();
    return *this;
}

void HybridIndex::erase_locked(const std::string& id) {
    auto owner = partition_of_.find(id);
    if (owner == partition_of_.end()) return;
    auto part_it = partitions_.find(owner->second);
    Partition& part = part_it->second;
    auto entry_it = part.entries.find(id);
    for (const auto& [term, tf] : entry_it->second.term_freqs) {
        auto post = part.postings.find(term);
        post->second.erase(id);
        if (post->second.empty()) part.postings.erase(post);
    }
    part.total_length -= entry_it->second.length;
    part.entries.erase(entry_it);
    if (part.entries.empty()) partitions_.erase(part_it);
    partition_of_.erase(owner);
}

std::size_t HybridIndex::upsert_chunks(std::vector<std::pair<Chunk, EmbeddingVector>> items) {
    // Validate the whole batch before touching anything.
    std::optional<std::size_t> dim = dim_;
    for (const auto& [chunk, vec] : items) {
        if (chunk.id.empty()) throw PreconditionError("chunk id must not be empty");
        if (chunk.partition_key.empty()) {
            throw PreconditionError("chunk '" + chunk.id + "' has no partition key");
        }
        if (dim && vec.dim() != *dim) throw DimensionError(*dim, vec.dim());
        if (vec.is_zero()) throw DegenerateVectorError();
        dim = vec.dim();
    }

    std::unique_lock lock(mutex_);
    if (dim_ && dim && *dim != *dim_) throw DimensionError(*dim_, *dim);
    for (auto& [chunk, vec] : items) {
        erase_locked(chunk.id);

        Entry entry;
        for (auto& token : tokenize(chunk.content)) {
            ++entry.term_freqs[token];
            ++entry.length;
        }
        Partition& part = partitions_[chunk.partition_key];
        for (const auto& [term, tf] : entry.term_freqs) part.postings[term][chunk.id] = tf;
        part.total_length += entry.length;
        partition_of_[chunk.id] = chunk.partition_key;
        std::string id = chunk.id;
        entry.vector = std::move(vec);
        entry.chunk = std::make_shared<const Chunk>(std::move(chunk));
        part.entries.insert_or_assign(std::move(id), std::move(entry));
    }
    if (!items.empty()) dim_ = dim;
    return items.size();
}

std::vector<ScoredChunk> HybridIndex::dense_search(const EmbeddingVector& query,
                                                   std::string_view partition,
                                                   std::size_t top_k) const {
    if (top_k == 0) throw PreconditionError("top_k must be at least 1");
    if (query.is_zero()) throw DegenerateVectorError();
    ++searches_;
    std::shared_lock lock(mutex_);
    std::vector<ScoredChunk> out;
    auto part = partitions_.find(partition);
    if (part == partitions_.end()) return out;
    if (dim_ && query.dim() != *dim_) throw DimensionError(*dim_, query.dim());
    out.reserve(part->second.entries.size());
    for (const auto& [id, entry] : part->second.entries) {
        out.push_back({entry.chunk, cosine_similarity(query, entry.vector), Stage::Dense});
    }
    sort_ranked(out);
    if (out.size() > top_k) out.resize(top_k);
    return out;
}

std::vector<ScoredChunk> HybridIndex::sparse_search(std::string_view query_text,
                                                    std::string_view partition,
                                                    std::size_t top_k) const {
    if (top_k == 0) throw PreconditionError("top_k must be at least 1");
    ++searches_;

    std::vector<std::string> terms;
    std::unordered_set<std::string> seen;
    for (auto& t : tokenize(query_text)) {
        if (seen.insert(t).second) terms.push_back(std::move(t));
    }

    std::shared_lock lock(mutex_);
    std::vector<ScoredChunk> out;
    auto part_it = partitions_.find(partition);
    if (part_it == partitions_.end() || terms.empty()) return out;
    const Partition& part = part_it->second;

    const double n_docs = static_cast<double>(part.entries.size());
    const double avgdl = static_cast<double>(part.total_length) / n_docs;
    std::map<std::string, double> scores;
    for (const auto& term : terms) {
        auto post = part.postings.find(term);
        if (post == part.postings.end()) continue;
        const double df = static_cast<double>(post->second.size());
        const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        for (const auto& [id, tf_raw] : post->second) {
            const double tf = tf_raw;
            const double dl = static_cast<double>(part.entries.find(id)->second.length);
            const double norm = bm25_.k1 * (1.0 - bm25_.b + bm25_.b * dl / avgdl);
            scores[id] += idf * tf * (bm25_.k1 + 1.0) / (tf + norm);
        }
    }
    for (const auto& [id, score] : scores) {
        if (score > 0.0) {
            out.push_back({part.entries.find(id)->second.chunk, score, Stage::Sparse});
        }
    }
    sort_ranked(out);
    if (out.size() > top_k) out.resize(top_k);
    return out;
}

std::size_t HybridIndex::delete_partition(std::string_view partition) {
    std::unique_lock lock(mutex_);
    auto it = partitions_.find(partition);
    if (it == partitions_.end()) return 0;
    std::size_t removed = it->second.entries.size();
    for (const auto& [id, entry] : it->second.entries) partition_of_.erase(id);
    partitions_.erase(it);
    if (partitions_.empty()) dim_.reset();
    return removed;
}

std::size_t HybridIndex::delete_document(std::string_view doc_id) {
    std::unique_lock lock(mutex_);
    std::vector<std::string> doomed;
    for (const auto& [name, part] : partitions_) {
        for (const auto& [id, entry] : part.entries) {
            if (entry.chunk->doc_id == doc_id) doomed.push_back(id);
        }
    }
    for (const auto& id : doomed) erase_locked(id);
    return doomed.size();
}

ChunkPtr HybridIndex::get(std::string_view chunk_id) const {
    std::shared_lock lock(mutex_);
    auto owner = partition_of_.find(chunk_id);
    if (owner == partition_of_.end()) return nullptr;
    const auto& entries = partitions_.find(owner->second)->second.entries;
    return entries.find(chunk_id)->second.chunk;
}

std::optional<EmbeddingVector> HybridIndex::vector_of(std::string_view chunk_id) const {
    std::shared_lock lock(mutex_);
    auto owner = partition_of_.find(chunk_id);
    if (owner == partition_of_.end()) return std::nullopt;
    const auto& entries = partitions_.find(owner->second)->second.entries;
    return entries.find(chunk_id)->second.vector;
}

std::size_t HybridIndex::size() const {
    std::shared_lock lock(mutex_);
    return partition_of_.size();
}

std::optional<std::size_t> HybridIndex::dim() const {
    std::shared_lock lock(mutex_);
    return dim_;
}

std::vector<std::string> HybridIndex::partitions() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> names;
    for (const auto& [name, part] : partitions_) names.push_back(name);
    return names;
}

std::size_t HybridIndex::partition_size(std::string_view partition) const {
    std::shared_lock lock(mutex_);
    auto it = partitions_.find(partition);
    return it == partitions_.end() ? 0 : it->second.entries.size();
}

// ---------------------------------------------------------------------------
// Snapshot
// ---------------------------------------------------------------------------

namespace {
constexpr std::string_view kSnapshotFormat = "ragline-index";
constexpr int kSnapshotVersion = 1;
}  // namespace

std::string HybridIndex::to_json_text() const {
    std::shared_lock lock(mutex_);
    // Chunks ordered by id regardless of partition.
    std::vector<const Entry*> ordered;
    for (const auto& [id, part_name] : partition_of_) {
        ordered.push_back(&partitions_.find(part_name)->second.entries.find(id)->second);
    }
    json chunks = json::array();
    for (const Entry* e : ordered) {
        const Chunk& c = *e->chunk;
        json vec = json::array();
        for (double v : e->vector.values()) vec.push_back(v);
        chunks.push_back({{"id", c.id},
                          {"doc_id", c.doc_id},
                          {"partition_key", c.partition_key},
                          {"content", c.content},
                          {"heading_path", c.heading_path},
                          {"metadata", c.metadata},
                          {"char_span", {c.char_span.start, c.char_span.end}},
                          {"vector", std::move(vec)}});
    }
    json doc = {{"format", kSnapshotFormat},
                {"version", kSnapshotVersion},
                {"dim", dim_ ? json(*dim_) : json(nullptr)},
                {"bm25", {{"k1", bm25_.k1}, {"b", bm25_.b}}},
                {"chunks", std::move(chunks)}};
    return doc.dump(1) + "\n";
}

void HybridIndex::save(const std::filesystem::path& path) const {
    std::string text = to_json_text();
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw SnapshotError("cannot write snapshot " + tmp.string());
        out << text;
        if (!out) throw SnapshotError("failed writing snapshot " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

HybridIndex HybridIndex::from_json_text(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SnapshotError(std::string("snapshot is not valid JSON: ") + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != kSnapshotFormat) {
            throw SnapshotError("not a ragline index snapshot");
        }
        if (doc.at("version").get<int>() != kSnapshotVersion) {
            throw SnapshotError("unsupported snapshot version");
        }
        Bm25Params bm25{doc.at("bm25").at("k1").get<double>(), doc.at("bm25").at("b").get<double>()};
        HybridIndex index(bm25);
        std::vector<std::pair<Chunk, EmbeddingVector>> items;
        for (const auto& jc : doc.at("chunks")) {
            Chunk c;
            c.id = jc.at("id").get<std::string>();
            c.doc_id = jc.at("doc_id").get<std::string>();
            c.partition_key = jc.at("partition_key").get<std::string>();
            c.content = jc.at("content").get<std::string>();
            c.heading_path = jc.at("heading_path").get<std::vector<std::string>>();
            c.metadata = jc.at("metadata").get<Metadata>();
            c.char_span = {jc.at("char_span").at(0).get<std::size_t>(),
                           jc.at("char_span").at(1).get<std::size_t>()};
            items.emplace_back(std::move(c),
                               EmbeddingVector(jc.at("vector").get<std::vector<double>>()));
        }
        if (!doc.at("dim").is_null() && !items.empty() &&
            items.front().second.dim() != doc.at("dim").get<std::size_t>()) {
            throw SnapshotError("snapshot dim does not match its vectors");
        }
        index.upsert_chunks(std::move(items));
        return index;
    } catch (const json::exception& e) {
        throw SnapshotError(std::string("malformed snapshot: ") + e.what());
    }
}

HybridIndex HybridIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SnapshotError("cannot open snapshot " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return from_json_text(buffer.str());
}

// ---------------------------------------------------------------------------
// Fusion and boosting
// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, double>> rrf_fuse(
    const std::vector<std::vector<std::string>>& rankings, const RrfConfig& cfg) {
    if (cfg.k < 1) throw PreconditionError("RRF k must be at least 1");
    std::map<std::string, double> scores;
    for (const auto& list : rankings) {
        std::unordered_set<std::string_view> seen;
        for (std::size_t i = 0; i < list.size(); ++i) {
            if (!seen.insert(list[i]).second) {
                throw PreconditionError("ranking repeats id '" + list[i] + "'");
            }
            scores[list[i]] += 1.0 / (static_cast<double>(cfg.k) + static_cast<double>(i + 1));
        }
    }
    std::vector<std::pair<std::string, double>> fused(scores.begin(), scores.end());
    std::stable_sort(fused.begin(), fused.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return fused;
}

std::vector<ScoredChunk> apply_boost(std::vector<ScoredChunk> candidates,
                                     const std::vector<BoostRule>& rules) {
    for (const auto& rule : rules) {
        if (!(rule.factor > 0.0) || !std::isfinite(rule.factor)) {
            throw PreconditionError("boost factor must be positive");
        }
    }
    for (auto& c : candidates) {
        if (!std::isfinite(c.score) || c.score < 0.0) {
            throw PreconditionError("boost expects finite non-negative scores");
        }
        double multiplier = 1.0;
        for (const auto& rule : rules) {
            auto it = c.chunk->metadata.find(rule.metadata_key);
            if (it != c.chunk->metadata.end() && it->second == rule.metadata_value) {
                multiplier *= rule.factor;
            }
        }
        c.score *= multiplier;
        c.stage = Stage::Boosted;
    }
    sort_ranked(candidates);
    return candidates;
}

std::vector<ScoredChunk> hybrid_search(const HybridIndex& index, std::string_view query_text,
                                       const EmbeddingVector& query_vec,
                                       std::string_view partition, std::size_t top_k,
                                       const RrfConfig& rrf,
                                       const std::vector<BoostRule>& boost_rules) {
    if (top_k == 0) throw PreconditionError("top_k must be at least 1");
    const std::size_t fanout = kFusionFanout * top_k;
    auto dense = index.dense_search(query_vec, partition, fanout);
    auto sparse = index.sparse_search(query_text, partition, fanout);

    std::unordered_map<std::string, ChunkPtr> by_id;
    std::vector<std::vector<std::string>> rankings(2);
    for (const auto& sc : dense) {
        rankings[0].push_back(sc.id());
        by_id.emplace(sc.id(), sc.chunk);
    }
    for (const auto& sc : sparse) {
        rankings[1].push_back(sc.id());
        by_id.emplace(sc.id(), sc.chunk);
    }

    std::vector<ScoredChunk> fused;
    for (auto& [id, score] : rrf_fuse(rankings, rrf)) {
        fused.push_back({by_id.at(id), score, Stage::Fused});
    }
    auto boosted = apply_boost(std::move(fused), boost_rules);
    if (boosted.size() > top_k) boosted.resize(top_k);
    return boosted;
}

}  // namespace ragline
