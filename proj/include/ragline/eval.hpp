#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ragline/pipeline.hpp"

namespace ragline {

class DatasetError : public Error {
public:
    using Error::Error;
};

struct EvalSample {
    std::string id;
    std::string query;
    std::string gold_answer;
    std::vector<std::string> gold_chunk_ids;
    std::string sample_type;
};

struct Dataset {
    std::vector<EvalSample> samples;
    std::size_t invalid_lines = 0;
};

/// One JSON object per line. Blank lines are ignored; malformed lines are
/// counted and skipped. Half or more invalid lines is a DatasetError.
Dataset parse_dataset(std::string_view text);
Dataset load_dataset(const std::filesystem::path& path);

/// 1 iff the normalized strings are equal.
int exact_match(std::string_view predicted, std::string_view gold);

/// Clipped-count token overlap F1 over normalized answers.
double f1_score(std::string_view predicted, std::string_view gold);

/// (recall, precision) of retrieved ids against gold ids, as sets.
std::pair<double, double> retrieval_metrics(const std::vector<std::string>& retrieved,
                                            const std::vector<std::string>& gold);

/// Nearest-rank percentile (p in (0, 100]); 0 for an empty list.
double percentile(std::vector<double> values, double p);

struct EvalRow {
    std::string sample_id;
    std::string query;
    std::string prediction;
    std::vector<std::string> retrieved_ids;
    int em = 0;
    double f1 = 0.0;
    double recall = 0.0;
    double precision = 0.0;
    double latency_ms = 0.0;
    bool cache_hit = false;
    RouteDecision route = RouteDecision::Simple;
    std::optional<double> factuality;
    std::map<std::string, double> timings_ms;
};

struct EvalAggregates {
    std::size_t samples = 0;
    std::size_t invalid_lines = 0;
    double mean_em = 0.0;
    double mean_f1 = 0.0;
    double mean_recall = 0.0;
    double mean_precision = 0.0;
    double latency_p50_ms = 0.0;
    double latency_p95_ms = 0.0;
    double cache_hit_rate = 0.0;
    std::optional<double> mean_factuality;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    EvalAggregates aggregates;
};

EvalAggregates aggregate(const std::vector<EvalRow>& rows, std::size_t invalid_lines = 0);

struct EvalOptions {
    bool no_cache = false;
    std::size_t parallelism = 1;
    /// Judge model for the factuality score. Left empty under mocks, in
    /// which case factuality is not reported.
    std::shared_ptr<Generator> judge;
    std::shared_ptr<const PromptCatalog> prompts;
};

/// Runs chat for every sample; rows keep dataset order whatever the
/// parallelism.
EvalReport run_eval(const Dataset& dataset, const Pipeline& pipeline, const PipelineConfig& cfg,
                    const EvalOptions& opts);
EvalReport run_eval(const std::filesystem::path& dataset_path, const Pipeline& pipeline,
                    const PipelineConfig& cfg, const EvalOptions& opts);

/// Human-readable summary, starting with the metric conventions used.
std::string summary_text(const EvalReport& report);

/// Writes `<base>.jsonl` (one row per line, then a summary record) and
/// `<base>.txt`.
void write_report(const EvalReport& report, const std::filesystem::path& base);

}  // namespace ragline
