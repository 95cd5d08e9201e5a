#include "ragline/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "ragline/post_retrieval.hpp"

namespace ragline {

using nlohmann::json;

namespace {

std::optional<EvalSample> parse_sample(const std::string& line, std::size_t line_no) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    EvalSample s;
    auto text_field = [&](const char* key) -> std::optional<std::string> {
        auto it = j.find(key);
        if (it == j.end() || !it->is_string()) return std::nullopt;
        return it->get<std::string>();
    };
    auto query = text_field("query");
    auto gold = text_field("gold_answer");
    if (!query || !gold || trim(*query).empty() || trim(*gold).empty()) return std::nullopt;
    s.query = *query;
    s.gold_answer = *gold;

    if (auto it = j.find("id"); it != j.end()) {
        if (it->is_string()) {
            s.id = it->get<std::string>();
        } else if (it->is_number_integer()) {
            s.id = std::to_string(it->get<long long>());
        } else {
            return std::nullopt;
        }
    } else {
        s.id = "line-" + std::to_string(line_no);
    }
    if (auto it = j.find("gold_chunk_ids"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) return std::nullopt;
        for (const auto& v : *it) {
            if (!v.is_string()) return std::nullopt;
            s.gold_chunk_ids.push_back(v.get<std::string>());
        }
    }
    if (auto t = text_field("sample_type")) s.sample_type = *t;
    return s;
}

std::vector<std::string> answer_tokens(std::string_view text) {
    return tokenize(normalize_answer(text));
}

double mean_of(const std::vector<EvalRow>& rows, double (*get)(const EvalRow&)) {
    if (rows.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& r : rows) sum += get(r);
    return sum / static_cast<double>(rows.size());
}

}  // namespace

Dataset parse_dataset(std::string_view text) {
    Dataset ds;
    std::size_t considered = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ++considered;
        if (auto s = parse_sample(line, line_no)) {
            ds.samples.push_back(std::move(*s));
        } else {
            ++ds.invalid_lines;
            spdlog::warn("dataset line {} is not a valid sample, skipped", line_no);
        }
    }
    if (considered == 0) throw DatasetError("dataset contains no samples");
    if (ds.invalid_lines * 2 >= considered) {
        throw DatasetError(std::to_string(ds.invalid_lines) + " of " + std::to_string(considered) +
                           " dataset lines are invalid");
    }
    return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot read dataset " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str());
}

int exact_match(std::string_view predicted, std::string_view gold) {
    return normalize_answer(predicted) == normalize_answer(gold) ? 1 : 0;
}

double f1_score(std::string_view predicted, std::string_view gold) {
    auto p = answer_tokens(predicted);
    auto g = answer_tokens(gold);
    return overlap_f1(p, g);
}

std::pair<double, double> retrieval_metrics(const std::vector<std::string>& retrieved,
                                            const std::vector<std::string>& gold) {
    std::set<std::string> r(retrieved.begin(), retrieved.end());
    std::set<std::string> g(gold.begin(), gold.end());
    std::size_t common = 0;
    for (const auto& id : r) common += g.count(id);
    double recall = g.empty() ? 1.0 : static_cast<double>(common) / static_cast<double>(g.size());
    double precision;
    if (r.empty()) {
        precision = g.empty() ? 1.0 : 0.0;
    } else {
        precision = static_cast<double>(common) / static_cast<double>(r.size());
    }
    return {recall, precision};
}

double percentile(std::vector<double> values, double p) {
    if (!(p > 0.0 && p <= 100.0)) throw PreconditionError("percentile must be in (0, 100]");
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
    return values[std::max<std::size_t>(rank, 1) - 1];
}

EvalAggregates aggregate(const std::vector<EvalRow>& rows, std::size_t invalid_lines) {
    EvalAggregates a;
    a.samples = rows.size();
    a.invalid_lines = invalid_lines;
    a.mean_em = mean_of(rows, [](const EvalRow& r) { return static_cast<double>(r.em); });
    a.mean_f1 = mean_of(rows, [](const EvalRow& r) { return r.f1; });
    a.mean_recall = mean_of(rows, [](const EvalRow& r) { return r.recall; });
    a.mean_precision = mean_of(rows, [](const EvalRow& r) { return r.precision; });
    a.cache_hit_rate = mean_of(rows, [](const EvalRow& r) { return r.cache_hit ? 1.0 : 0.0; });
    std::vector<double> latencies;
    for (const auto& r : rows) latencies.push_back(r.latency_ms);
    a.latency_p50_ms = percentile(latencies, 50);
    a.latency_p95_ms = percentile(latencies, 95);

    double judged = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
        if (r.factuality) {
            judged += *r.factuality;
            ++n;
        }
    }
    if (n > 0) a.mean_factuality = judged / static_cast<double>(n);
    return a;
}

EvalReport run_eval(const Dataset& dataset, const Pipeline& pipeline, const PipelineConfig& cfg,
                    const EvalOptions& opts) {
    if (opts.parallelism == 0) throw PreconditionError("parallelism must be at least 1");
    if (opts.judge && !opts.prompts) throw PreconditionError("a judge needs a prompt catalog");
    PipelineConfig run_cfg = cfg;
    if (opts.no_cache) run_cfg.use_cache = false;
    run_cfg.validate();

    EvalReport report;
    report.rows.resize(dataset.samples.size());

    auto evaluate_one = [&](std::size_t i) {
        const EvalSample& s = dataset.samples[i];
        EvalRow& row = report.rows[i];
        row.sample_id = s.id;
        row.query = s.query;
        auto start = std::chrono::steady_clock::now();
        ChatResult result = pipeline.chat(s.query, run_cfg);
        row.latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                .count();
        row.prediction = result.answer;
        row.cache_hit = result.cache_hit;
        row.route = result.route;
        row.timings_ms = result.timings_ms;
        for (const auto& src : result.sources) {
            if (!src.web) row.retrieved_ids.push_back(src.id);
        }
        row.em = exact_match(result.answer, s.gold_answer);
        row.f1 = f1_score(result.answer, s.gold_answer);
        std::tie(row.recall, row.precision) = retrieval_metrics(row.retrieved_ids, s.gold_chunk_ids);

        if (opts.judge) {
            std::vector<std::pair<std::string, std::string>> passages;
            for (std::size_t c = 0; c < result.contexts.size(); ++c) {
                passages.emplace_back(std::to_string(c + 1), result.contexts[c]);
            }
            std::map<std::string, std::string> vars{{"query", s.query},
                                                    {"answer", result.answer},
                                                    {"contexts", format_contexts(passages)}};
            row.factuality = parse_evaluator_score(opts.judge->complete(
                opts.prompts->render("judge.user", vars), opts.prompts->render("judge.system", vars)));
        }
    };

    const std::size_t workers = std::min(opts.parallelism, std::max<std::size_t>(1, dataset.samples.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < dataset.samples.size(); ++i) evaluate_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < dataset.samples.size(); i = next++) {
                    try {
                        evaluate_one(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    report.aggregates = aggregate(report.rows, dataset.invalid_lines);
    return report;
}

EvalReport run_eval(const std::filesystem::path& dataset_path, const Pipeline& pipeline,
                    const PipelineConfig& cfg, const EvalOptions& opts) {
    return run_eval(load_dataset(dataset_path), pipeline, cfg, opts);
}

std::string summary_text(const EvalReport& report) {
    const auto& a = report.aggregates;
    std::ostringstream out;
    out << "# Normalization: answers are lowercased, whitespace runs collapse to one space,\n"
        << "# trailing . ! ? are stripped. EM compares normalized strings; F1 uses clipped\n"
        << "# token counts. Recall/precision compare retrieved chunk ids with gold ids as sets.\n\n";
    int id_width = 12;
    for (const auto& r : report.rows) id_width = std::max(id_width, static_cast<int>(r.sample_id.size()) + 2);
    out << std::left << std::setw(id_width) << "sample" << std::right << std::setw(5) << "EM"
        << std::setw(8) << "F1" << std::setw(8) << "recall" << std::setw(8) << "prec"
        << std::setw(12) << "latency_ms" << std::setw(7) << "cache" << "\n";
    out << std::fixed;
    for (const auto& r : report.rows) {
        out << std::left << std::setw(id_width) << r.sample_id << std::right << std::setw(5) << r.em
            << std::setw(8) << std::setprecision(3) << r.f1 << std::setw(8) << r.recall
            << std::setw(8) << r.precision << std::setw(12) << std::setprecision(2)
            << r.latency_ms << std::setw(7) << (r.cache_hit ? "hit" : "miss") << "\n";
    }
    out << "\nsamples           " << a.samples << "\n"
        << "invalid lines     " << a.invalid_lines << "\n"
        << std::setprecision(4) << "mean EM           " << a.mean_em << "\n"
        << "mean F1           " << a.mean_f1 << "\n"
        << "mean recall       " << a.mean_recall << "\n"
        << "mean precision    " << a.mean_precision << "\n"
        << std::setprecision(2) << "latency p50 (ms)  " << a.latency_p50_ms << "\n"
        << "latency p95 (ms)  " << a.latency_p95_ms << "\n"
        << std::setprecision(4) << "cache hit rate    " << a.cache_hit_rate << "\n";
    if (a.mean_factuality) out << "factuality        " << *a.mean_factuality << "\n";
    return out.str();
}

void write_report(const EvalReport& report, const std::filesystem::path& base) {
    auto jsonl = base;
    jsonl += ".jsonl";
    auto txt = base;
    txt += ".txt";
    if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());

    std::ofstream rows(jsonl);
    if (!rows) throw Error("cannot write report " + jsonl.string());
    for (const auto& r : report.rows) {
        json j{{"type", "row"},
               {"id", r.sample_id},
               {"query", r.query},
               {"prediction", r.prediction},
               {"retrieved_ids", r.retrieved_ids},
               {"em", r.em},
               {"f1", r.f1},
               {"recall", r.recall},
               {"precision", r.precision},
               {"latency_ms", r.latency_ms},
               {"cache_hit", r.cache_hit},
               {"route", to_string(r.route)},
               {"timings_ms", r.timings_ms}};
        if (r.factuality) j["factuality"] = *r.factuality;
        rows << j.dump() << "\n";
    }
    const auto& a = report.aggregates;
    json summary{{"type", "summary"},
                 {"samples", a.samples},
                 {"invalid_lines", a.invalid_lines},
                 {"mean_em", a.mean_em},
                 {"mean_f1", a.mean_f1},
                 {"mean_recall", a.mean_recall},
                 {"mean_precision", a.mean_precision},
                 {"latency_p50_ms", a.latency_p50_ms},
                 {"latency_p95_ms", a.latency_p95_ms},
                 {"cache_hit_rate", a.cache_hit_rate}};
    if (a.mean_factuality) summary["mean_factuality"] = *a.mean_factuality;
    rows << summary.dump() << "\n";
    if (!rows) throw Error("cannot write report " + jsonl.string());

    std::ofstream table(txt);
    if (!table) throw Error("cannot write report " + txt.string());
    table << summary_text(report);
}

}  // namespace ragline
