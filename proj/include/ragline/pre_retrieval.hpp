#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ragline/core.hpp"
#include "ragline/model_gateway.hpp"
#include "ragline/prompts.hpp"

namespace ragline {

struct TransformedQuery {
    std::string original;
    std::string rewritten;
    std::vector<std::string> sub_queries;
    std::optional<std::string> hyde_document;
    RouteDecision route = RouteDecision::Complex;
};

/// Case-insensitive match of the response's first token against
/// simple/complex/external. Anything else is Complex.
RouteDecision parse_route(std::string_view response);

/// One sub-query per non-empty line, list markers ("1.", "-", "*")
/// stripped, at most max_subs kept. Fewer than two lines means the query
/// was not decomposed and yields an empty list.
std::vector<std::string> parse_sub_queries(std::string_view response, std::size_t max_subs);

/// Adaptive routing and query transformation, all through the generator.
class QueryTransformer {
public:
    QueryTransformer(std::shared_ptr<Generator> generator, std::shared_ptr<const PromptCatalog> prompts);

    RouteDecision route(const std::string& query) const;

    /// Falls back to the original query when the generator returns blank.
    std::string rewrite(const std::string& query) const;

    std::vector<std::string> decompose(const std::string& query, std::size_t max_subs = 4) const;

    /// Hypothetical answer passage; falls back to the query when blank.
    std::string hyde(const std::string& query) const;

    /// Complex: rewrite, decompose the rewrite, HyDE on the rewrite.
    /// Simple and External pass the query through untouched.
    TransformedQuery transform(const std::string& query, RouteDecision route,
                               std::size_t max_subs = 4) const;

private:
    std::string ask(const std::string& task, const std::map<std::string, std::string>& vars) const;

    std::shared_ptr<Generator> generator_;
    std::shared_ptr<const PromptCatalog> prompts_;
};

}  // namespace ragline
