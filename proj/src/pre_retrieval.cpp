#include "ragline/pre_retrieval.hpp"

#include <cctype>

namespace ragline {

RouteDecision parse_route(std::string_view response) {
    auto tokens = tokenize(response);
    if (!tokens.empty()) {
        if (tokens.front() == "simple") return RouteDecision::Simple;
        if (tokens.front() == "external") return RouteDecision::External;
    }
    return RouteDecision::Complex;
}

std::vector<std::string> parse_sub_queries(std::string_view response, std::size_t max_subs) {
    std::vector<std::string> subs;
    std::size_t pos = 0;
    while (pos <= response.size()) {
        std::size_t nl = response.find('\n', pos);
        std::string_view line =
            response.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? response.size() + 1 : nl + 1;

        line = trim(line);
        if (line.starts_with("- ") || line.starts_with("* ") || line.starts_with("• ")) {
            line = trim(line.substr(line.find(' ') + 1));
        } else {
            std::size_t digits = 0;
            while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) {
                ++digits;
            }
            if (digits > 0 && digits < line.size() && (line[digits] == '.' || line[digits] == ')')) {
                line = trim(line.substr(digits + 1));
            }
        }
        if (!line.empty()) subs.emplace_back(line);
    }
    if (subs.size() < 2) return {};
    if (subs.size() > max_subs) subs.resize(max_subs);
    return subs;
}

QueryTransformer::QueryTransformer(std::shared_ptr<Generator> generator,
                                   std::shared_ptr<const PromptCatalog> prompts)
    : generator_(std::move(generator)), prompts_(std::move(prompts)) {
    if (!generator_ || !prompts_) throw PreconditionError("QueryTransformer needs a generator and prompts");
}

std::string QueryTransformer::ask(const std::string& task,
                                  const std::map<std::string, std::string>& vars) const {
    return generator_->complete(prompts_->render(task + ".user", vars),
                                prompts_->render(task + ".system", vars));
}

namespace {
void require_query(const std::string& query) {
    if (trim(query).empty()) throw PreconditionError("query must not be empty");
}
}  // namespace

RouteDecision QueryTransformer::route(const std::string& query) const {
    require_query(query);
    return parse_route(ask("route", {{"query", query}}));
}

std::string QueryTransformer::rewrite(const std::string& query) const {
    require_query(query);
    std::string out(trim(ask("rewrite", {{"query", query}})));
    return out.empty() ? query : out;
}

std::vector<std::string> QueryTransformer::decompose(const std::string& query,
                                                     std::size_t max_subs) const {
    require_query(query);
    if (max_subs == 0) throw PreconditionError("max_subs must be at least 1");
    return parse_sub_queries(
        ask("decompose", {{"query", query}, {"max_subs", std::to_string(max_subs)}}), max_subs);
}

std::string QueryTransformer::hyde(const std::string& query) const {
    require_query(query);
    std::string out(trim(ask("hyde", {{"query", query}})));
    return out.empty() ? query : out;
}

TransformedQuery QueryTransformer::transform(const std::string& query, RouteDecision route,
                                             std::size_t max_subs) const {
    TransformedQuery tq;
    tq.original = query;
    tq.rewritten = query;
    tq.route = route;
    if (route != RouteDecision::Complex) return tq;
    tq.rewritten = rewrite(query);
    tq.sub_queries = decompose(tq.rewritten, max_subs);
    tq.hyde_document = hyde(tq.rewritten);
    return tq;
}

}  // namespace ragline
