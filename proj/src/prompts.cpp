#include "ragline/prompts.hpp"

#include <fstream>
#include <sstream>

#include "default_prompts.hpp"

namespace ragline {

std::string_view PromptCatalog::default_text() { return detail::kDefaultPrompts; }

PromptCatalog PromptCatalog::defaults() { return parse(default_text()); }

PromptCatalog PromptCatalog::parse(std::string_view text) {
    PromptCatalog catalog;
    std::string current;
    std::vector<std::string> body;
    bool have_version = false;

    auto flush = [&] {
        if (current.empty()) return;
        while (!body.empty() && trim(body.back()).empty()) body.pop_back();
        std::size_t first = 0;
        while (first < body.size() && trim(body[first]).empty()) ++first;
        std::string joined;
        for (std::size_t i = first; i < body.size(); ++i) {
            if (i > first) joined += '\n';
            joined += body[i];
        }
        catalog.entries_[current] = std::move(joined);
        body.clear();
    };

    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.starts_with(';')) continue;
        std::string_view t = trim(line);
        // "[name]" headers; "[[directive]]" lines are body text.
        if (t.size() > 2 && t.front() == '[' && t.back() == ']' && t[1] != '[') {
            flush();
            current = std::string(t.substr(1, t.size() - 2));
            if (catalog.entries_.contains(current)) {
                throw PreconditionError("prompt catalog repeats section [" + current + "]");
            }
            continue;
        }
        if (current.empty()) {
            if (t.starts_with("version:")) {
                try {
                    catalog.version_ = std::stoi(std::string(trim(t.substr(8))));
                    have_version = true;
                } catch (const std::exception&) {
                    throw PreconditionError("prompt catalog has an invalid version line");
                }
            } else if (!t.empty()) {
                throw PreconditionError("prompt catalog text outside a section: " + line);
            }
            continue;
        }
        body.push_back(line);
    }
    flush();
    if (!have_version) throw PreconditionError("prompt catalog lacks a version line");
    return catalog;
}

PromptCatalog PromptCatalog::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read prompt catalog " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

bool PromptCatalog::contains(std::string_view name) const { return entries_.contains(name); }

const std::string& PromptCatalog::get(std::string_view name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw PreconditionError("prompt catalog has no entry '" + std::string(name) + "'");
    }
    return it->second;
}

std::string PromptCatalog::render(std::string_view name,
                                  const std::map<std::string, std::string>& vars) const {
    const std::string& tmpl = get(name);
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        std::size_t open = tmpl.find('{', pos);
        if (open == std::string::npos) break;
        std::size_t close = tmpl.find('}', open);
        if (close == std::string::npos) break;
        out.append(tmpl, pos, open - pos);
        auto it = vars.find(tmpl.substr(open + 1, close - open - 1));
        if (it != vars.end()) {
            out += it->second;
        } else {
            out.append(tmpl, open, close - open + 1);
        }
        pos = close + 1;
    }
    out.append(tmpl, pos);
    return out;
}

}  // namespace ragline
