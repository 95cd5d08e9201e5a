#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "ragline/core.hpp"

namespace ragline {

/// Named prompt templates with `{placeholder}` substitution.
///
/// File format: a `version: N` line, then sections introduced by
/// `[name]` on a line of its own; the section body runs until the next
/// header. Lines starting with `;` are comments. Leading and trailing blank
/// lines of a body are dropped.
class PromptCatalog {
public:
    static PromptCatalog defaults();
    static PromptCatalog parse(std::string_view text);
    static PromptCatalog load(const std::filesystem::path& path);

    /// Text of the catalog shipped with the library.
    static std::string_view default_text();

    const std::string& get(std::string_view name) const;
    bool contains(std::string_view name) const;
    int version() const noexcept { return version_; }

    /// get(name) with each `{key}` replaced by vars[key]. Unknown
    /// placeholders are left as-is.
    std::string render(std::string_view name, const std::map<std::string, std::string>& vars) const;

    const std::map<std::string, std::string, std::less<>>& entries() const noexcept {
        return entries_;
    }

private:
    int version_ = 0;
    std::map<std::string, std::string, std::less<>> entries_;
};

}  // namespace ragline
