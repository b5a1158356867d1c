#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace scihier {

/// Files under prompts/ and assets/ compiled into the library, addressed by
/// their relative path (e.g. "prompts/judge.txt"). Throws NotFound.
std::string_view embedded_asset(std::string_view name);
std::vector<std::string> embedded_asset_names();

using TemplateVars = std::vector<std::pair<std::string, std::string>>;

/// Replaces each "{name}" for the given names; every other brace is literal.
std::string render_template(std::string_view tmpl, const TemplateVars& vars);

/// Short content hash identifying a template version.
std::string template_version(std::string_view tmpl);

}  // namespace scihier
