#include "scihier/prompts.hpp"

#include <cstddef>

#include "scihier/common.hpp"

namespace scihier {
namespace detail {
extern const std::pair<std::string_view, std::string_view> kEmbeddedAssets[];
extern const std::size_t kEmbeddedAssetCount;
}  // namespace detail

std::string_view embedded_asset(std::string_view name) {
  for (std::size_t i = 0; i < detail::kEmbeddedAssetCount; ++i)
    if (detail::kEmbeddedAssets[i].first == name) return detail::kEmbeddedAssets[i].second;
  throw NotFound("no embedded asset \"" + std::string(name) + "\"");
}

std::vector<std::string> embedded_asset_names() {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < detail::kEmbeddedAssetCount; ++i)
    out.emplace_back(detail::kEmbeddedAssets[i].first);
  return out;
}

std::string render_template(std::string_view tmpl, const TemplateVars& vars) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      bool matched = false;
      for (const auto& [name, value] : vars) {
        const std::size_t len = name.size() + 2;
        if (tmpl.size() - i >= len && tmpl[i + len - 1] == '}' && tmpl.substr(i + 1, name.size()) == name) {
          out += value;
          i += len;
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

std::string template_version(std::string_view tmpl) { return sha256_hex(tmpl).substr(0, 12); }

}  // namespace scihier
