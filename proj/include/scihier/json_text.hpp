#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "scihier/common.hpp"

namespace scihier {

/// Parses the single JSON value in a model response, ignoring prose or code
/// fences around it (the value spans the first '{'/'[' to the matching last
/// '}'/']'). Throws ParseError("malformed JSON: ...").
template <class Json = nlohmann::json>
Json parse_json_payload(std::string_view text) {
  std::string t = trim(text);
  if (t.empty()) throw ParseError("malformed JSON: empty response");
  const auto open = std::min(t.find('{'), t.find('['));
  if (open == std::string::npos) throw ParseError("malformed JSON: no JSON value in response");
  const char close_ch = t[open] == '{' ? '}' : ']';
  const auto close = t.rfind(close_ch);
  if (close == std::string::npos || close < open) throw ParseError("malformed JSON: unterminated value");
  try {
    return Json::parse(t.substr(open, close - open + 1));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace scihier
