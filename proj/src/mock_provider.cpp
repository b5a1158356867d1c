#include "scihier/mock_provider.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace scihier {

using nlohmann::json;
using nlohmann::ordered_json;

JudgePolicy parse_judge_policy(std::string_view name) {
  if (name == "oracle") return JudgePolicy::oracle;
  if (name == "random") return JudgePolicy::random;
  if (name == "adversarial") return JudgePolicy::adversarial;
  throw InvalidArgument("unknown judge policy \"" + std::string(name) + "\"");
}

std::string_view judge_policy_name(JudgePolicy policy) {
  switch (policy) {
    case JudgePolicy::oracle: return "oracle";
    case JudgePolicy::random: return "random";
    case JudgePolicy::adversarial: return "adversarial";
  }
  return "oracle";
}

std::vector<ScriptEntry> parse_script(const json& j) {
  if (!j.is_array()) throw ParseError("mock script must be a JSON array");
  std::vector<ScriptEntry> out;
  for (const auto& item : j) {
    if (!item.is_object()) throw ParseError("mock script entries must be objects");
    ScriptEntry e;
    if (item.contains("role")) e.role = parse_role(item.at("role").get<std::string>());
    if (item.contains("prompt_contains")) e.prompt_contains = item.at("prompt_contains").get<std::string>();
    if (item.contains("prompt_hash")) e.prompt_hash = item.at("prompt_hash").get<std::string>();
    if (item.contains("response")) e.responses.push_back(item.at("response").get<std::string>());
    if (item.contains("responses"))
      for (const auto& r : item.at("responses")) e.responses.push_back(r.get<std::string>());
    if (item.contains("fail_times")) e.fail_times = item.at("fail_times").get<int>();
    if (e.responses.empty()) throw ParseError("mock script entry without response");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ScriptEntry> load_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open mock script " + path.string());
  try {
    return parse_script(json::parse(in));
  } catch (const json::exception& e) {
    throw ParseError(std::string("mock script: ") + e.what());
  }
}

MockProvider::MockProvider(MockOptions options) : options_(options) {}

void MockProvider::add_script(ScriptEntry entry) {
  std::lock_guard lock(mutex_);
  script_.push_back({std::move(entry), 0, 0});
}

void MockProvider::add_script(const std::vector<ScriptEntry>& entries) {
  for (const auto& e : entries) add_script(e);
}

void MockProvider::set_fallback(Role role, Fallback fallback) {
  std::lock_guard lock(mutex_);
  fallbacks_[role] = std::move(fallback);
}

void MockProvider::set_judge_policy(JudgePolicy policy, std::uint64_t seed) {
  std::lock_guard lock(mutex_);
  options_.judge_policy = policy;
  options_.judge_seed = seed;
}

std::string MockProvider::complete(const ChatRequest& request) {
  Fallback fallback;
  {
    std::lock_guard lock(mutex_);
    std::optional<std::string> hash;
    for (auto& state : script_) {
      const auto& e = state.entry;
      if (e.role && *e.role != request.role) continue;
      if (e.prompt_contains && request.prompt.find(*e.prompt_contains) == std::string::npos) continue;
      if (e.prompt_hash) {
        if (!hash) hash = sha256_hex(request.prompt);
        if (*hash != *e.prompt_hash) continue;
      }
      if (state.failures < e.fail_times) {
        ++state.failures;
        throw TransientError("scripted transient failure");
      }
      const std::size_t i = std::min(state.used, e.responses.size() - 1);
      ++state.used;
      return e.responses[i];
    }
    auto it = fallbacks_.find(request.role);
    if (it != fallbacks_.end()) fallback = it->second;
  }
  if (fallback) return fallback(request);
  return builtin(request);
}

std::string MockProvider::builtin(const ChatRequest& request) const {
  const std::string kind = request.meta.value("kind", "");
  if (kind == "contributions") return mock_rules::contributions(request.meta);
  if (kind == "keywords") return mock_rules::keywords(request.meta);
  if (kind == "cluster_summary") return mock_rules::cluster_summary(request.meta);
  if (kind == "judge") return mock_rules::judge(request, options_.judge_policy, options_.judge_seed);
  if (kind == "flmsci_parallel") return mock_rules::flmsci_parallel(request.meta);
  if (kind == "flmsci_incremental") return mock_rules::flmsci_incremental(request);
  throw ConfigError("mock provider has no script entry or rule for " +
                    std::string(role_name(request.role)) + " request kind \"" + kind + "\"");
}

namespace mock_rules {

namespace {

std::vector<std::string> sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  for (std::size_t i = 0; i < text.size(); ++i) {
    current.push_back(text[i]);
    const bool end = (text[i] == '.' || text[i] == '!' || text[i] == '?') &&
                     (i + 1 == text.size() || text[i + 1] == ' ' || text[i + 1] == '\n');
    if (end) {
      auto t = trim(current);
      if (!t.empty()) out.push_back(t);
      current.clear();
    }
  }
  auto t = trim(current);
  if (!t.empty()) out.push_back(t);
  return out;
}

std::string first_words(const std::string& text, std::size_t n) {
  auto words = split_whitespace(text);
  if (words.size() > n) words.resize(n);
  return join(words, " ");
}

std::string strip_prefix(std::string line, std::string_view prefix) {
  if (line.rfind(prefix, 0) == 0) line = line.substr(prefix.size());
  return trim(line);
}

}  // namespace

std::string contributions(const json& meta) {
  const std::string title = meta.value("title", "");
  const auto sents = sentences(meta.value("abstract", ""));
  ordered_json out;
  std::size_t next = 0;
  bool first_field = true;
  const json schema = meta.value("schema", json::object());
  for (const char* section : {"problem", "solution", "result"}) {
    ordered_json body = ordered_json::object();
    if (schema.contains(section)) {
      for (const auto& f : schema.at(section)) {
        std::string value;
        if (first_field) {
          value = title;
          first_field = false;
        } else if (next < sents.size()) {
          value = sents[next++];
        }
        body[f.get<std::string>()] = value;
      }
    }
    out[section] = body;
  }
  // Topics: sliding three-word windows over the title.
  std::vector<std::string> topics;
  const auto words = split_whitespace(title);
  for (std::size_t i = 0; i + 3 <= words.size() && topics.size() < 3; i += 2)
    topics.push_back(join({words[i], words[i + 1], words[i + 2]}, " "));
  if (topics.empty() && !title.empty()) topics.push_back(title);
  out["topics"] = topics;
  out["rationale"] = title.empty() ? "" : "Derived from the title and abstract of \"" + title + "\".";
  return out.dump();
}

std::string keywords(const json& meta) {
  const std::size_t count = meta.value("count", 5);
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& w : split_whitespace(meta.value("title", ""))) {
    std::string k;
    for (char c : to_lower(w))
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '-') k.push_back(c);
    if (k.size() < 4 || !seen.insert(k).second) continue;
    out.push_back(k);
    if (out.size() == count) break;
  }
  return json(out).dump();
}

std::string cluster_summary(const json& meta) {
  const std::string label = meta.value("label", "Problem");
  const auto members = meta.value("members", std::vector<std::string>{});
  std::string lead;
  if (!members.empty()) {
    // First line of the first member, without a "Title:" / "Cluster Name:" tag.
    std::string line = members.front().substr(0, members.front().find('\n'));
    line = strip_prefix(strip_prefix(line, "Title:"), "Cluster Name:");
    lead = first_words(line, 8);
  }
  auto words = split_whitespace(lead);
  static const char* kPad[] = {"Research", "Cluster", "Theme", "Area", "Overview"};
  for (std::size_t i = 0; words.size() < 5; ++i) words.emplace_back(kPad[i % 5]);
  ordered_json out;
  out["Cluster Name"] = join(words, " ");
  ordered_json body = ordered_json::object();
  const auto fields = meta.value("fields", std::vector<std::string>{});
  for (std::size_t i = 0; i < fields.size(); ++i) {
    std::string text;
    if (!members.empty()) {
      const auto& m = members[i % members.size()];
      text = first_words(replace_all(m, "\n", " "), 24);
    }
    body[fields[i]] = text;
  }
  out[label] = body;
  return out.dump();
}

std::string judge(const ChatRequest& request, JudgePolicy policy, std::uint64_t seed) {
  const std::int64_t n = request.meta.value("num_options", 0);
  const std::int64_t correct = request.meta.value("correct", 0);
  if (n <= 0) return "0";
  switch (policy) {
    case JudgePolicy::oracle:
      return std::to_string(correct > 0 ? correct : 1);
    case JudgePolicy::adversarial:
      if (correct <= 0) return "1";
      if (n == 1) return "0";  // the only option is correct: answer out of range
      return std::to_string(correct % n + 1);
    case JudgePolicy::random: {
      const std::uint64_t h = combine_seed(combine_seed(seed, request.params.seed.value_or(0)),
                                           fnv1a64(request.prompt));
      Rng rng(h);
      return std::to_string(1 + rng.below(static_cast<std::uint64_t>(n)));
    }
  }
  return "1";
}

std::string flmsci_parallel(const json& meta) {
  ordered_json tree = ordered_json::parse(meta.at("tree").get<std::string>());
  // Candidate parents: nodes at depth >= 2, in document order. Addressed by
  // path because inserting into an object invalidates references into it.
  using Pointer = ordered_json::json_pointer;
  std::vector<Pointer> slots;
  std::function<void(const ordered_json&, const Pointer&, int)> walk = [&](const ordered_json& node,
                                                                           const Pointer& at, int depth) {
    if (!node.is_object()) return;
    for (auto it = node.begin(); it != node.end(); ++it) {
      const Pointer child = at / it.key();
      if (depth >= 2) slots.push_back(child);
      walk(it.value(), child, depth + 1);
    }
  };
  walk(tree, Pointer{}, 0);
  if (slots.empty()) slots.emplace_back();
  for (const auto& t : meta.value("topics", std::vector<std::string>{})) {
    auto& parent = tree[slots[fnv1a64(normalize_phrase(t)) % slots.size()]];
    if (parent.is_null()) parent = ordered_json::object();
    if (!parent.contains(t)) parent[t] = ordered_json::object();
  }
  return tree.dump();
}

std::string flmsci_incremental(const ChatRequest& request) {
  const auto& meta = request.meta;
  const std::string topic = meta.value("topic", "");
  const std::string current = meta.value("current", "");
  const int depth = meta.value("depth", 0);
  const auto subnodes = meta.value("subnodes", std::vector<std::string>{});
  const auto allowed = meta.value("allowed", std::vector<std::string>{});
  auto can = [&](const char* a) { return std::find(allowed.begin(), allowed.end(), a) != allowed.end(); };
  const std::uint64_t h = mix64(fnv1a64(normalize_phrase(topic) + "|" + current));

  ordered_json out;
  auto go_down = [&] {
    out["action"] = "go_down";
    out["node"] = subnodes[h % subnodes.size()];
  };
  if (can("go_down") && !subnodes.empty() && depth < 2) {
    go_down();
  } else {
    const auto roll = (h >> 17) % 8;
    if (roll == 0 && can("make_parent") && subnodes.size() >= 2) {
      const std::size_t a = h % subnodes.size();
      const std::size_t b = (a + 1 + (h >> 33) % (subnodes.size() - 1)) % subnodes.size();
      out["action"] = "make_parent";
      out["node"] = topic;
      out["child_nodes"] = {subnodes[a], subnodes[b]};
    } else if (roll <= 3 && can("add_sibling")) {
      out["action"] = "add_sibling";
      out["node"] = topic;
      out["parent_node"] = current;
    } else if (can("go_down") && !subnodes.empty()) {
      go_down();
    } else if (can("add_sibling")) {
      out["action"] = "add_sibling";
      out["node"] = topic;
      out["parent_node"] = current;
    } else {
      out["action"] = "discard";
      out["node"] = topic;
      out["explanation"] = "no suitable location";
    }
  }
  return out.dump();
}

}  // namespace mock_rules

}  // namespace scihier
