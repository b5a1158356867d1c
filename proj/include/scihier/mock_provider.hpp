#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "scihier/gateway.hpp"

namespace scihier {

enum class JudgePolicy { oracle, random, adversarial };
JudgePolicy parse_judge_policy(std::string_view name);
std::string_view judge_policy_name(JudgePolicy policy);

/// One scripted answer. Matches when every present predicate holds; the first
/// matching entry (in insertion order) wins.
struct ScriptEntry {
  std::optional<Role> role;
  std::optional<std::string> prompt_contains;
  std::optional<std::string> prompt_hash;  // sha256_hex of the full prompt
  /// Successive matches walk the list and then stick to the last element.
  std::vector<std::string> responses;
  /// The first `fail_times` matches throw TransientError instead.
  int fail_times = 0;
};

/// Script file: JSON array of {role?, prompt_contains? | prompt_hash?,
/// response | responses, fail_times?}.
std::vector<ScriptEntry> parse_script(const nlohmann::json& j);
std::vector<ScriptEntry> load_script(const std::filesystem::path& path);

struct MockOptions {
  JudgePolicy judge_policy = JudgePolicy::oracle;
  std::uint64_t judge_seed = 0;
};

/// Deterministic offline provider.
///
/// Unscripted requests fall back to a per-role rule driven by the request's
/// `meta.kind`:
///   contributions      {title, abstract, schema:{section:[field...]}} -> contribution JSON
///   keywords           {title, count}                        -> JSON array of keywords
///   cluster_summary    {label, fields:[...], members:[...]}  -> {"Cluster Name", label:{...}}
///   judge              {num_options, correct (1-based, 0 = none)} -> option number
///   flmsci_parallel    {tree (serialized JSON), topics}      -> expanded nested tree
///   flmsci_incremental {topic, current, depth, subnodes, allowed} -> action JSON
/// Responses depend only on (prompt, meta, params.seed, options), never on
/// call order, so concurrent use stays reproducible.
class MockProvider : public ChatProvider {
public:
  using Fallback = std::function<std::string(const ChatRequest&)>;

  explicit MockProvider(MockOptions options = {});

  std::string name() const override { return "mock"; }
  std::string complete(const ChatRequest& request) override;

  void add_script(ScriptEntry entry);
  void add_script(const std::vector<ScriptEntry>& entries);
  /// Replaces the built-in rule for a role.
  void set_fallback(Role role, Fallback fallback);
  void set_judge_policy(JudgePolicy policy, std::uint64_t seed);

private:
  std::string builtin(const ChatRequest& request) const;

  struct ScriptState {
    ScriptEntry entry;
    std::size_t used = 0;
    int failures = 0;
  };

  MockOptions options_;
  std::vector<ScriptState> script_;
  std::map<Role, Fallback> fallbacks_;
  std::mutex mutex_;
};

namespace mock_rules {
std::string contributions(const nlohmann::json& meta);
std::string keywords(const nlohmann::json& meta);
std::string cluster_summary(const nlohmann::json& meta);
std::string judge(const ChatRequest& request, JudgePolicy policy, std::uint64_t seed);
std::string flmsci_parallel(const nlohmann::json& meta);
std::string flmsci_incremental(const ChatRequest& request);
}  // namespace mock_rules

}  // namespace scihier
