#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <json.hpp>

#include "scihier/common.hpp"

namespace scihier {

enum class Role { extractor = 0, summarizer = 1, judge = 2, flmsci = 3 };
inline constexpr std::array<Role, 4> kAllRoles = {Role::extractor, Role::summarizer, Role::judge,
                                                  Role::flmsci};

std::string_view role_name(Role role);
/// Throws InvalidArgument.
Role parse_role(std::string_view name);

struct ChatParams {
  double temperature = 0.0;
  int max_tokens = 2048;
  /// Per-request sampling seed. Forwarded to providers that accept one.
  std::optional<std::uint64_t> seed;
};

/// One logical LLM request.
///
/// `meta` is a structured description of what the prompt asks for (request
/// kind, the options offered, the schema expected, ...). It never leaves the
/// process: network providers ignore it, and the scripted mock provider uses
/// it to produce well-formed offline answers. Conventions per kind are listed
/// in mock_provider.hpp.
struct ChatRequest {
  Role role = Role::extractor;
  std::string prompt;
  ChatParams params;
  nlohmann::json meta = nlohmann::json::object();
};

class ChatProvider {
public:
  virtual ~ChatProvider() = default;
  virtual std::string name() const = 0;
  /// Throws TransientError for retryable failures and ConfigError for
  /// authentication/configuration problems.
  virtual std::string complete(const ChatRequest& request) = 0;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{250};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{8000};

  std::chrono::milliseconds delay_for(int retry_index) const;
};

struct CallRecord {
  Role role = Role::extractor;
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;
  int attempts = 0;
  double millis = 0.0;
  bool ok = false;
};

struct RoleTotals {
  std::size_t calls = 0;
  std::size_t failed_calls = 0;
  std::size_t attempts = 0;
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;
  double millis = 0.0;

  double mean_input_tokens() const { return calls ? double(input_tokens) / double(calls) : 0.0; }
};

/// Snapshot of everything the gateway has done.
struct CallLedger {
  std::array<RoleTotals, 4> roles{};
  std::vector<CallRecord> entries;
  bool tokens_approximate = true;

  const RoleTotals& of(Role role) const { return roles[static_cast<std::size_t>(role)]; }
  std::size_t total_calls() const;
  std::size_t total_input_tokens() const;
  std::size_t total_output_tokens() const;
  /// Timing is excluded unless include_timing is set, so reports stay
  /// reproducible.
  nlohmann::ordered_json to_json(bool include_timing = false) const;
};

struct GatewayOptions {
  RetryPolicy retry;
  std::size_t max_in_flight = 8;
  TokenCounter token_counter = default_token_counter();
  bool tokens_approximate = true;
  /// Injectable for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleeper;
};

/// Provider-agnostic chat access. Thread-safe.
class Gateway {
public:
  explicit Gateway(std::shared_ptr<ChatProvider> provider, GatewayOptions options = {});

  /// Route one role to a different provider (e.g. a separate judge model).
  void set_provider(Role role, std::shared_ptr<ChatProvider> provider);

  /// Throws InvalidArgument for an empty prompt, ConfigError for
  /// non-retryable failures, RetriesExhausted once retries run out.
  std::string chat(const ChatRequest& request);
  std::string chat(Role role, std::string prompt, ChatParams params = {},
                   nlohmann::json meta = nlohmann::json::object());

  CallLedger ledger_report() const;
  void reset_ledger();
  const GatewayOptions& options() const noexcept { return options_; }

private:
  ChatProvider& provider_for(Role role) const;
  void record(const CallRecord& rec);

  std::shared_ptr<ChatProvider> default_provider_;
  std::map<Role, std::shared_ptr<ChatProvider>> overrides_;
  GatewayOptions options_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
  mutable std::mutex ledger_mutex_;
  CallLedger ledger_;
};

}  // namespace scihier
