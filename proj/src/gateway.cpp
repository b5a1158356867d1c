#include "scihier/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace scihier {

std::string_view role_name(Role role) {
  switch (role) {
    case Role::extractor: return "extractor";
    case Role::summarizer: return "summarizer";
    case Role::judge: return "judge";
    case Role::flmsci: return "flmsci";
  }
  return "unknown";
}

Role parse_role(std::string_view name) {
  for (Role r : kAllRoles)
    if (role_name(r) == name) return r;
  throw InvalidArgument("unknown role \"" + std::string(name) + "\"");
}

std::chrono::milliseconds RetryPolicy::delay_for(int retry_index) const {
  const double ms = double(base_delay.count()) * std::pow(multiplier, retry_index);
  return std::min(max_delay, std::chrono::milliseconds(static_cast<std::int64_t>(ms)));
}

std::size_t CallLedger::total_calls() const {
  std::size_t n = 0;
  for (const auto& r : roles) n += r.calls;
  return n;
}

std::size_t CallLedger::total_input_tokens() const {
  std::size_t n = 0;
  for (const auto& r : roles) n += r.input_tokens;
  return n;
}

std::size_t CallLedger::total_output_tokens() const {
  std::size_t n = 0;
  for (const auto& r : roles) n += r.output_tokens;
  return n;
}

nlohmann::ordered_json CallLedger::to_json(bool include_timing) const {
  nlohmann::ordered_json j;
  j["total_calls"] = total_calls();
  j["total_input_tokens"] = total_input_tokens();
  j["total_output_tokens"] = total_output_tokens();
  j["tokens_approximate"] = tokens_approximate;
  auto& roles_json = j["roles"];
  roles_json = nlohmann::ordered_json::object();
  for (Role r : kAllRoles) {
    const auto& t = of(r);
    nlohmann::ordered_json rj;
    rj["calls"] = t.calls;
    rj["failed_calls"] = t.failed_calls;
    rj["attempts"] = t.attempts;
    rj["input_tokens"] = t.input_tokens;
    rj["output_tokens"] = t.output_tokens;
    rj["mean_input_tokens"] = t.mean_input_tokens();
    if (include_timing) rj["millis"] = t.millis;
    roles_json[std::string(role_name(r))] = rj;
  }
  return j;
}

Gateway::Gateway(std::shared_ptr<ChatProvider> provider, GatewayOptions options)
    : default_provider_(std::move(provider)), options_(std::move(options)) {
  if (!default_provider_) throw ConfigError("gateway requires a provider");
  if (!options_.token_counter) options_.token_counter = default_token_counter();
  if (!options_.sleeper) options_.sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  const auto slots = static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options_.max_in_flight));
  in_flight_ = std::make_unique<std::counting_semaphore<>>(slots);
  ledger_.tokens_approximate = options_.tokens_approximate;
}

void Gateway::set_provider(Role role, std::shared_ptr<ChatProvider> provider) {
  if (!provider) throw ConfigError("null provider");
  overrides_[role] = std::move(provider);
}

ChatProvider& Gateway::provider_for(Role role) const {
  auto it = overrides_.find(role);
  return it != overrides_.end() ? *it->second : *default_provider_;
}

void Gateway::record(const CallRecord& rec) {
  std::lock_guard lock(ledger_mutex_);
  auto& t = ledger_.roles[static_cast<std::size_t>(rec.role)];
  ++t.calls;
  if (!rec.ok) ++t.failed_calls;
  t.attempts += static_cast<std::size_t>(rec.attempts);
  t.input_tokens += rec.input_tokens;
  t.output_tokens += rec.output_tokens;
  t.millis += rec.millis;
  ledger_.entries.push_back(rec);
}

std::string Gateway::chat(const ChatRequest& request) {
  if (request.prompt.empty()) throw InvalidArgument("empty prompt");
  ChatProvider& provider = provider_for(request.role);

  CallRecord rec;
  rec.role = request.role;
  rec.input_tokens = options_.token_counter(request.prompt);

  struct Slot {
    std::counting_semaphore<>& sem;
    explicit Slot(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
    ~Slot() { sem.release(); }
  };

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };
  const int max_attempts = 1 + std::max(0, options_.retry.max_retries);
  std::string last_error;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    if (attempt > 0) options_.sleeper(options_.retry.delay_for(attempt - 1));
    rec.attempts = attempt + 1;
    try {
      std::string response;
      {
        Slot slot(*in_flight_);
        response = provider.complete(request);
      }
      rec.ok = true;
      rec.output_tokens = options_.token_counter(response);
      rec.millis = elapsed();
      record(rec);
      return response;
    } catch (const TransientError& e) {
      last_error = e.what();
    } catch (...) {
      rec.millis = elapsed();
      record(rec);
      throw;
    }
  }
  rec.millis = elapsed();
  record(rec);
  throw RetriesExhausted(std::string(role_name(request.role)) + " call failed: " + last_error, rec.attempts);
}

std::string Gateway::chat(Role role, std::string prompt, ChatParams params, nlohmann::json meta) {
  ChatRequest req;
  req.role = role;
  req.prompt = std::move(prompt);
  req.params = params;
  req.meta = std::move(meta);
  return chat(req);
}

CallLedger Gateway::ledger_report() const {
  std::lock_guard lock(ledger_mutex_);
  return ledger_;
}

void Gateway::reset_ledger() {
  std::lock_guard lock(ledger_mutex_);
  ledger_ = CallLedger{};
  ledger_.tokens_approximate = options_.tokens_approximate;
}

}  // namespace scihier
