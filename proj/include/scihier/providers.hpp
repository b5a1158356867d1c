#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "scihier/embedding.hpp"
#include "scihier/gateway.hpp"
#include "scihier/mock_provider.hpp"

namespace scihier {

/// Where a chat role is served from. Keys are read from the environment
/// variable named by api_key_env, never from the config file.
struct ChatEndpoint {
  std::string provider = "mock";  // "mock" | "openai" (any OpenAI-compatible server)
  std::string base_url = "https://api.openai.com/v1";
  std::string model;
  std::string api_key_env = "OPENAI_API_KEY";
  int timeout_seconds = 120;
};

struct EmbedderEndpoint {
  std::string provider = "mock-hash";  // "mock-hash" | "mock-lexical" | "openai"
  std::string base_url = "https://api.openai.com/v1";
  std::string model;
  std::string api_key_env = "OPENAI_API_KEY";
  std::size_t dimension = 64;
  std::uint64_t seed = 0;
  int timeout_seconds = 120;
};

/// Provider configuration file (JSON):
///   {"chat": ChatEndpoint, "roles": {"judge": ChatEndpoint, ...},
///    "embedder": EmbedderEndpoint, "gateway": {"max_retries", "max_in_flight"},
///    "mock": {"judge_policy", "judge_seed", "script"}}
/// Every section and field is optional. A field named "api_key" anywhere is
/// rejected with ConfigError.
struct ProviderConfig {
  ChatEndpoint chat;
  std::map<Role, ChatEndpoint> roles;
  EmbedderEndpoint embedder;
  int max_retries = 3;
  std::size_t max_in_flight = 8;
  MockOptions mock;
  std::optional<std::filesystem::path> mock_script;

  static ProviderConfig parse(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ProviderConfig load(const std::filesystem::path& path);
  /// Everything served by the deterministic mocks.
  static ProviderConfig mock_only();
};

/// Chat completions over HTTP(S): POST {base_url}/chat/completions.
/// 408/429/5xx and transport failures are TransientError; other non-2xx
/// answers (401, 403, 404, ...) are ConfigError.
class OpenAIChatProvider : public ChatProvider {
public:
  OpenAIChatProvider(ChatEndpoint endpoint, std::string api_key);
  std::string name() const override { return "openai:" + endpoint_.model; }
  std::string complete(const ChatRequest& request) override;

private:
  ChatEndpoint endpoint_;
  std::string api_key_;
};

/// Embeddings over HTTP(S): POST {base_url}/embeddings.
class OpenAIEmbedder : public EmbedderClient {
public:
  OpenAIEmbedder(EmbedderEndpoint endpoint, std::string api_key);
  std::string name() const override { return "openai"; }
  std::string model_tag() const override { return endpoint_.model + "/" + std::to_string(endpoint_.dimension); }
  std::size_t dimension() const override { return endpoint_.dimension; }
  std::vector<Vector> embed_batch(std::span<const std::string> texts) override;

private:
  EmbedderEndpoint endpoint_;
  std::string api_key_;
};

/// Builds the chat provider for one endpoint. The shared mock provider is
/// used for "mock" endpoints. Throws ConfigError (unknown provider, missing
/// key variable).
std::shared_ptr<ChatProvider> make_chat_provider(const ChatEndpoint& endpoint,
                                                 const std::shared_ptr<MockProvider>& mock);

struct ProviderSet {
  std::shared_ptr<MockProvider> mock;
  std::unique_ptr<Gateway> gateway;
  std::unique_ptr<EmbedderClient> embedder;
};

/// Gateway with per-role routing plus the configured embedder. When
/// force_mock is set every role and the embedder use mocks regardless of the
/// file.
ProviderSet make_providers(const ProviderConfig& config, bool force_mock = false);

}  // namespace scihier
