#include "scihier/providers.hpp"

#include <cstdlib>
#include <fstream>

#include <httplib.h>

namespace scihier {

using nlohmann::json;

namespace {

void reject_inline_keys(const json& j, const std::string& where) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() == "api_key")
        throw ConfigError("config field " + where + "/api_key is not allowed; put the key in an environment "
                          "variable and name it with api_key_env");
      reject_inline_keys(it.value(), where + "/" + it.key());
    }
  } else if (j.is_array()) {
    for (const auto& v : j) reject_inline_keys(v, where);
  }
}

ChatEndpoint parse_chat(const json& j, ChatEndpoint e) {
  if (!j.is_object()) throw ConfigError("chat endpoint must be an object");
  e.provider = j.value("provider", e.provider);
  e.base_url = j.value("base_url", e.base_url);
  e.model = j.value("model", e.model);
  e.api_key_env = j.value("api_key_env", e.api_key_env);
  e.timeout_seconds = j.value("timeout_seconds", e.timeout_seconds);
  return e;
}

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash
};

Url split_url(const std::string& base) {
  const auto scheme = base.find("://");
  if (scheme == std::string::npos) throw ConfigError("base_url must start with http:// or https://: " + base);
  const auto path = base.find('/', scheme + 3);
  Url u;
  u.origin = path == std::string::npos ? base : base.substr(0, path);
  u.prefix = path == std::string::npos ? "" : base.substr(path);
  while (!u.prefix.empty() && u.prefix.back() == '/') u.prefix.pop_back();
  return u;
}

std::string api_key_from_env(const std::string& var) {
  if (var.empty()) return {};
  const char* v = std::getenv(var.c_str());
  if (!v || !*v) throw ConfigError("environment variable " + var + " holding the API key is not set");
  return v;
}

json post_json(const std::string& base_url, const std::string& route, const std::string& api_key, int timeout,
               const json& body) {
  const Url url = split_url(base_url);
  httplib::Client client(url.origin);
  client.set_connection_timeout(timeout, 0);
  client.set_read_timeout(timeout, 0);
  client.set_write_timeout(timeout, 0);
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
  auto res = client.Post(url.prefix + route, headers, body.dump(), "application/json");
  if (!res) throw TransientError("request to " + base_url + route + " failed: " + httplib::to_string(res.error()));
  const int status = res->status;
  if (status == 408 || status == 429 || status >= 500)
    throw TransientError("HTTP " + std::to_string(status) + " from " + base_url + route);
  if (status < 200 || status >= 300)
    throw ConfigError("HTTP " + std::to_string(status) + " from " + base_url + route + ": " + res->body.substr(0, 200));
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw TransientError("malformed response from " + base_url + route + ": " + e.what());
  }
}

}  // namespace

ProviderConfig ProviderConfig::parse(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("provider config must be a JSON object");
  reject_inline_keys(j, "");
  ProviderConfig c;
  try {
    if (j.contains("chat")) c.chat = parse_chat(j.at("chat"), c.chat);
    if (j.contains("roles"))
      for (auto it = j.at("roles").begin(); it != j.at("roles").end(); ++it)
        c.roles[parse_role(it.key())] = parse_chat(it.value(), c.chat);
    if (j.contains("embedder")) {
      const auto& e = j.at("embedder");
      c.embedder.provider = e.value("provider", c.embedder.provider);
      c.embedder.base_url = e.value("base_url", c.embedder.base_url);
      c.embedder.model = e.value("model", c.embedder.model);
      c.embedder.api_key_env = e.value("api_key_env", c.embedder.api_key_env);
      c.embedder.dimension = e.value("dimension", c.embedder.dimension);
      c.embedder.seed = e.value("seed", c.embedder.seed);
      c.embedder.timeout_seconds = e.value("timeout_seconds", c.embedder.timeout_seconds);
    }
    if (j.contains("gateway")) {
      c.max_retries = j.at("gateway").value("max_retries", c.max_retries);
      c.max_in_flight = j.at("gateway").value("max_in_flight", c.max_in_flight);
    }
    if (j.contains("mock")) {
      const auto& m = j.at("mock");
      c.mock.judge_policy = parse_judge_policy(m.value("judge_policy", "oracle"));
      c.mock.judge_seed = m.value("judge_seed", std::uint64_t{0});
      if (m.contains("script")) {
        std::filesystem::path p = m.at("script").get<std::string>();
        c.mock_script = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("provider config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("provider config: ") + e.what());
  }
  if (c.max_in_flight == 0) throw ConfigError("gateway.max_in_flight must be >= 1");
  if (c.max_retries < 0) throw ConfigError("gateway.max_retries must be >= 0");
  return c;
}

ProviderConfig ProviderConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open provider config " + path.string());
  try {
    return parse(json::parse(in), path.parent_path());
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ProviderConfig ProviderConfig::mock_only() { return ProviderConfig{}; }

OpenAIChatProvider::OpenAIChatProvider(ChatEndpoint endpoint, std::string api_key)
    : endpoint_(std::move(endpoint)), api_key_(std::move(api_key)) {
  split_url(endpoint_.base_url);  // validates early
  if (endpoint_.model.empty()) throw ConfigError("chat endpoint needs a model");
}

std::string OpenAIChatProvider::complete(const ChatRequest& request) {
  json body = {{"model", endpoint_.model},
               {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
               {"temperature", request.params.temperature},
               {"max_tokens", request.params.max_tokens}};
  if (request.params.seed) body["seed"] = *request.params.seed;
  const json res = post_json(endpoint_.base_url, "/chat/completions", api_key_, endpoint_.timeout_seconds, body);
  try {
    return res.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw TransientError(std::string("unexpected chat response shape: ") + e.what());
  }
}

OpenAIEmbedder::OpenAIEmbedder(EmbedderEndpoint endpoint, std::string api_key)
    : endpoint_(std::move(endpoint)), api_key_(std::move(api_key)) {
  split_url(endpoint_.base_url);
  if (endpoint_.model.empty()) throw ConfigError("embedder endpoint needs a model");
  if (endpoint_.dimension == 0) throw ConfigError("embedder dimension must be >= 1");
}

std::vector<Vector> OpenAIEmbedder::embed_batch(std::span<const std::string> texts) {
  const json body = {{"model", endpoint_.model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
  const json res = post_json(endpoint_.base_url, "/embeddings", api_key_, endpoint_.timeout_seconds, body);
  std::vector<Vector> out(texts.size());
  try {
    const auto& data = res.at("data");
    if (data.size() != texts.size()) throw EmbeddingError("embedding response has the wrong number of vectors");
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::size_t index = data[i].value("index", i);
      if (index >= out.size()) throw EmbeddingError("embedding response index out of range");
      out[index] = data[i].at("embedding").get<Vector>();
    }
  } catch (const json::exception& e) {
    throw TransientError(std::string("unexpected embedding response shape: ") + e.what());
  }
  return out;
}

std::shared_ptr<ChatProvider> make_chat_provider(const ChatEndpoint& endpoint,
                                                 const std::shared_ptr<MockProvider>& mock) {
  if (endpoint.provider == "mock") return mock;
  if (endpoint.provider == "openai")
    return std::make_shared<OpenAIChatProvider>(endpoint, api_key_from_env(endpoint.api_key_env));
  throw ConfigError("unknown chat provider \"" + endpoint.provider + "\"");
}

ProviderSet make_providers(const ProviderConfig& config, bool force_mock) {
  ProviderSet set;
  set.mock = std::make_shared<MockProvider>(config.mock);
  if (config.mock_script) set.mock->add_script(load_script(*config.mock_script));
  GatewayOptions opts;
  opts.retry.max_retries = config.max_retries;
  opts.max_in_flight = config.max_in_flight;
  if (force_mock) {
    set.gateway = std::make_unique<Gateway>(set.mock, opts);
  } else {
    set.gateway = std::make_unique<Gateway>(make_chat_provider(config.chat, set.mock), opts);
    for (const auto& [role, endpoint] : config.roles) set.gateway->set_provider(role, make_chat_provider(endpoint, set.mock));
  }
  const auto& e = config.embedder;
  if (e.provider == "mock-lexical")
    set.embedder = std::make_unique<LexicalEmbedder>(e.dimension, e.seed);
  else if (e.provider == "mock-hash" || force_mock)
    set.embedder = std::make_unique<MockEmbedder>(e.provider == "mock-hash" ? e.dimension : 64, e.seed);
  else if (e.provider == "openai")
    set.embedder = std::make_unique<OpenAIEmbedder>(e, api_key_from_env(e.api_key_env));
  else
    throw ConfigError("unknown embedder provider \"" + e.provider + "\"");
  return set;
}

}  // namespace scihier
