#include "p2t/llm_backend.hpp"

#include <cctype>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <thread>

#include <openssl/evp.h>

#include "p2t/errors.hpp"

namespace p2t {
namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::kHttpChat: return "http_chat";
    case BackendKind::kReplay: return "replay";
    case BackendKind::kScripted: return "scripted";
  }
  return "unknown";
}

BackendKind parse_backend_kind(std::string_view text) {
  if (text == "http_chat") return BackendKind::kHttpChat;
  if (text == "replay") return BackendKind::kReplay;
  if (text == "scripted") return BackendKind::kScripted;
  throw ConfigError("unknown backend kind '" + std::string(text) + "'");
}

BackendConfig BackendConfig::from_json(const nlohmann::json& j) {
  BackendConfig cfg;
  try {
    if (j.contains("kind")) cfg.kind = parse_backend_kind(j.at("kind").get<std::string>());
    cfg.model_name = j.value("model", cfg.model_name);
    cfg.temperature = j.value("temperature", cfg.temperature);
    if (j.contains("max_tokens") && !j.at("max_tokens").is_null()) {
      cfg.max_tokens = j.at("max_tokens").get<int>();
    }
    cfg.base_url = j.value("base_url", cfg.base_url);
    cfg.timeout = std::chrono::milliseconds(j.value("timeout_ms", cfg.timeout.count()));
    cfg.retries = j.value("retries", cfg.retries);
    if (j.contains("token_budget") && !j.at("token_budget").is_null()) {
      cfg.token_budget = j.at("token_budget").get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed backend config: ") + e.what());
  }
  if (cfg.temperature < 0) throw ConfigError("temperature must be >= 0");
  if (cfg.retries < 0) throw ConfigError("retries must be >= 0");
  return cfg;
}

nlohmann::json BackendConfig::to_json() const {
  nlohmann::json j = {{"kind", to_string(kind)},
                      {"model", model_name},
                      {"temperature", temperature},
                      {"base_url", base_url},
                      {"timeout_ms", timeout.count()},
                      {"retries", retries}};
  j["max_tokens"] = max_tokens ? nlohmann::json(*max_tokens) : nlohmann::json();
  j["token_budget"] = token_budget ? nlohmann::json(*token_budget) : nlohmann::json();
  return j;
}

nlohmann::json ChatExchange::to_json() const {
  return {{"key", key},
          {"model", model},
          {"temperature", params.temperature},
          {"max_tokens", params.max_tokens},
          {"prompt", prompt},
          {"response", response},
          {"truncated", truncated},
          {"timestamp", timestamp}};
}

ChatExchange ChatExchange::from_json(const nlohmann::json& j) {
  ChatExchange ex;
  ex.model = j.at("model").get<std::string>();
  ex.params.temperature = j.at("temperature").get<double>();
  ex.params.max_tokens = j.at("max_tokens").get<int>();
  ex.prompt = j.at("prompt").get<std::string>();
  ex.response = j.at("response").get<std::string>();
  ex.truncated = j.value("truncated", false);
  ex.timestamp = j.value("timestamp", std::string());
  ex.key = j.value("key", std::string());
  if (ex.key.empty()) ex.key = cache_key(ex.prompt, ex.model, ex.params);
  return ex;
}

std::string cache_key(std::string_view prompt, std::string_view model, const DecodeParams& params) {
  // nlohmann::json objects serialize with sorted keys, which makes this canonical.
  const nlohmann::json canonical = {{"max_tokens", params.max_tokens},
                                    {"model", model},
                                    {"prompt", prompt},
                                    {"temperature", params.temperature}};
  return sha256_hex(canonical.dump());
}

std::size_t estimate_tokens(std::string_view text) {
  std::size_t count = 0;
  bool in_word = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    // Bytes >= 0x80 are treated as word characters (UTF-8 continuation).
    if (std::isalnum(c) || c >= 0x80) {
      if (!in_word) ++count;
      in_word = true;
    } else {
      in_word = false;
      if (!std::isspace(c)) ++count;
    }
  }
  return count;
}

ExchangeStore::ExchangeStore(std::filesystem::path path) : path_(std::move(path)) {
  if (!path_.empty() && std::filesystem::exists(path_)) {
    for (auto& ex : read_file(path_)) {
      if (index_.emplace(ex.key, order_.size()).second) order_.push_back(std::move(ex));
    }
  }
}

std::optional<ChatExchange> ExchangeStore::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  const auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return order_[it->second];
}

void ExchangeStore::put(const ChatExchange& exchange) {
  std::lock_guard lock(mutex_);
  if (!index_.emplace(exchange.key, order_.size()).second) return;
  order_.push_back(exchange);
  if (path_.empty()) return;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw ConfigError("cannot append to cache file " + path_.string());
  out << exchange.to_json().dump() << '\n';
}

std::size_t ExchangeStore::size() const {
  std::lock_guard lock(mutex_);
  return order_.size();
}

std::vector<ChatExchange> ExchangeStore::all() const {
  std::lock_guard lock(mutex_);
  return order_;
}

void ExchangeStore::write_file(const std::filesystem::path& path,
                               const std::vector<ChatExchange>& exchanges) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& ex : exchanges) out << ex.to_json().dump() << '\n';
}

std::vector<ChatExchange> ExchangeStore::read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open exchange file " + path.string());
  std::vector<ChatExchange> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(ChatExchange::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

struct LlmClient::State {
  BackendConfig config;
  std::shared_ptr<ExchangeStore> cache;
  std::shared_ptr<Transport> transport;
  ScriptFn script;

  std::mutex inflight_mutex;
  std::map<std::string, std::shared_future<Completion>> inflight;

  std::mutex budget_mutex;
  std::uint64_t tokens_spent = 0;

  std::atomic<std::size_t> network_calls{0};
  std::atomic<std::size_t> backend_calls{0};
  std::optional<std::string> api_key;
};

LlmClient::LlmClient(std::unique_ptr<State> state) : state_(std::move(state)) {
  if (!state_->cache) state_->cache = std::make_shared<ExchangeStore>();
}
LlmClient::LlmClient(LlmClient&&) noexcept = default;
LlmClient& LlmClient::operator=(LlmClient&&) noexcept = default;
LlmClient::~LlmClient() = default;

LlmClient LlmClient::http(BackendConfig config, std::shared_ptr<ExchangeStore> cache,
                          std::shared_ptr<Transport> transport) {
  if (!transport) throw ConfigError("http_chat backend needs a transport");
  auto state = std::make_unique<State>();
  config.kind = BackendKind::kHttpChat;
  state->config = std::move(config);
  state->cache = std::move(cache);
  state->transport = std::move(transport);
  return LlmClient(std::move(state));
}

LlmClient LlmClient::replay(BackendConfig config, std::shared_ptr<ExchangeStore> store) {
  auto state = std::make_unique<State>();
  config.kind = BackendKind::kReplay;
  state->config = std::move(config);
  state->cache = std::move(store);
  return LlmClient(std::move(state));
}

LlmClient LlmClient::scripted(BackendConfig config, ScriptFn script,
                              std::shared_ptr<ExchangeStore> cache) {
  if (!script) throw ConfigError("scripted backend needs a script");
  auto state = std::make_unique<State>();
  config.kind = BackendKind::kScripted;
  state->config = std::move(config);
  state->cache = std::move(cache);
  state->script = std::move(script);
  return LlmClient(std::move(state));
}

const BackendConfig& LlmClient::config() const { return state_->config; }
const ExchangeStore& LlmClient::cache() const { return *state_->cache; }
std::size_t LlmClient::network_calls() const { return state_->network_calls.load(); }
std::size_t LlmClient::backend_calls() const { return state_->backend_calls.load(); }
std::uint64_t LlmClient::tokens_spent() const {
  std::lock_guard lock(state_->budget_mutex);
  return state_->tokens_spent;
}

Completion LlmClient::complete(std::string_view prompt, const DecodeParams& params) {
  if (prompt.empty()) throw Error("empty prompt");
  State& s = *state_;
  const std::string key = cache_key(prompt, s.config.model_name, params);
  if (auto hit = s.cache->find(key)) {
    return {hit->response, hit->truncated, true, key};
  }
  if (s.config.kind == BackendKind::kReplay) throw ReplayMiss(key);

  std::promise<Completion> promise;
  std::shared_future<Completion> future;
  bool owner = false;
  {
    std::lock_guard lock(s.inflight_mutex);
    if (auto it = s.inflight.find(key); it != s.inflight.end()) {
      future = it->second;
    } else {
      future = promise.get_future().share();
      s.inflight.emplace(key, future);
      owner = true;
    }
  }
  if (!owner) {
    Completion c = future.get();
    c.from_cache = true;
    return c;
  }

  try {
    // A racing caller may have finished between our cache probe and the
    // in-flight registration.
    Completion c;
    if (auto hit = s.cache->find(key)) {
      c = {hit->response, hit->truncated, true, key};
    } else {
      c = invoke(prompt, params, key);
    }
    promise.set_value(c);
  } catch (...) {
    promise.set_exception(std::current_exception());
  }
  {
    std::lock_guard lock(s.inflight_mutex);
    s.inflight.erase(key);
  }
  return future.get();
}

Completion LlmClient::invoke(std::string_view prompt, const DecodeParams& params,
                             const std::string& key) {
  State& s = *state_;
  const std::uint64_t cost = estimate_tokens(prompt) + static_cast<std::uint64_t>(params.max_tokens);
  {
    std::lock_guard lock(s.budget_mutex);
    if (s.config.token_budget && s.tokens_spent + cost > *s.config.token_budget) {
      throw BudgetExceeded("token budget of " + std::to_string(*s.config.token_budget) +
                           " would be exceeded (spent " + std::to_string(s.tokens_spent) +
                           ", next call ~" + std::to_string(cost) + ")");
    }
    s.tokens_spent += cost;
  }
  s.backend_calls.fetch_add(1);

  Completion c;
  c.key = key;
  if (s.config.kind == BackendKind::kScripted) {
    c.text = s.script(prompt);
  } else {
    if (!s.api_key) {
      const char* env = std::getenv(std::string(kApiKeyEnv).c_str());
      if (!env || !*env) {
        throw BackendUnavailable("environment variable " + std::string(kApiKeyEnv) + " is not set");
      }
      s.api_key = env;
    }
    const nlohmann::json body = {
        {"model", s.config.model_name},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
        {"temperature", params.temperature},
        {"max_tokens", params.max_tokens}};
    std::string url = s.config.base_url;
    while (!url.empty() && url.back() == '/') url.pop_back();
    url += "/chat/completions";
    const std::vector<std::pair<std::string, std::string>> headers = {
        {"Authorization", "Bearer " + *s.api_key}};

    HttpResponse response;
    std::string last_error;
    bool ok = false;
    for (int attempt = 0; attempt <= s.config.retries && !ok; ++attempt) {
      if (attempt) std::this_thread::sleep_for(std::chrono::milliseconds(250LL << (attempt - 1)));
      try {
        s.network_calls.fetch_add(1);
        response = s.transport->post(url, headers, body.dump(), s.config.timeout);
      } catch (const TransportError& e) {
        last_error = e.what();
        continue;
      }
      if (response.status == 429 || response.status >= 500) {
        last_error = "HTTP " + std::to_string(response.status);
        continue;
      }
      ok = true;
    }
    if (!ok) {
      throw BackendUnavailable("chat completion failed after " +
                               std::to_string(s.config.retries + 1) + " attempts: " + last_error);
    }
    if (response.status != 200) {
      throw BackendUnavailable("chat completion returned HTTP " + std::to_string(response.status) +
                               ": " + response.body.substr(0, 300));
    }
    try {
      const auto j = nlohmann::json::parse(response.body);
      const auto& choice = j.at("choices").at(0);
      c.text = choice.at("message").at("content").get<std::string>();
      c.truncated = choice.value("finish_reason", std::string()) == "length";
    } catch (const nlohmann::json::exception& e) {
      throw BackendUnavailable(std::string("malformed chat completion body: ") + e.what());
    }
  }

  ChatExchange ex;
  ex.key = key;
  ex.prompt = std::string(prompt);
  ex.response = c.text;
  ex.model = s.config.model_name;
  ex.params = params;
  ex.timestamp = utc_now();
  ex.truncated = c.truncated;
  s.cache->put(ex);
  return c;
}

LookupScript& LookupScript::when(std::string needle, std::string answer) {
  rules_.emplace_back(std::move(needle), std::move(answer));
  return *this;
}

LookupScript& LookupScript::otherwise(std::string answer) {
  fallback_ = std::move(answer);
  return *this;
}

std::string LookupScript::operator()(std::string_view prompt) const {
  for (const auto& [needle, answer] : rules_) {
    if (prompt.find(needle) != std::string_view::npos) return answer;
  }
  return fallback_;
}

}  // namespace p2t
