#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace p2t {

enum class BackendKind { kHttpChat, kReplay, kScripted };

std::string_view to_string(BackendKind kind);
BackendKind parse_backend_kind(std::string_view text);

inline constexpr int kClassificationMaxTokens = 16;
inline constexpr int kRegressionMaxTokens = 32;
inline constexpr std::string_view kApiKeyEnv = "P2T_API_KEY";

struct DecodeParams {
  double temperature = 0.0;
  int max_tokens = kClassificationMaxTokens;
  bool operator==(const DecodeParams&) const = default;
};

struct BackendConfig {
  BackendKind kind = BackendKind::kReplay;
  std::string model_name = "gpt-3.5-turbo";
  double temperature = 0.0;
  std::optional<int> max_tokens;  // unset: 16 for labels and features, 32 for numbers
  std::string base_url = "https://api.openai.com/v1";
  std::chrono::milliseconds timeout{60'000};
  int retries = 3;
  std::optional<std::uint64_t> token_budget;  // estimated tokens for uncached calls

  DecodeParams decode(int default_max_tokens) const {
    return {temperature, max_tokens.value_or(default_max_tokens)};
  }

  static BackendConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct ChatExchange {
  std::string key;
  std::string prompt;
  std::string response;
  std::string model;
  DecodeParams params;
  std::string timestamp;  // ISO-8601 UTC
  bool truncated = false;

  nlohmann::json to_json() const;
  static ChatExchange from_json(const nlohmann::json& j);
};

// SHA-256 hex digest of the canonical request {model, prompt, temperature, max_tokens}.
std::string cache_key(std::string_view prompt, std::string_view model, const DecodeParams& params);

// Whitespace-and-punctuation token count: every maximal alphanumeric run is
// one token, every other non-space character is one token.
std::size_t estimate_tokens(std::string_view text);

// Append-only JSON-lines store of exchanges. Thread-safe. An empty path keeps
// the store in memory only. Replay files use the same format.
class ExchangeStore {
 public:
  ExchangeStore() = default;
  explicit ExchangeStore(std::filesystem::path path);

  ExchangeStore(const ExchangeStore&) = delete;
  ExchangeStore& operator=(const ExchangeStore&) = delete;

  std::optional<ChatExchange> find(const std::string& key) const;
  // First write for a key wins; later writes of the same key are ignored.
  void put(const ChatExchange& exchange);
  std::size_t size() const;
  std::vector<ChatExchange> all() const;  // insertion order
  const std::filesystem::path& path() const { return path_; }

  // Rewrites `path` with exactly `exchanges`.
  static void write_file(const std::filesystem::path& path, const std::vector<ChatExchange>& exchanges);
  static std::vector<ChatExchange> read_file(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::vector<ChatExchange> order_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Raised by transports for connection-level failures (retried).
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& url,
                            const std::vector<std::pair<std::string, std::string>>& headers,
                            const std::string& body, std::chrono::milliseconds timeout) = 0;
};

// cpp-httplib client; https needs the build's OpenSSL support.
std::unique_ptr<Transport> make_http_transport();

struct Completion {
  std::string text;
  bool truncated = false;
  bool from_cache = false;
  std::string key;
};

using ScriptFn = std::function<std::string(std::string_view prompt)>;

// Completion client with content-addressed caching and at-most-one live call
// per key. The cache is consulted first for every backend kind.
class LlmClient {
 public:
  // http_chat: needs a transport. The API key is read from P2T_API_KEY when
  // the first network call is made.
  static LlmClient http(BackendConfig config, std::shared_ptr<ExchangeStore> cache,
                        std::shared_ptr<Transport> transport);
  static LlmClient replay(BackendConfig config, std::shared_ptr<ExchangeStore> store);
  static LlmClient scripted(BackendConfig config, ScriptFn script,
                            std::shared_ptr<ExchangeStore> cache = nullptr);

  LlmClient(LlmClient&&) noexcept;
  LlmClient& operator=(LlmClient&&) noexcept;
  ~LlmClient();

  Completion complete(std::string_view prompt, const DecodeParams& params);

  const BackendConfig& config() const;
  const ExchangeStore& cache() const;
  std::size_t network_calls() const;
  std::size_t backend_calls() const;   // cache misses served by the backend
  std::uint64_t tokens_spent() const;  // estimated tokens of backend calls

 private:
  struct State;
  explicit LlmClient(std::unique_ptr<State> state);
  Completion invoke(std::string_view prompt, const DecodeParams& params, const std::string& key);
  std::unique_ptr<State> state_;
};

// Scripted oracle: the first rule whose needle occurs in the prompt answers.
class LookupScript {
 public:
  LookupScript& when(std::string needle, std::string answer);
  LookupScript& otherwise(std::string answer);
  std::string operator()(std::string_view prompt) const;

 private:
  std::vector<std::pair<std::string, std::string>> rules_;
  std::string fallback_;
};

}  // namespace p2t
