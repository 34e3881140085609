#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "p2t/errors.hpp"
#include "p2t/llm_backend.hpp"

namespace p2t {
namespace {

class HttpLibTransport final : public Transport {
 public:
  HttpResponse post(const std::string& url,
                    const std::vector<std::pair<std::string, std::string>>& headers,
                    const std::string& body, std::chrono::milliseconds timeout) override {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base_url lacks a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());

    httplib::Headers hdrs;
    for (const auto& [name, value] : headers) hdrs.emplace(name, value);
    auto result = client.Post(path, hdrs, body, "application/json");
    if (!result) throw TransportError("HTTP transport error: " + httplib::to_string(result.error()));
    return {result->status, result->body};
  }
};

}  // namespace

std::unique_ptr<Transport> make_http_transport() { return std::make_unique<HttpLibTransport>(); }

}  // namespace p2t
