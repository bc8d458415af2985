#pragma once

// Requires cpp-httplib; define CPPHTTPLIB_OPENSSL_SUPPORT before including
// for https endpoints.

#include <cstdlib>
#include <string>

#include <httplib.h>

#include "pacit/error.hpp"
#include "pacit/selfinstruct.hpp"

namespace pacit {

/// OpenAI-style chat-completions endpoint over HTTP(S).
class HttpTransport final : public CompletionTransport {
public:
  explicit HttpTransport(const GenerationConfig& cfg) : endpoint_(cfg.endpoint) {
    const auto scheme_end = endpoint_.find("://");
    if (scheme_end == std::string::npos)
      throw ValidationError("generation endpoint must be an absolute URL: " + endpoint_);
    const auto path_start = endpoint_.find('/', scheme_end + 3);
    base_ = endpoint_.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : endpoint_.substr(path_start);
    if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key) api_key_ = key;
    timeout_ = cfg.request_timeout;
  }

  std::string complete(const ChatRequest& request) override {
    httplib::Client cli(base_);
    const auto secs = static_cast<time_t>(timeout_);
    const auto usecs = static_cast<time_t>((timeout_ - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    auto res = cli.Post(path_, headers, chat_request_body(request).dump(), "application/json");
    if (!res)
      throw TransportError("request to " + endpoint_ + " failed: " + httplib::to_string(res.error()),
                           0, true);
    if (res->status != 200) {
      const bool transient = res->status == 429 || res->status >= 500;
      std::string body = res->body.substr(0, 512);
      throw TransportError("HTTP " + std::to_string(res->status) + " from " + endpoint_ + ": " + body,
                           res->status, transient);
    }
    try {
      return parse_chat_response(res->body);
    } catch (const ParseError& e) {
      throw TransportError(std::string(e.what()) + " (" + endpoint_ + ")", res->status, true);
    }
  }

  std::string describe() const override { return "http"; }

private:
  std::string endpoint_;
  std::string base_;
  std::string path_;
  std::string api_key_;
  double timeout_ = 60.0;
};

}  // namespace pacit
