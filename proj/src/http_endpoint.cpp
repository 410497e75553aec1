#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "rtriage/error.hpp"
#include "rtriage/summarizer.hpp"

namespace rtriage {

HttpEndpoint::HttpEndpoint(EndpointConfig config) : config_(std::move(config)) {
  if (!config_.api_key_env.empty())
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

std::string HttpEndpoint::complete(const std::string& prompt) {
  nlohmann::json body{{"model", config_.model},
                      {"temperature", config_.temperature},
                      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
  const std::string payload = body.dump();
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(config_.retry_backoff_ms) * (1 << (attempt - 1)));
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_write_timeout(config_.timeout_seconds, 0);
    auto res = client.Post(config_.path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw EndpointError("completion endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body);
    auto reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) throw EndpointError("completion endpoint returned non-JSON body");
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw EndpointError("completion response has no choices[0].message.content");
    }
  }
  throw EndpointError("completion endpoint unreachable after " + std::to_string(config_.max_retries + 1) +
                      " attempts (" + last_error + ")");
}

}  // namespace rtriage
