#pragma once

// Minimal chat-completion client: POST {base_url}/chat/completions with a
// single user message, bounded process-wide concurrency and retry with
// exponential backoff on 429 / 5xx / connection failures.

#include <atomic>
#include <chrono>
#include <string>

#include "forge/common.hpp"

namespace forge {

struct ClientConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model_name = "deepseek-v3.1";
  double temperature = 0.7;
  int max_tokens = 2048;
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{500};
  int max_parallel = 4;
  std::string api_key_env = "FORGE_API_KEY";
  std::chrono::seconds timeout{120};

  void validate() const;  // throws ConfigError
  Json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static ClientConfig from_json(const Json& j);
};

class ChatClient {
 public:
  explicit ChatClient(ClientConfig config);

  // Returns choices[0].message.content. Throws TransportError once retries are
  // exhausted and ProtocolError on a malformed success body.
  std::string complete(const std::string& prompt) const;

  const ClientConfig& config() const noexcept { return config_; }
  // HTTP attempts made by this client so far (retries included).
  std::size_t attempts() const noexcept { return attempts_.load(); }

 private:
  ClientConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  mutable std::atomic<std::size_t> attempts_{0};
};

// Requests currently in flight across every client in the process.
std::size_t requests_in_flight();
std::size_t peak_requests_in_flight();
void reset_peak_requests_in_flight();

}  // namespace forge
