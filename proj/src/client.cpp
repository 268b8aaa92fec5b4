#include "forge/client.hpp"

#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <regex>
#include <thread>

#include "httplib.h"

namespace forge {
namespace {

// Process-wide gate. Each caller passes its own limit, so clients with
// different max_parallel settings still never exceed the tighter one while
// they are the ones waiting.
class InFlightGate {
 public:
  void acquire(std::size_t limit) {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return count_ < limit; });
    ++count_;
    peak_ = std::max(peak_, count_);
  }
  void release() {
    {
      std::lock_guard lk(mu_);
      --count_;
    }
    cv_.notify_all();
  }
  std::size_t count() {
    std::lock_guard lk(mu_);
    return count_;
  }
  std::size_t peak() {
    std::lock_guard lk(mu_);
    return peak_;
  }
  void reset_peak() {
    std::lock_guard lk(mu_);
    peak_ = count_;
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t count_ = 0, peak_ = 0;
};

InFlightGate& gate() {
  static InFlightGate g;
  return g;
}

struct GateSlot {
  explicit GateSlot(std::size_t limit) { gate().acquire(limit); }
  ~GateSlot() { gate().release(); }
  GateSlot(const GateSlot&) = delete;
  GateSlot& operator=(const GateSlot&) = delete;
};

bool retryable(int status) { return status == 429 || (status >= 500 && status <= 599); }

}  // namespace

std::size_t requests_in_flight() { return gate().count(); }
std::size_t peak_requests_in_flight() { return gate().peak(); }
void reset_peak_requests_in_flight() { gate().reset_peak(); }

void ClientConfig::validate() const {
  if (base_url.empty()) throw ConfigError("client.base_url is empty");
  if (model_name.empty()) throw ConfigError("client.model_name is empty");
  if (!(temperature >= 0.0)) throw ConfigError("client.temperature must be >= 0");
  if (max_tokens <= 0) throw ConfigError("client.max_tokens must be positive");
  if (max_retries < 0) throw ConfigError("client.max_retries must be >= 0");
  if (backoff_base.count() < 0) throw ConfigError("client.backoff_base_ms must be >= 0");
  if (max_parallel < 1) throw ConfigError("client.max_parallel must be >= 1");
  if (timeout.count() <= 0) throw ConfigError("client.timeout_s must be positive");
}

Json ClientConfig::to_json() const {
  return Json{{"base_url", base_url},
              {"model_name", model_name},
              {"temperature", temperature},
              {"max_tokens", max_tokens},
              {"max_retries", max_retries},
              {"backoff_base_ms", backoff_base.count()},
              {"max_parallel", max_parallel},
              {"api_key_env", api_key_env},
              {"timeout_s", timeout.count()}};
}

ClientConfig ClientConfig::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("client config must be a JSON object");
  ClientConfig c;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "base_url") c.base_url = v.get<std::string>();
      else if (k == "model_name") c.model_name = v.get<std::string>();
      else if (k == "temperature") c.temperature = v.get<double>();
      else if (k == "max_tokens") c.max_tokens = v.get<int>();
      else if (k == "max_retries") c.max_retries = v.get<int>();
      else if (k == "backoff_base_ms") c.backoff_base = std::chrono::milliseconds(v.get<long>());
      else if (k == "max_parallel") c.max_parallel = v.get<int>();
      else if (k == "api_key_env") c.api_key_env = v.get<std::string>();
      else if (k == "timeout_s") c.timeout = std::chrono::seconds(v.get<long>());
      else throw ConfigError("unknown client config key '" + k + "'");
    }
  } catch (const Json::type_error& e) {
    throw ConfigError(std::string("client config: ") + e.what());
  }
  c.validate();
  return c;
}

ChatClient::ChatClient(ClientConfig config) : config_(std::move(config)) {
  config_.validate();
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.base_url, m, url)) throw ConfigError("client.base_url is not an http(s) URL: " + config_.base_url);
  scheme_host_port_ = m[1];
  path_prefix_ = m[2].matched ? m[2].str() : "";
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string ChatClient::complete(const std::string& prompt) const {
  const Json body{{"model", config_.model_name},
                  {"messages", Json::array({Json{{"role", "user"}, {"content", prompt}}})},
                  {"temperature", config_.temperature},
                  {"max_tokens", config_.max_tokens}};
  const std::string payload = body.dump();
  const std::string path = path_prefix_ + "/chat/completions";

  httplib::Headers headers;
  if (!config_.api_key_env.empty())
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config_.backoff_base * (1L << (attempt - 1)));
    ++attempts_;
    httplib::Result res;
    {
      GateSlot slot(static_cast<std::size_t>(config_.max_parallel));
      httplib::Client cli(scheme_host_port_);
      cli.set_connection_timeout(config_.timeout);
      cli.set_read_timeout(config_.timeout);
      cli.set_write_timeout(config_.timeout);
      res = cli.Post(path, headers, payload, "application/json");
    }
    if (!res) {
      last_error = "request to " + scheme_host_port_ + path + " failed: " + httplib::to_string(res.error());
      continue;
    }
    if (retryable(res->status)) {
      last_error = "HTTP " + std::to_string(res->status) + " from " + scheme_host_port_ + path;
      continue;
    }
    if (res->status < 200 || res->status > 299)
      throw TransportError("HTTP " + std::to_string(res->status) + " from " + scheme_host_port_ + path + ": " +
                           res->body.substr(0, 200));
    Json parsed = Json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) throw ProtocolError("response body is not JSON");
    try {
      const auto& content = parsed.at("choices").at(0).at("message").at("content");
      if (!content.is_string()) throw ProtocolError("choices[0].message.content is not a string");
      return content.get<std::string>();
    } catch (const Json::exception&) {
      throw ProtocolError("response lacks choices[0].message.content");
    }
  }
  throw TransportError("giving up after " + std::to_string(config_.max_retries + 1) + " attempts: " + last_error);
}

}  // namespace forge
