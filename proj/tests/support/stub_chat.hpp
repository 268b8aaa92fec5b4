#pragma once

// In-process chat-completion server for tests. Binds 127.0.0.1 on an
// ephemeral port; replies come from a caller-supplied handler.

#include <atomic>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "forge/common.hpp"
#include "httplib.h"

namespace forge::testing {

struct StubReply {
  int status = 200;
  std::string content;  // wrapped into choices[0].message.content
  std::string raw_body;  // sent verbatim instead when non-empty
};

class StubChatServer {
 public:
  using Handler = std::function<StubReply(const Json& request, std::size_t call_index)>;

  explicit StubChatServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post(R"(.*/chat/completions)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::size_t idx = calls_++;
      Json body = Json::parse(req.body, nullptr, false);
      {
        std::lock_guard lk(mu_);
        requests_.push_back(body);
        auth_headers_.push_back(req.get_header_value("Authorization"));
      }
      const int now = ++in_flight_;
      int prev = peak_.load();
      while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
      }
      if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
      StubReply r = handler_(body, idx);
      --in_flight_;
      res.status = r.status;
      if (!r.raw_body.empty()) {
        res.set_content(r.raw_body, "application/json");
      } else {
        Json out{{"id", "stub-" + std::to_string(idx)},
                 {"object", "chat.completion"},
                 {"choices", Json::array({Json{{"index", 0},
                                               {"message", Json{{"role", "assistant"}, {"content", r.content}}},
                                               {"finish_reason", "stop"}}})}};
        res.set_content(out.dump(), "application/json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubChatServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }
  StubChatServer(const StubChatServer&) = delete;
  StubChatServer& operator=(const StubChatServer&) = delete;

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  std::size_t calls() const { return calls_.load(); }
  int peak_in_flight() const { return peak_.load(); }
  void set_delay_ms(int ms) { delay_ms_ = ms; }
  std::vector<Json> requests() const {
    std::lock_guard lk(mu_);
    return requests_;
  }
  std::vector<std::string> auth_headers() const {
    std::lock_guard lk(mu_);
    return auth_headers_;
  }

 private:
  Handler handler_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<std::size_t> calls_{0};
  std::atomic<int> in_flight_{0}, peak_{0};
  std::atomic<int> delay_ms_{0};
  mutable std::mutex mu_;
  std::vector<Json> requests_;
  std::vector<std::string> auth_headers_;
};

inline std::string prompt_of(const Json& request) {
  return request.at("messages").at(0).at("content").get<std::string>();
}

// Deterministic stand-in for a real model: answers each prompt family in the
// format the pipeline expects. Verdicts are right unless the case text hashes
// into the "wrong" bucket, so scores are non-trivial but reproducible.
inline StubReply scripted_model(const Json& request, std::size_t) {
  const std::string prompt = prompt_of(request);
  const std::string tag = sha256_hex(prompt).substr(0, 8);
  if (prompt.find("generating realistic legal case scenarios") != std::string::npos) {
    const bool prohibited = prompt.find("represent prohibited samples") != std::string::npos;
    const std::string lean = prohibited ? "prohibited" : "permitted";
    Json c{{"parties_involved", "Plaintiff: a consumer association. Defendant: Vendor " + tag + "."},
           {"factual_background", "Vendor " + tag + " deployed an AI system; the facts lean " + lean + "."},
           {"legal_issues", "Whether the deployment by vendor " + tag + " is lawful."},
           {"arguments", "The plaintiff alleges harm; the defendant cites safeguards."},
           {"jurisdiction", "Court of Justice of the European Union"}};
    return {200, "Here is the case:\n```json\n" + c.dump(2) + "\n```\n", ""};
  }
  if (prompt.find("Decide whether the case below is prohibited or permitted") != std::string::npos) {
    const bool lean_prohibited = prompt.find("lean prohibited") != std::string::npos;
    const bool flip = std::stoul(tag.substr(0, 2), nullptr, 16) % 4 == 0;
    const bool say_prohibited = lean_prohibited != flip;
    return {200, std::string("<think>Checking the facts against the obligations.</think>\nConclusion reached.\n\\boxed{\"") +
                     (say_prohibited ? "prohibited" : "permitted") + "\"}",
            ""};
  }
  if (prompt.find("determine which chapter") != std::string::npos)
    return {200, "Reasoning omitted.\nboxed{\"result\": \"Chapter II: Prohibited AI Practices\"}", ""};
  if (prompt.find("generate a legal case for") != std::string::npos)
    return {200, "Factual Background: A retailer " + tag + " profiled shoppers.\nLegal Analyzing: The profiling is examined.", ""};
  return {200, "unrecognized prompt", ""};
}

}  // namespace forge::testing
