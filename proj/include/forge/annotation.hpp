#pragma once

// Human-rating sessions: sampling, per-rater progress, an append-only event
// log per session, and the HTTP API in front of it.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "forge/casegen.hpp"
#include "forge/eval.hpp"

namespace forge::annotation {

struct Session {
  std::string session_id;
  Framework framework = Framework::eu_ai_act();
  std::string dataset_digest;
  std::vector<std::string> case_ids;
  std::size_t sample_size = 50;
  std::uint64_t rng_seed = 0;
  std::string created_at;

  Json to_json() const;
  static Session from_json(const Json& j);
};

struct RatingEvent {
  std::string session_id;
  std::string case_id;
  std::string rater;
  int alignment = 0;
  int coherence = 0;
  int relevance = 0;
  std::int64_t timestamp_ms = 0;  // server clock at acceptance
  std::uint64_t seq = 0;          // position in the session log, 1-based

  void validate() const;  // ValidationError on a missing rater or a score outside 1..5
  Json to_json() const;
  static RatingEvent from_json(const Json& j);
};

// Latest event per (rater, case) by (timestamp, seq), expanded into one
// rating per dimension and aggregated. Order of `events` does not matter.
eval::HumanEvalReport aggregate_events(std::span<const RatingEvent> events);

// Deterministic sample: framework-matching cases ordered by a seeded hash.
std::vector<std::string> sample_cases(std::span<const casegen::CaseRecord> dataset, const Framework& fw,
                                      std::size_t sample_size, std::uint64_t rng_seed);

class AnnotationStore {
 public:
  // Existing sessions under `dir` are loaded, so a restarted server resumes.
  // `seed_texts` maps seed_id -> rendered seed text shown next to each case.
  AnnotationStore(std::filesystem::path dir, std::vector<casegen::CaseRecord> dataset,
                  std::map<std::string, std::string> seed_texts = {});

  // Same framework / size / seed on the same dataset returns the existing session.
  Session create_session(const Framework& fw, std::size_t sample_size, std::uint64_t rng_seed);
  Session session(const std::string& session_id) const;  // NotFoundError
  std::vector<Session> sessions() const;

  // {"done": false, "index", "total", "rated", "case": {...}, "seed_text"} or
  // {"done": true, "rated", "total"}. With rerate the case at `index` is
  // returned even if already rated.
  Json next_case(const std::string& session_id, const std::string& rater, bool rerate = false,
                 std::size_t index = 0) const;

  // Validates, stamps timestamp and seq, appends to the log. Returns the event as stored.
  RatingEvent submit(RatingEvent event);

  std::vector<RatingEvent> events(const std::string& session_id) const;
  eval::HumanEvalReport report(const std::string& session_id) const;
  Json report_json(const std::string& session_id) const;

  std::filesystem::path log_path(const std::string& session_id) const;

 private:
  struct SessionState {
    Session session;
    std::vector<RatingEvent> events;
    mutable std::mutex mu;
  };
  SessionState& state(const std::string& session_id) const;

  std::filesystem::path dir_;
  std::vector<casegen::CaseRecord> dataset_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, std::string> seed_texts_;
  std::string digest_;
  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::unique_ptr<SessionState>> sessions_;
};

class AnnotationServer {
 public:
  AnnotationServer(AnnotationStore& store, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  // Port 0 picks a free one. Returns the bound port.
  int bind(const std::string& host, int port);
  void listen();            // blocks until stop()
  void start_background();  // listen() on a worker thread
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace forge::annotation
