#include "forge/annotation.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <thread>

#include "httplib.h"

namespace forge::annotation {
namespace {

std::int64_t now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

int score_field(const Json& j, const char* key, std::vector<std::string>& bad) {
  if (!j.contains(key) || !j[key].is_number_integer()) {
    bad.emplace_back(key);
    return 0;
  }
  return j[key].get<int>();
}

}  // namespace

// --- types ---------------------------------------------------------------------

Json Session::to_json() const {
  return Json{{"session_id", session_id}, {"framework", framework.slug()}, {"dataset_digest", dataset_digest},
              {"case_ids", case_ids},     {"sample_size", sample_size},    {"rng_seed", rng_seed},
              {"created_at", created_at}};
}

Session Session::from_json(const Json& j) {
  try {
    Session s;
    s.session_id = j.at("session_id").get<std::string>();
    s.framework = Framework::from_string(j.at("framework").get<std::string>());
    s.dataset_digest = j.at("dataset_digest").get<std::string>();
    s.case_ids = j.at("case_ids").get<std::vector<std::string>>();
    s.sample_size = j.at("sample_size").get<std::size_t>();
    s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    s.created_at = j.value("created_at", "");
    return s;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed session record: ") + e.what());
  }
}

void RatingEvent::validate() const {
  std::vector<std::string> bad;
  if (is_blank(rater)) bad.emplace_back("rater");
  if (case_id.empty()) bad.emplace_back("case_id");
  for (auto [name, v] : {std::pair<const char*, int>{"alignment", alignment}, {"coherence", coherence}, {"relevance", relevance}})
    if (v < 1 || v > 5) bad.emplace_back(name);
  if (!bad.empty()) {
    std::string list;
    for (const auto& b : bad) list += (list.empty() ? "" : ", ") + b;
    throw ValidationError("invalid rating (scores must be integers 1..5): " + list, bad);
  }
}

Json RatingEvent::to_json() const {
  return Json{{"session_id", session_id}, {"case_id", case_id},     {"rater", rater},
              {"alignment", alignment},   {"coherence", coherence}, {"relevance", relevance},
              {"timestamp_ms", timestamp_ms}, {"seq", seq}};
}

RatingEvent RatingEvent::from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("rating must be a JSON object");
  std::vector<std::string> bad;
  RatingEvent e;
  for (auto [key, dst] : {std::pair<const char*, std::string*>{"session_id", &e.session_id}, {"case_id", &e.case_id}, {"rater", &e.rater}}) {
    if (!j.contains(key)) continue;
    if (!j[key].is_string()) bad.emplace_back(key);
    else *dst = j[key].get<std::string>();
  }
  e.alignment = score_field(j, "alignment", bad);
  e.coherence = score_field(j, "coherence", bad);
  e.relevance = score_field(j, "relevance", bad);
  if (!bad.empty()) throw ValidationError("rating fields must be strings / integer scores", bad);
  if (j.contains("timestamp_ms") && j["timestamp_ms"].is_number_integer()) e.timestamp_ms = j["timestamp_ms"].get<std::int64_t>();
  if (j.contains("seq") && j["seq"].is_number_unsigned()) e.seq = j["seq"].get<std::uint64_t>();
  return e;
}

eval::HumanEvalReport aggregate_events(std::span<const RatingEvent> events) {
  std::map<std::pair<std::string, std::string>, const RatingEvent*> latest;
  for (const auto& e : events) {
    auto& slot = latest[{e.rater, e.case_id}];
    if (!slot || std::tie(e.timestamp_ms, e.seq) > std::tie(slot->timestamp_ms, slot->seq)) slot = &e;
  }
  std::vector<eval::HumanRating> ratings;
  ratings.reserve(latest.size() * 3);
  for (const auto& [key, e] : latest) {
    ratings.push_back({e->rater, e->case_id, "alignment", e->alignment, ""});
    ratings.push_back({e->rater, e->case_id, "coherence", e->coherence, ""});
    ratings.push_back({e->rater, e->case_id, "relevance", e->relevance, ""});
  }
  return eval::human_eval_aggregate(ratings);
}

std::vector<std::string> sample_cases(std::span<const casegen::CaseRecord> dataset, const Framework& fw,
                                      std::size_t sample_size, std::uint64_t rng_seed) {
  if (sample_size == 0) throw ValidationError("sample_size must be positive");
  std::vector<std::pair<std::uint64_t, std::string>> keyed;
  std::set<std::string> seen;
  for (const auto& r : dataset)
    if (r.framework == fw && seen.insert(r.case_id).second) keyed.emplace_back(stable_hash64(r.case_id, rng_seed), r.case_id);
  if (keyed.empty()) throw ValidationError("dataset has no cases for framework " + fw.slug());
  std::sort(keyed.begin(), keyed.end());
  keyed.resize(std::min(sample_size, keyed.size()));
  std::vector<std::string> out;
  for (auto& [h, id] : keyed) out.push_back(std::move(id));
  return out;
}

// --- store -----------------------------------------------------------------------

AnnotationStore::AnnotationStore(std::filesystem::path dir, std::vector<casegen::CaseRecord> dataset,
                                 std::map<std::string, std::string> seed_texts)
    : dir_(std::move(dir)), dataset_(std::move(dataset)), seed_texts_(std::move(seed_texts)) {
  if (dataset_.empty()) throw ValidationError("annotation dataset is empty");
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < dataset_.size(); ++i) {
    by_id_.emplace(dataset_[i].case_id, i);
    ids.push_back(dataset_[i].case_id);
  }
  std::sort(ids.begin(), ids.end());
  std::string joined;
  for (const auto& id : ids) joined += id + "\n";
  digest_ = sha256_hex(joined);

  std::filesystem::create_directories(dir_);
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    const auto name = entry.path().filename().string();
    constexpr std::string_view kSuffix = ".session.json";
    if (name.size() <= kSuffix.size() || name.compare(name.size() - kSuffix.size(), kSuffix.size(), kSuffix) != 0) continue;
    auto st = std::make_unique<SessionState>();
    st->session = Session::from_json(Json::parse(read_file(entry.path())));
    // Sessions drawn from another dataset stay on disk but are not served.
    if (st->session.dataset_digest != digest_) continue;
    if (auto log = log_path(st->session.session_id); std::filesystem::exists(log))
      for (const auto& j : read_jsonl(log)) st->events.push_back(RatingEvent::from_json(j));
    sessions_.emplace(st->session.session_id, std::move(st));
  }
}

std::filesystem::path AnnotationStore::log_path(const std::string& session_id) const {
  return dir_ / (session_id + ".events.jsonl");
}

Session AnnotationStore::create_session(const Framework& fw, std::size_t sample_size, std::uint64_t rng_seed) {
  auto ids = sample_cases(dataset_, fw, sample_size, rng_seed);
  const std::string key = digest_ + "|" + fw.slug() + "|" + std::to_string(sample_size) + "|" + std::to_string(rng_seed);
  const std::string sid = "s-" + sha256_hex(key).substr(0, 16);
  std::unique_lock lk(sessions_mu_);
  if (auto it = sessions_.find(sid); it != sessions_.end()) return it->second->session;
  auto st = std::make_unique<SessionState>();
  st->session = Session{sid, fw, digest_, std::move(ids), sample_size, rng_seed, utc_timestamp()};
  write_file(dir_ / (sid + ".session.json"), st->session.to_json().dump(2) + "\n");
  Session out = st->session;
  sessions_.emplace(sid, std::move(st));
  return out;
}

AnnotationStore::SessionState& AnnotationStore::state(const std::string& session_id) const {
  std::shared_lock lk(sessions_mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFoundError("unknown session '" + session_id + "'");
  return *it->second;
}

Session AnnotationStore::session(const std::string& session_id) const { return state(session_id).session; }

std::vector<Session> AnnotationStore::sessions() const {
  std::shared_lock lk(sessions_mu_);
  std::vector<Session> out;
  for (const auto& [id, st] : sessions_) out.push_back(st->session);
  return out;
}

Json AnnotationStore::next_case(const std::string& session_id, const std::string& rater, bool rerate,
                                std::size_t index) const {
  if (is_blank(rater)) throw ValidationError("rater is required", {"rater"});
  auto& st = state(session_id);
  std::set<std::string> rated;
  {
    std::lock_guard lk(st.mu);
    for (const auto& e : st.events)
      if (e.rater == rater) rated.insert(e.case_id);
  }
  const auto& ids = st.session.case_ids;
  std::optional<std::size_t> pick;
  if (rerate) {
    if (index >= ids.size()) throw ValidationError("index " + std::to_string(index) + " is outside the session", {"index"});
    pick = index;
  } else {
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (!rated.count(ids[i])) {
        pick = i;
        break;
      }
  }
  Json out{{"session_id", session_id}, {"rater", rater}, {"rated", rated.size()}, {"total", ids.size()}};
  if (!pick) {
    out["done"] = true;
    return out;
  }
  const auto& rec = dataset_.at(by_id_.at(ids[*pick]));
  Json c = rec.narrative_json();
  c["case_id"] = rec.case_id;
  c["label"] = std::string(forge::to_string(rec.label));
  c["seed_id"] = rec.seed_id;
  out["done"] = false;
  out["index"] = *pick;
  out["case"] = c;
  auto seed = seed_texts_.find(rec.seed_id);
  out["seed_text"] = seed == seed_texts_.end() ? Json(nullptr) : Json(seed->second);
  return out;
}

RatingEvent AnnotationStore::submit(RatingEvent event) {
  event.validate();
  auto& st = state(event.session_id);
  const auto& ids = st.session.case_ids;
  if (std::find(ids.begin(), ids.end(), event.case_id) == ids.end())
    throw ValidationError("case '" + event.case_id + "' is not part of session " + event.session_id, {"case_id"});
  std::lock_guard lk(st.mu);
  event.seq = st.events.size() + 1;
  event.timestamp_ms = std::max(now_ms(), st.events.empty() ? std::int64_t{0} : st.events.back().timestamp_ms);
  std::ofstream out(log_path(event.session_id), std::ios::app | std::ios::binary);
  out << event.to_json().dump() << '\n';
  out.flush();
  if (!out) throw Error("io_error", "could not append to " + log_path(event.session_id).string());
  st.events.push_back(event);
  return event;
}

std::vector<RatingEvent> AnnotationStore::events(const std::string& session_id) const {
  auto& st = state(session_id);
  std::lock_guard lk(st.mu);
  return st.events;
}

eval::HumanEvalReport AnnotationStore::report(const std::string& session_id) const {
  const auto snapshot = events(session_id);
  return aggregate_events(snapshot);
}

Json AnnotationStore::report_json(const std::string& session_id) const {
  const auto snapshot = events(session_id);
  auto rep = aggregate_events(snapshot);
  Json j = rep.to_json();
  j["session_id"] = session_id;
  j["events"] = snapshot.size();
  Json dims = Json::object();
  for (const auto& d : eval::rating_dimensions())
    if (auto avg = rep.average(d)) dims[d] = *avg;
  j["dimension_averages"] = dims;
  return j;
}

// --- HTTP ------------------------------------------------------------------------

struct AnnotationServer::Impl {
  AnnotationStore& store;
  httplib::Server server;
  std::thread worker;
  explicit Impl(AnnotationStore& s) : store(s) {}
};

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message,
                const std::vector<std::string>& offending = {}) {
  Json err{{"kind", kind}, {"message", message}};
  if (!offending.empty()) err["offending"] = offending;
  send_json(res, status, Json{{"error", err}});
}

template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.kind(), e.what());
    } catch (const ValidationError& e) {
      send_error(res, 400, e.kind(), e.what(), e.offending());
    } catch (const ConfigError& e) {
      send_error(res, 400, e.kind(), e.what());
    } catch (const Json::exception& e) {
      send_error(res, 400, "parse_error", std::string("malformed JSON body: ") + e.what());
    } catch (const Error& e) {
      send_error(res, 500, e.kind(), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal_error", e.what());
    }
  };
}

Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  return Json::parse(req.body);
}

}  // namespace

AnnotationServer::AnnotationServer(AnnotationStore& store, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(store)) {
  auto& srv = impl_->server;
  auto& st = impl_->store;

  srv.Post("/api/sessions", guarded([&st](const httplib::Request& req, httplib::Response& res) {
    const Json body = parse_body(req);
    if (!body.is_object()) throw ValidationError("body must be a JSON object");
    if (!body.contains("framework") || !body["framework"].is_string())
      throw ValidationError("framework is required", {"framework"});
    const auto fw = Framework::from_string(body["framework"].get<std::string>());
    long long size = 50;
    if (body.contains("sample_size")) {
      if (!body["sample_size"].is_number_integer()) throw ValidationError("sample_size must be an integer", {"sample_size"});
      size = body["sample_size"].get<long long>();
    }
    if (size <= 0) throw ValidationError("sample_size must be positive", {"sample_size"});
    std::uint64_t seed = 0;
    if (body.contains("rng_seed")) {
      if (!body["rng_seed"].is_number_unsigned()) throw ValidationError("rng_seed must be a non-negative integer", {"rng_seed"});
      seed = body["rng_seed"].get<std::uint64_t>();
    }
    send_json(res, 201, st.create_session(fw, static_cast<std::size_t>(size), seed).to_json());
  }));

  srv.Get(R"(/api/sessions/([^/]+))", guarded([&st](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, st.session(req.matches[1]).to_json());
  }));

  srv.Get(R"(/api/sessions/([^/]+)/next)", guarded([&st](const httplib::Request& req, httplib::Response& res) {
    const bool rerate = req.get_param_value("rerate") == "1" || req.get_param_value("rerate") == "true";
    std::size_t index = 0;
    if (req.has_param("index")) {
      try {
        index = std::stoul(req.get_param_value("index"));
      } catch (const std::exception&) {
        throw ValidationError("index must be a non-negative integer", {"index"});
      }
    }
    send_json(res, 200, st.next_case(req.matches[1], req.get_param_value("rater"), rerate, index));
  }));

  srv.Post(R"(/api/sessions/([^/]+)/ratings)", guarded([&st](const httplib::Request& req, httplib::Response& res) {
    auto event = RatingEvent::from_json(parse_body(req));
    const std::string sid = req.matches[1];
    if (!event.session_id.empty() && event.session_id != sid)
      throw ValidationError("session_id in body does not match the URL", {"session_id"});
    event.session_id = sid;
    auto stored = st.submit(std::move(event));
    send_json(res, 200, Json{{"ok", true}, {"seq", stored.seq}, {"timestamp_ms", stored.timestamp_ms}});
  }));

  srv.Get(R"(/api/sessions/([^/]+)/report)", guarded([&st](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, st.report_json(req.matches[1]));
  }));

  if (static_dir) {
    if (!std::filesystem::is_directory(*static_dir))
      throw ConfigError("static directory does not exist: " + static_dir->string());
    srv.set_mount_point("/", static_dir->string());
  }
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  if (port == 0) {
    const int p = srv.bind_to_any_port(host);
    if (p < 0) throw ConfigError("could not bind " + host);
    return p;
  }
  if (!srv.bind_to_port(host, port)) throw ConfigError("could not bind " + host + ":" + std::to_string(port));
  return port;
}

void AnnotationServer::listen() { impl_->server.listen_after_bind(); }

void AnnotationServer::start_background() {
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void AnnotationServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace forge::annotation
