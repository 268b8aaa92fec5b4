#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace forge {

using Json = nlohmann::json;

// Error hierarchy. Every failure surfaced by the library derives from Error and
// carries a short machine-readable kind used by the CLI error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& m, std::optional<std::size_t> line = std::nullopt)
      : Error("parse_error", line ? "line " + std::to_string(*line) + ": " + m : m), line_(line) {}
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  std::optional<std::size_t> line_;
};

struct IntegrityError : Error {
  explicit IntegrityError(const std::string& m) : Error("integrity_error", m) {}
};
struct TemplateError : Error {
  explicit TemplateError(const std::string& m) : Error("template_error", m) {}
};
struct TransportError : Error {
  explicit TransportError(const std::string& m) : Error("transport_error", m) {}
};
struct ProtocolError : Error {
  explicit ProtocolError(const std::string& m) : Error("protocol_error", m) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("config_error", m) {}
};
struct NotFoundError : Error {
  explicit NotFoundError(const std::string& m) : Error("not_found", m) {}
};
struct PipelineError : Error {
  explicit PipelineError(const std::string& m) : Error("pipeline_error", m) {}
};

class ValidationError : public Error {
 public:
  ValidationError(const std::string& m, std::vector<std::string> offending = {})
      : Error("validation_error", m), offending_(std::move(offending)) {}
  const std::vector<std::string>& offending() const noexcept { return offending_; }

 private:
  std::vector<std::string> offending_;
};

// Legal framework identity. Custom frameworks carry their own slug.
class Framework {
 public:
  enum class Kind { kEuAiAct, kGdpr, kCustom };

  static Framework eu_ai_act() { return Framework(Kind::kEuAiAct, "eu-ai-act"); }
  static Framework gdpr() { return Framework(Kind::kGdpr, "gdpr"); }
  static Framework custom(std::string_view name);
  // Accepts slugs and common spellings ("eu-ai-act", "EU_AI_ACT", "gdpr", ...).
  static Framework from_string(std::string_view s);

  Kind kind() const noexcept { return kind_; }
  const std::string& slug() const noexcept { return slug_; }
  // Short name used inside prompts ("EU AI Act", "GDPR").
  std::string law_name() const;

  friend bool operator==(const Framework&, const Framework&) = default;

 private:
  Framework(Kind k, std::string slug) : kind_(k), slug_(std::move(slug)) {}
  Kind kind_;
  std::string slug_;
};

enum class Verdict { kProhibited, kPermitted };

std::string_view to_string(Verdict v) noexcept;  // "prohibited" / "permitted"
std::optional<Verdict> verdict_from_string(std::string_view s);
Verdict parse_verdict(std::string_view s);  // throws ValidationError

// --- small text helpers -----------------------------------------------------

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string slugify(std::string_view s);
bool is_blank(std::string_view s);
std::string replace_all(std::string s, std::string_view from, std::string_view to);

// --- hashing ----------------------------------------------------------------

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& p);
// Stable 64-bit key used for deterministic sampling / shuffling.
std::uint64_t stable_hash64(std::string_view data, std::uint64_t salt = 0);

// --- file IO ----------------------------------------------------------------

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, std::string_view content);
std::vector<Json> read_jsonl(const std::filesystem::path& p);
std::vector<Json> parse_jsonl(std::string_view text);
void write_jsonl(const std::filesystem::path& p, const std::vector<Json>& rows);

std::string utc_timestamp();

// Display rounding: half-up to `digits` decimals.
double round_half_up(double x, int digits = 2);
std::string format_fixed(double x, int digits = 2);

}  // namespace forge
