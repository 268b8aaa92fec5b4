#include "forge/common.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

namespace forge {

Framework Framework::custom(std::string_view name) {
  auto slug = slugify(name);
  if (slug.empty()) throw ConfigError("custom framework needs a non-empty name");
  return Framework(Kind::kCustom, slug);
}

Framework Framework::from_string(std::string_view s) {
  auto slug = slugify(s);
  if (slug == "eu-ai-act" || slug == "eu-artificial-intelligence-act" || slug == "euaiact")
    return eu_ai_act();
  if (slug == "gdpr" || slug == "general-data-protection-regulation") return gdpr();
  return custom(s);
}

std::string Framework::law_name() const {
  switch (kind_) {
    case Kind::kEuAiAct:
      return "EU AI Act";
    case Kind::kGdpr:
      return "GDPR";
    case Kind::kCustom:
      break;
  }
  return slug_;
}

std::string_view to_string(Verdict v) noexcept {
  return v == Verdict::kProhibited ? "prohibited" : "permitted";
}

std::optional<Verdict> verdict_from_string(std::string_view s) {
  auto l = to_lower(trim(s));
  if (l == "prohibited") return Verdict::kProhibited;
  if (l == "permitted") return Verdict::kPermitted;
  return std::nullopt;
}

Verdict parse_verdict(std::string_view s) {
  if (auto v = verdict_from_string(s)) return *v;
  throw ValidationError("unknown verdict label '" + std::string(s) + "'", {std::string(s)});
}

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string slugify(std::string_view s) {
  std::string out;
  bool dash = false;
  for (unsigned char c : s) {
    if (std::isalnum(c)) {
      if (dash && !out.empty()) out.push_back('-');
      out.push_back(static_cast<char>(std::tolower(c)));
      dash = false;
    } else {
      dash = true;
    }
  }
  return out;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  if (from.empty()) return s;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error("hash_error", "EVP_Digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& p) { return sha256_hex(read_file(p)); }

std::uint64_t stable_hash64(std::string_view data, std::uint64_t salt) {
  // FNV-1a followed by a splitmix64 finalizer.
  std::uint64_t h = 0xcbf29ce484222325ULL ^ (salt * 0x9e3779b97f4a7c15ULL);
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, std::string_view content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io_error", "cannot write " + p.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::vector<Json> parse_jsonl(std::string_view text) {
  std::vector<Json> rows;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    if (!is_blank(line)) {
      try {
        rows.push_back(Json::parse(line));
      } catch (const Json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
      }
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return rows;
}

std::vector<Json> read_jsonl(const std::filesystem::path& p) { return parse_jsonl(read_file(p)); }

void write_jsonl(const std::filesystem::path& p, const std::vector<Json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out.push_back('\n');
  }
  write_file(p, out);
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

double round_half_up(double x, int digits) {
  const double scale = std::pow(10.0, digits);
  return std::floor(x * scale + 0.5) / scale;
}

std::string format_fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, round_half_up(x, digits));
  return buf;
}

}  // namespace forge
