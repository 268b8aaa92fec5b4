#include "forge/statute.hpp"

#include <regex>
#include <unordered_map>
#include <unordered_set>

#include "forge/chapters.hpp"

namespace forge::statute {
namespace {

struct Enumerated {
  std::string enumerator;
  std::string text;
};

Enumerated split_heading(const std::string& line) {
  static const std::regex kHeading(
      R"(^(chapter|article|section|title|part|annex)\s+([0-9]+[a-z]?|[ivxlcdm]+)\b\s*(?:[:.\-]\s*(.*))?$)",
      std::regex::icase);
  std::smatch m;
  if (std::regex_match(line, m, kHeading)) {
    return {trim(m[1].str() + " " + m[2].str()), trim(m[3].str())};
  }
  return {"", line};
}

Enumerated split_clause(const std::string& line) {
  static const std::regex kClause(R"(^([0-9]+[a-z]?\.|\([0-9a-z]+\))(?:\s+(.*))?$)");
  std::smatch m;
  if (std::regex_match(line, m, kClause)) return {m[1].str(), trim(m[2].str())};
  return {"", line};
}

std::string enumerator_slug(const LawNode& n, std::size_t ordinal) {
  if (n.enumerator.empty()) return "s" + std::to_string(ordinal);
  if (n.kind == NodeKind::kHeading) {
    auto space = n.enumerator.find(' ');
    auto word = to_lower(n.enumerator.substr(0, space));
    auto num = n.enumerator.substr(space + 1);
    static const std::unordered_map<std::string, std::string> kPrefix{
        {"chapter", "ch"}, {"article", "art"}, {"section", "sec"},
        {"title", "title"}, {"part", "part"}, {"annex", "annex"}};
    std::string upper;
    for (char c : num) upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (auto r = roman_to_int(upper)) num = std::to_string(*r);
    return kPrefix.at(word) + to_lower(num);
  }
  std::string inner;
  for (char c : n.enumerator)
    if (std::isalnum(static_cast<unsigned char>(c))) inner.push_back(static_cast<char>(std::tolower(c)));
  if (!inner.empty() && std::isdigit(static_cast<unsigned char>(inner[0]))) return "p" + inner;
  return inner;
}

void assign_ids(std::vector<LawNode>& nodes, std::size_t index) {
  std::unordered_set<std::string> used;
  std::size_t ordinal = 0;
  for (auto child : nodes[index].children) {
    ++ordinal;
    auto base = enumerator_slug(nodes[child], ordinal);
    auto slug = base;
    for (int k = 2; used.count(slug); ++k) slug = base + "-" + std::to_string(k);
    used.insert(slug);
    nodes[child].id = nodes[index].id + "/" + slug;
    assign_ids(nodes, child);
  }
}

Framework infer_framework(const std::string& title) {
  auto l = to_lower(title);
  if (l.find("artificial intelligence act") != std::string::npos || l.find("ai act") != std::string::npos)
    return Framework::eu_ai_act();
  if (l.find("general data protection regulation") != std::string::npos || l.find("gdpr") != std::string::npos)
    return Framework::gdpr();
  return Framework::custom(title);
}

}  // namespace

std::string LawNode::label() const {
  if (enumerator.empty()) return text;
  if (text.empty()) return enumerator;
  return enumerator + (kind == NodeKind::kHeading ? ": " : " ") + text;
}

LawTree::LawTree(Framework framework, std::vector<LawNode> nodes)
    : framework_(std::move(framework)), nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw IntegrityError("law tree needs a root");
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (!ids.insert(n.id).second) throw IntegrityError("duplicate node id " + n.id);
    if ((i == 0) != !n.parent.has_value()) throw IntegrityError("tree must have exactly one root");
    for (auto c : n.children) {
      if (c >= nodes_.size() || nodes_[c].parent != i || nodes_[c].depth != n.depth + 1)
        throw IntegrityError("inconsistent child link under " + n.id);
    }
  }
}

std::size_t LawTree::leaf_count() const {
  std::size_t n = 0;
  for (const auto& node : nodes_) n += node.children.empty() ? 1 : 0;
  return n;
}

std::optional<std::size_t> LawTree::find(std::string_view id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].id == id) return i;
  return std::nullopt;
}

LawTree parse_statute(std::string_view source, std::optional<Framework> framework) {
  std::vector<LawNode> nodes;
  // Stack of node indices along the current root-to-node chain.
  std::vector<std::size_t> chain;
  std::size_t heading_depth = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;

  while (pos <= source.size()) {
    auto nl = source.find('\n', pos);
    std::string raw(source.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    pos = nl == std::string_view::npos ? source.size() + 1 : nl + 1;
    ++line_no;
    while (!raw.empty() && std::isspace(static_cast<unsigned char>(raw.back()))) raw.pop_back();
    if (raw.empty()) continue;

    LawNode node;
    std::size_t depth = 0;
    if (raw[0] == '#') {
      std::size_t hashes = raw.find_first_not_of('#');
      if (hashes == std::string::npos || raw[hashes] != ' ')
        throw ParseError("heading marker must be followed by a space", line_no);
      if (hashes > 3) throw ParseError("heading level " + std::to_string(hashes) + " is not supported", line_no);
      depth = hashes - 1;
      auto body = trim(raw.substr(hashes));
      if (body.empty()) throw ParseError("empty heading", line_no);
      if (depth == 0) {
        if (!nodes.empty()) throw ParseError("second framework title", line_no);
        node.kind = NodeKind::kRoot;
        node.text = body;
      } else {
        node.kind = NodeKind::kHeading;
        auto e = split_heading(body);
        node.enumerator = e.enumerator;
        node.text = e.text;
      }
      heading_depth = depth;
    } else {
      if (nodes.empty()) throw ParseError("document must start with a '# ' framework title", line_no);
      std::size_t indent = raw.find_first_not_of(' ');
      if (raw[indent] == '\t') throw ParseError("tab in indentation", line_no);
      if (indent % 2 != 0) throw ParseError("indentation must be a multiple of two spaces", line_no);
      depth = heading_depth + 1 + indent / 2;
      node.kind = NodeKind::kClause;
      auto e = split_clause(raw.substr(indent));
      node.enumerator = e.enumerator;
      node.text = e.text;
    }

    if (depth > 0) {
      if (nodes.empty()) throw ParseError("document must start with a '# ' framework title", line_no);
      const std::size_t prev_depth = chain.size() - 1;
      if (depth > prev_depth + 1)
        throw ParseError("depth jumps from " + std::to_string(prev_depth) + " to " + std::to_string(depth),
                         line_no);
      chain.resize(depth);
      node.parent = chain.back();
    }
    node.depth = depth;
    const std::size_t index = nodes.size();
    if (node.parent) nodes[*node.parent].children.push_back(index);
    nodes.push_back(std::move(node));
    chain.push_back(index);
  }

  if (nodes.empty()) throw ParseError("empty statute document");
  Framework fw = framework ? *framework : infer_framework(nodes.front().text);
  nodes.front().id = fw.slug();
  assign_ids(nodes, 0);
  return LawTree(std::move(fw), std::move(nodes));
}

std::string serialize_statute(const LawTree& tree) {
  std::string out;
  std::vector<std::size_t> heading_depth(tree.node_count(), 0);
  for (std::size_t i = 0; i < tree.node_count(); ++i) {
    const auto& n = tree.node(i);
    switch (n.kind) {
      case NodeKind::kRoot:
        out += "# " + n.text + "\n";
        break;
      case NodeKind::kHeading:
        heading_depth[i] = n.depth;
        out += std::string(n.depth + 1, '#') + " " + n.label() + "\n";
        break;
      case NodeKind::kClause: {
        heading_depth[i] = heading_depth[*n.parent];
        out += std::string(2 * (n.depth - heading_depth[i] - 1), ' ') + n.label() + "\n";
        break;
      }
    }
  }
  return out;
}

std::vector<StatutePath> enumerate_paths(const LawTree& tree) {
  std::vector<StatutePath> paths;
  std::vector<std::string> chain;
  auto visit = [&](auto&& self, std::size_t index) -> void {
    const auto& n = tree.node(index);
    chain.push_back(n.id);
    if (n.children.empty()) {
      paths.push_back(StatutePath{tree.framework(), chain});
    } else {
      for (auto c : n.children) self(self, c);
    }
    chain.pop_back();
  };
  visit(visit, 0);
  return paths;
}

Seed render_seed(const StatutePath& path, const LawTree& tree) {
  if (path.node_ids.empty()) throw IntegrityError("empty statute path");
  if (path.framework != tree.framework()) throw IntegrityError("path framework does not match tree");
  std::string text;
  std::optional<std::size_t> prev;
  for (const auto& id : path.node_ids) {
    auto index = tree.find(id);
    if (!index) throw IntegrityError("node " + id + " is not in the tree");
    const auto& n = tree.node(*index);
    if (n.parent != prev) throw IntegrityError("path is not a parent-child chain at " + id);
    if (n.depth == 0) {
      text += n.text;
    } else {
      text += "\n" + std::string(n.depth, '-') + " " + n.label();
    }
    prev = index;
  }
  return Seed{path.node_ids.back(), path.framework, path, std::move(text)};
}

std::vector<Seed> build_seeds(const LawTree& tree) {
  std::vector<Seed> seeds;
  for (const auto& p : enumerate_paths(tree)) seeds.push_back(render_seed(p, tree));
  return seeds;
}

Json Seed::to_json() const {
  return Json{{"seed_id", seed_id},
              {"framework", framework.slug()},
              {"path", path.node_ids},
              {"rendered_text", rendered_text}};
}

Seed Seed::from_json(const Json& j) {
  try {
    auto fw = Framework::from_string(j.at("framework").get<std::string>());
    return Seed{j.at("seed_id").get<std::string>(), fw,
                StatutePath{fw, j.at("path").get<std::vector<std::string>>()},
                j.at("rendered_text").get<std::string>()};
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed seed record: ") + e.what());
  }
}

std::vector<Seed> read_seeds(const std::string& path) {
  std::vector<Seed> seeds;
  for (const auto& j : read_jsonl(path)) seeds.push_back(Seed::from_json(j));
  return seeds;
}

void write_seeds(const std::string& path, const std::vector<Seed>& seeds) {
  std::vector<Json> rows;
  rows.reserve(seeds.size());
  for (const auto& s : seeds) rows.push_back(s.to_json());
  write_jsonl(path, rows);
}

}  // namespace forge::statute
