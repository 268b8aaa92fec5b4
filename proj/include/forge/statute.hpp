#pragma once

// Law trees: parsing canonical statute outlines, enumerating root-to-leaf
// paths and rendering them as generation seeds.
//
// Canonical format:
//   # <framework title>
//   ## Chapter II: <title>
//   ### Article 5: <title>
//   1. <clause>
//     (h) <clause>          two spaces of indentation per nesting level
//       (iii) <clause>
// Blank lines and trailing whitespace are ignored.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forge/common.hpp"

namespace forge::statute {

enum class NodeKind { kRoot, kHeading, kClause };

struct LawNode {
  std::string id;
  std::size_t depth = 0;
  NodeKind kind = NodeKind::kClause;
  std::string enumerator;  // "Chapter II", "Article 5", "1.", "(h)"; may be empty
  std::string text;
  std::vector<std::size_t> children;  // indices into LawTree::nodes()
  std::optional<std::size_t> parent;

  // Line as it appears in a seed after the dash marker.
  std::string label() const;
};

class LawTree {
 public:
  LawTree(Framework framework, std::vector<LawNode> nodes);

  const Framework& framework() const noexcept { return framework_; }
  const LawNode& root() const { return nodes_.front(); }
  const std::vector<LawNode>& nodes() const noexcept { return nodes_; }
  const LawNode& node(std::size_t index) const { return nodes_.at(index); }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t edge_count() const noexcept { return nodes_.size() - 1; }
  std::size_t leaf_count() const;

  // Index of the node with this id, if any.
  std::optional<std::size_t> find(std::string_view id) const;

 private:
  Framework framework_;
  std::vector<LawNode> nodes_;
};

struct StatutePath {
  Framework framework;
  std::vector<std::string> node_ids;
};

struct Seed {
  std::string seed_id;
  Framework framework;
  StatutePath path;
  std::string rendered_text;

  Json to_json() const;
  static Seed from_json(const Json& j);
};

// Framework is inferred from the title line unless given.
LawTree parse_statute(std::string_view source, std::optional<Framework> framework = std::nullopt);

// Pretty-printer back to the canonical format.
std::string serialize_statute(const LawTree& tree);

std::vector<StatutePath> enumerate_paths(const LawTree& tree);

Seed render_seed(const StatutePath& path, const LawTree& tree);

std::vector<Seed> build_seeds(const LawTree& tree);

std::vector<Seed> read_seeds(const std::string& path);
void write_seeds(const std::string& path, const std::vector<Seed>& seeds);

}  // namespace forge::statute
