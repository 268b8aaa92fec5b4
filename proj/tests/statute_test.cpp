#include <gtest/gtest.h>

#include <random>
#include <set>

#include "forge/statute.hpp"
#include "test_support.hpp"

namespace forge::statute {
namespace {

TEST(ParseStatute, MinimalHierarchy) {
  auto tree = parse_statute("# Test Law\n## Chapter I: Intro\n### Article 1: Scope\n");
  EXPECT_EQ(tree.node_count(), 3u);
  EXPECT_EQ(tree.edge_count(), 2u);
  EXPECT_EQ(tree.leaf_count(), 1u);
  EXPECT_EQ(tree.framework().slug(), "test-law");
  EXPECT_EQ(tree.node(2).id, "test-law/ch1/art1");
  EXPECT_EQ(tree.node(2).enumerator, "Article 1");
  EXPECT_EQ(tree.node(2).text, "Scope");
}

TEST(ParseStatute, BlankLinesAndTrailingWhitespaceIgnored) {
  auto a = parse_statute("# L\n## Chapter 1: A\n### Article 1: B\n1. x\n");
  auto b = parse_statute("\n# L   \n\n## Chapter 1: A  \n\n### Article 1: B\t\n1. x   \n\n");
  EXPECT_EQ(serialize_statute(a), serialize_statute(b));
}

TEST(ParseStatute, EmptyDocumentIsAnError) {
  EXPECT_THROW(parse_statute(""), ParseError);
  EXPECT_THROW(parse_statute("\n   \n"), ParseError);
}

TEST(ParseStatute, DepthJumpReportsLineNumber) {
  try {
    parse_statute("# L\n\n### Article 1: X\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    ASSERT_TRUE(e.line().has_value());
    EXPECT_EQ(*e.line(), 3u);
  }
  try {
    parse_statute("# L\n## Chapter 1: A\n### Article 1: B\n1. x\n      (a) too deep\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line().value_or(0), 5u);
  }
}

TEST(ParseStatute, OddIndentationRejected) {
  EXPECT_THROW(parse_statute("# L\n## Chapter 1: A\n### Article 1: B\n1. x\n   (a) y\n"), ParseError);
}

TEST(ParseStatute, BundledEuAiActInventory) {
  auto tree = parse_statute(test::read_data("statutes/eu_ai_act.statute"));
  EXPECT_EQ(tree.framework(), Framework::eu_ai_act());
  std::vector<int> chapters;
  std::set<int> articles;
  for (const auto& n : tree.nodes()) {
    if (n.kind != NodeKind::kHeading) continue;
    if (n.depth == 1) chapters.push_back(static_cast<int>(chapters.size()) + 1);
    if (n.depth == 2) articles.insert(std::stoi(n.enumerator.substr(8)));
  }
  EXPECT_EQ(chapters.size(), 13u);
  EXPECT_EQ(articles.size(), 113u);
  EXPECT_EQ(*articles.begin(), 1);
  EXPECT_EQ(*articles.rbegin(), 113);
  ASSERT_TRUE(tree.find("eu-ai-act/ch13/art113"));
  EXPECT_EQ(tree.node(*tree.find("eu-ai-act/ch13")).text, "Final Provisions");
}

TEST(ParseStatute, BundledGdprInventory) {
  auto tree = parse_statute(test::read_data("statutes/gdpr.statute"));
  EXPECT_EQ(tree.framework(), Framework::gdpr());
  std::size_t chapters = 0, articles = 0;
  for (const auto& n : tree.nodes()) {
    if (n.kind != NodeKind::kHeading) continue;
    (n.depth == 1 ? chapters : articles)++;
  }
  EXPECT_EQ(chapters, 11u);
  EXPECT_EQ(articles, 99u);
  ASSERT_TRUE(tree.find("gdpr/ch11/art99"));
  EXPECT_EQ(tree.node(*tree.find("gdpr/ch11/art99")).text, "Entry into force and application");
  EXPECT_TRUE(tree.find("gdpr/ch2/art6/p1/f"));
}

TEST(EnumeratePaths, TwoLeafChildren) {
  auto tree = parse_statute("# L\n## Chapter 1: A\n## Chapter 2: B\n");
  auto paths = enumerate_paths(tree);
  ASSERT_EQ(paths.size(), 2u);
  EXPECT_EQ(paths[0].node_ids.back(), "l/ch1");
  EXPECT_EQ(paths[1].node_ids.back(), "l/ch2");
}

TEST(EnumeratePaths, ChainOfDepthFive) {
  auto tree = parse_statute("# L\n## Chapter 1: A\n### Article 1: B\n1. c\n  (a) d\n");
  auto paths = enumerate_paths(tree);
  ASSERT_EQ(paths.size(), 1u);
  EXPECT_EQ(paths[0].node_ids.size(), 5u);
  EXPECT_EQ(paths[0].node_ids.front(), "l");
}

TEST(EnumeratePaths, SingleNodeTree) {
  auto tree = parse_statute("# Only\n");
  auto paths = enumerate_paths(tree);
  ASSERT_EQ(paths.size(), 1u);
  EXPECT_EQ(paths[0].node_ids, std::vector<std::string>{"only"});
  EXPECT_EQ(render_seed(paths[0], tree).rendered_text, "Only");
}

TEST(EnumeratePaths, ChapterWithThreeArticlesOfTwoPoints) {
  const std::string src =
      "# L\n## Chapter 1: A\n"
      "### Article 1: x\n1. a\n2. b\n"
      "### Article 2: y\n1. a\n2. b\n"
      "### Article 3: z\n1. a\n2. b\n";
  auto paths = enumerate_paths(parse_statute(src));
  EXPECT_EQ(paths.size(), test::count_leaf_lines(src));
  EXPECT_EQ(paths.size(), 6u);
}

TEST(RenderSeed, Article5HIiiMatchesReferenceSeed) {
  auto tree = parse_statute(test::read_data("fixtures/eu_ai_act_ch2.statute"));
  StatutePath path{Framework::eu_ai_act(),
                   {"eu-ai-act", "eu-ai-act/ch2", "eu-ai-act/ch2/art5", "eu-ai-act/ch2/art5/p1",
                    "eu-ai-act/ch2/art5/p1/h", "eu-ai-act/ch2/art5/p1/h/iii"}};
  auto seed = render_seed(path, tree);
  EXPECT_EQ(seed.rendered_text, test::kReferenceSeed);
  EXPECT_EQ(seed.seed_id, "eu-ai-act/ch2/art5/p1/h/iii");
  EXPECT_EQ(render_seed(path, tree).rendered_text, seed.rendered_text);
}

TEST(RenderSeed, RootOnlyPath) {
  auto tree = parse_statute(test::read_data("fixtures/eu_ai_act_ch2.statute"));
  auto seed = render_seed(StatutePath{Framework::eu_ai_act(), {"eu-ai-act"}}, tree);
  EXPECT_EQ(seed.rendered_text, "EU Artificial Intelligence Act");
}

TEST(RenderSeed, ForeignNodeIsIntegrityError) {
  auto tree = parse_statute(test::read_data("fixtures/eu_ai_act_ch2.statute"));
  EXPECT_THROW(render_seed(StatutePath{Framework::eu_ai_act(), {"eu-ai-act", "eu-ai-act/ch9"}}, tree),
               IntegrityError);
  EXPECT_THROW(render_seed(StatutePath{Framework::eu_ai_act(), {"eu-ai-act", "eu-ai-act/ch2/art5"}}, tree),
               IntegrityError);
}

TEST(Seeds, JsonRoundTrip) {
  auto tree = parse_statute(test::read_data("fixtures/eu_ai_act_ch2.statute"));
  auto seeds = build_seeds(tree);
  ASSERT_EQ(seeds.size(), tree.leaf_count());
  auto back = Seed::from_json(Json::parse(seeds.back().to_json().dump()));
  EXPECT_EQ(back.seed_id, seeds.back().seed_id);
  EXPECT_EQ(back.path.node_ids, seeds.back().path.node_ids);
  EXPECT_EQ(back.rendered_text, seeds.back().rendered_text);
}

// Property checks over random trees.
TEST(StatuteProperties, RandomTrees) {
  std::mt19937_64 rng(20240611);
  for (int trial = 0; trial < 200; ++trial) {
    auto gen = test::random_statute(rng);
    auto tree = parse_statute(gen.source);
    auto paths = enumerate_paths(tree);
    EXPECT_EQ(paths.size(), gen.leaves) << gen.source;
    EXPECT_EQ(paths.size(), tree.leaf_count());
    EXPECT_EQ(tree.edge_count() + 1, tree.node_count());

    std::set<std::string> ids;
    for (const auto& n : tree.nodes()) ids.insert(n.id);
    EXPECT_EQ(ids.size(), tree.node_count());

    auto again = parse_statute(serialize_statute(tree));
    EXPECT_EQ(serialize_statute(again), serialize_statute(tree));
    ASSERT_EQ(again.node_count(), tree.node_count());
    for (std::size_t i = 0; i < tree.node_count(); ++i) EXPECT_EQ(again.node(i).id, tree.node(i).id);

    for (const auto& p : paths) {
      auto seed = render_seed(p, tree);
      const auto& leaf = tree.node(*tree.find(p.node_ids.back()));
      EXPECT_EQ(seed.rendered_text.rfind(tree.root().text, 0), 0u);
      EXPECT_NE(seed.rendered_text.find(leaf.text), std::string::npos);
    }
  }
}

}  // namespace
}  // namespace forge::statute
