#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "cobwebtm/core/concept_tree.hpp"
#include "cobwebtm/core/gaussian_stats.hpp"
#include "cobwebtm/core/snapshot.hpp"
#include "cobwebtm/error.hpp"
#include "support/oracles.hpp"

using namespace cobwebtm;

namespace {

bool rel_close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)}); }

std::vector<std::vector<double>> random_points(std::size_t n, std::size_t d, std::uint64_t seed, double spread = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, spread);
  std::vector<std::vector<double>> out(n, std::vector<double>(d));
  for (auto& r : out) {
    for (auto& v : r) v = g(rng);
  }
  return out;
}

// Points around a few centres so the tree develops real structure.
std::vector<std::vector<double>> clustered_points(std::size_t n, std::size_t d, std::size_t k, std::uint64_t seed,
                                                  double sigma = 0.02) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<std::vector<double>> out(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : out[i]) v = g(rng);
    out[i][rng() % k % d] += 1.0;
  }
  return out;
}

ConceptTree fit_points(const std::vector<std::vector<double>>& pts, TreeConfig cfg, std::string prefix = "d") {
  ConceptTree t(cfg);
  for (std::size_t i = 0; i < pts.size(); ++i) t.ifit(prefix + std::to_string(i), pts[i]);
  return t;
}

TreeConfig config(std::size_t d, CuNormalization n = CuNormalization::PartitionEntropy) {
  TreeConfig c;
  c.dim = d;
  c.normalization = n;
  return c;
}

std::vector<std::vector<double>> member_points(const ConceptTree& t, NodeId id,
                                               const std::map<DocId, std::vector<double>>& points) {
  std::vector<std::vector<double>> out;
  for (const auto& d : t.subtree_docs(id)) out.push_back(points.at(d));
  return out;
}

double xlogx(double n) { return n > 0 ? n * std::log(n) : 0.0; }

double scaled(double cu, const std::vector<std::vector<std::vector<double>>>& partition, CuNormalization mode) {
  if (mode == CuNormalization::None) return cu;
  if (mode == CuNormalization::PartitionSize) return cu / static_cast<double>(partition.size());
  double total = 0;
  for (const auto& c : partition) total += static_cast<double>(c.size());
  double h = std::log(total);
  for (const auto& c : partition) h -= xlogx(static_cast<double>(c.size())) / total;
  return h > 1e-12 ? cu / h : 0.0;
}

}  // namespace

TEST_CASE("update_stats follows the two-point and identical-point examples") {
  GaussianStats s(1, {0.0}, {0.0});
  s.add(std::vector<double>{2.0});
  CHECK(s.count() == 2);
  CHECK(s.mean()[0] == 1.0);
  CHECK(s.m2()[0] == 2.0);
  CHECK(s.variance(0) == 1.0);

  GaussianStats t(3, {5.0, 5.0}, {0.0, 0.0});
  t.add(std::vector<double>{5.0, 5.0});
  CHECK(t == GaussianStats(4, {5.0, 5.0}, {0.0, 0.0}));
}

TEST_CASE("streamed statistics equal the two-pass computation") {
  const std::vector<double> stream{0.3, 1.7, -0.4, 2.2};
  GaussianStats s(1);
  std::vector<std::vector<double>> rows;
  for (double v : stream) {
    s.add(std::vector<double>{v});
    rows.push_back({v});
  }
  const auto ref = oracle::two_pass(rows);
  CHECK(rel_close(s.mean()[0], ref.mean[0], 1e-12));
  CHECK(rel_close(s.variance(0), ref.var[0], 1e-9));

  const auto pts = random_points(500, 6, 3, 4.0);
  GaussianStats big(6);
  for (const auto& p : pts) big.add(p);
  const auto bref = oracle::two_pass(pts);
  for (std::size_t d = 0; d < 6; ++d) {
    CHECK(rel_close(big.mean()[d], bref.mean[d], 1e-9));
    CHECK(rel_close(big.variance(d), bref.var[d], 1e-9));
  }
}

TEST_CASE("add rejects bad input without changing the statistics") {
  GaussianStats s(2, {1.0, 1.0}, {0.5, 0.5});
  const GaussianStats before = s;
  CHECK_THROWS_AS(s.add(std::vector<double>{1.0}), ValidationError);
  CHECK_THROWS_AS(s.add(std::vector<double>{1.0, std::numeric_limits<double>::quiet_NaN()}), ValidationError);
  CHECK_THROWS_AS(s.add(std::vector<double>{std::numeric_limits<double>::infinity(), 0.0}), ValidationError);
  CHECK(s == before);
}

TEST_CASE("pooling examples") {
  CHECK(GaussianStats::pooled(GaussianStats(2, {1.0}, {2.0}), GaussianStats(2, {1.0}, {2.0})) ==
        GaussianStats(4, {1.0}, {4.0}));
  CHECK(GaussianStats::pooled(GaussianStats(1, {0.0}, {0.0}), GaussianStats(1, {4.0}, {0.0})) ==
        GaussianStats(2, {2.0}, {8.0}));
  CHECK_THROWS_AS(GaussianStats::pooled(GaussianStats(1), GaussianStats(2)), ValidationError);

  const auto a = random_points(17, 8, 11, 2.0);
  const auto b = random_points(29, 8, 12, 5.0);
  GaussianStats sa(8);
  GaussianStats sb(8);
  for (const auto& p : a) sa.add(p);
  for (const auto& p : b) sb.add(p);
  auto all = a;
  all.insert(all.end(), b.begin(), b.end());
  const auto ref = oracle::two_pass(all);
  const GaussianStats pooled = GaussianStats::pooled(sa, sb);
  CHECK(pooled.count() == 46);
  for (std::size_t d = 0; d < 8; ++d) {
    CHECK(rel_close(pooled.mean()[d], ref.mean[d], 1e-12));
    CHECK(rel_close(pooled.variance(d), ref.var[d], 1e-9));
  }
}

TEST_CASE("entropy closed forms") {
  const double eps = 1e-4;
  // count 1 with m2 = v gives variance v.
  GaussianStats unit(1, {0.0}, {1.0 - eps});
  CHECK(entropy(unit, eps) == doctest::Approx(0.5 * std::log(2 * std::numbers::pi * std::numbers::e)).epsilon(1e-12));
  CHECK(entropy(unit, eps) == doctest::Approx(1.41894).epsilon(1e-5));

  GaussianStats zero(1, {0.0}, {1.0 / (2 * std::numbers::pi * std::numbers::e) - eps});
  CHECK(std::abs(entropy(zero, eps)) < 1e-12);

  GaussianStats two(1, {0.0, 0.0}, {1.0 - eps, 4.0 - eps});
  CHECK(entropy(two, eps) == doctest::Approx(oracle::gaussian_entropy({1.0 - eps, 4.0 - eps}, eps)).epsilon(1e-12));
  CHECK(singleton_entropy(3, eps) == doctest::Approx(oracle::gaussian_entropy({0, 0, 0}, eps)).epsilon(1e-12));
}

TEST_CASE("log likelihood matches the diagonal Gaussian density") {
  GaussianStats s(4, {1.0, -2.0}, {4.0, 0.4});
  const std::vector<double> x{0.5, -1.0};
  const double eps = 1e-4;
  double ref = 0;
  const double var[] = {1.0 + eps, 0.1 + eps};
  const double diff[] = {-0.5, 1.0};
  for (int d = 0; d < 2; ++d) ref += std::log(std::exp(-diff[d] * diff[d] / (2 * var[d])) / std::sqrt(2 * std::numbers::pi * var[d]));
  CHECK(log_likelihood(s, x, eps) == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("category utility") {
  const double eps = 1e-4;
  SUBCASE("one child equal to the parent") {
    GaussianStats p(3, {1.0}, {2.0});
    const GaussianStats* kids[] = {&p};
    CHECK(category_utility(p, kids, eps) == 0.0);
  }
  SUBCASE("children sharing the parent's variance") {
    GaussianStats a(2, {0.0}, {2.0});
    GaussianStats b(2, {0.0}, {2.0});
    const GaussianStats p = GaussianStats::pooled(a, b);
    const GaussianStats* kids[] = {&a, &b};
    CHECK(std::abs(category_utility(p, kids, eps)) < 1e-12);
  }
  SUBCASE("raw-point oracle") {
    GaussianStats a(1);
    GaussianStats b(1);
    for (double v : {0.0, 0.2}) a.add(std::vector<double>{v});
    for (double v : {10.0, 10.2}) b.add(std::vector<double>{v});
    const GaussianStats p = GaussianStats::pooled(a, b);
    const GaussianStats* kids[] = {&a, &b};
    const double ref = oracle::raw_cu({{{0.0}, {0.2}}, {{10.0}, {10.2}}}, eps);
    CHECK(category_utility(p, kids, eps) == doctest::Approx(ref).epsilon(1e-12));
    CHECK(std::abs(category_utility(p, kids, eps) - ref) < 1e-9);
  }
  SUBCASE("rejects bad partitions") {
    GaussianStats a(2, {0.0}, {2.0});
    GaussianStats p(3, {0.0}, {2.0});
    const GaussianStats* kids[] = {&a};
    CHECK_THROWS_AS(category_utility(p, std::span<const GaussianStats* const>{}, eps), ValidationError);
    CHECK_THROWS_AS(category_utility(p, kids, eps), ValidationError);
  }
  SUBCASE("non-negative on consistent random partitions") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t d = 1 + rng() % 4;
      const std::size_t k = 2 + rng() % 4;
      std::vector<GaussianStats> kids(k, GaussianStats(d));
      GaussianStats parent(d);
      std::normal_distribution<double> g(0.0, 1.0 + static_cast<double>(rng() % 5));
      for (std::size_t c = 0; c < k; ++c) {
        const std::size_t n = 1 + rng() % 6;
        for (std::size_t i = 0; i < n; ++i) {
          std::vector<double> x(d);
          for (auto& v : x) v = g(rng);
          kids[c].add(x);
          parent.add(x);
        }
      }
      std::vector<const GaussianStats*> view;
      for (const auto& c : kids) view.push_back(&c);
      CHECK(category_utility(parent, view, eps) >= -1e-9);
    }
  }
}

TEST_CASE("first document makes the root a leaf") {
  ConceptTree t(config(2));
  CHECK(t.empty());
  const NodeId leaf = t.ifit("d1", std::vector<double>{1.0, 2.0});
  CHECK(leaf == t.root());
  CHECK(t.node(leaf).is_leaf());
  CHECK(t.node(leaf).stats.count() == 1);
  CHECK(t.node(leaf).doc_ids == std::vector<DocId>{"d1"});
  CHECK(t.operator_counts()[OperatorKind::New] == 1);
}

TEST_CASE("reaching a leaf fractures it") {
  ConceptTree t(config(1));
  const NodeId first = t.ifit("a", std::vector<double>{0.0});
  const NodeId second = t.ifit("b", std::vector<double>{5.0});
  CHECK(t.root() == first);
  const auto& root = t.node(first);
  REQUIRE(root.children.size() == 2);
  CHECK(root.doc_ids.empty());
  CHECK(root.stats.count() == 2);
  CHECK(t.node(root.children[0]).doc_ids == std::vector<DocId>{"a"});
  CHECK(t.node(root.children[1]).doc_ids == std::vector<DocId>{"b"});
  CHECK(root.children[1] == second);
  CHECK(t.operator_counts()[OperatorKind::New] == 2);
}

TEST_CASE("ifit rejects invalid input and leaves the tree untouched") {
  ConceptTree t = fit_points(random_points(30, 3, 1), config(3));
  const auto before = tree_to_json(t);
  CHECK_THROWS_AS(t.ifit("x", std::vector<double>{1.0, 2.0}), ValidationError);
  CHECK_THROWS_AS(t.ifit("y", std::vector<double>{1.0, std::numeric_limits<double>::quiet_NaN(), 0.0}), ValidationError);
  CHECK_THROWS_AS(t.ifit("d3", std::vector<double>{1.0, 2.0, 3.0}), ValidationError);
  CHECK(tree_to_json(t) == before);
}

TEST_CASE("every internal node stays consistent with its children") {
  for (auto mode : {CuNormalization::None, CuNormalization::PartitionSize, CuNormalization::PartitionEntropy}) {
    const auto pts = clustered_points(300, 4, 3, 21, 0.1);
    std::map<DocId, std::vector<double>> by_id;
    for (std::size_t i = 0; i < pts.size(); ++i) by_id["d" + std::to_string(i)] = pts[i];
    const ConceptTree t = fit_points(pts, config(4, mode));
    CHECK(t.doc_count() == 300);
    CHECK(t.leaf_count() == 300);
    CHECK(t.operator_counts()[OperatorKind::New] == 300);
    std::set<DocId> seen;
    for (NodeId id : t.node_ids()) {
      const auto& n = t.node(id);
      const auto ref = oracle::two_pass(member_points(t, id, by_id));
      for (std::size_t d = 0; d < 4; ++d) {
        CHECK(rel_close(n.stats.mean()[d], ref.mean[d], 1e-9));
        CHECK(rel_close(n.stats.variance(d), ref.var[d], 1e-6));
      }
      if (n.is_leaf()) {
        CHECK(n.doc_ids.size() == 1);
        for (const auto& d : n.doc_ids) CHECK(seen.insert(d).second);
        continue;
      }
      CHECK(n.doc_ids.empty());
      std::uint64_t sum = 0;
      for (NodeId c : n.children) {
        sum += t.node(c).stats.count();
        CHECK(t.node(c).parent == id);
      }
      CHECK(sum == n.stats.count());
    }
    CHECK(seen.size() == 300);
  }
}

TEST_CASE("two well-separated 2-D clusters form two top-level subtrees") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 0.1);
  ConceptTree t(config(2));
  std::map<DocId, int> label;
  for (int i = 0; i < 40; ++i) {
    const int c = static_cast<int>(rng() % 2);
    const double o = c ? 10.0 : 0.0;
    const DocId id = "d" + std::to_string(i);
    label[id] = c;
    t.ifit(id, std::vector<double>{o + g(rng), o + g(rng)});
  }
  int sizes[2] = {0, 0};
  for (const auto& [id, c] : label) ++sizes[c];
  bool covered[2] = {false, false};
  for (NodeId child : t.node(t.root()).children) {
    int counts[2] = {0, 0};
    for (const auto& d : t.subtree_docs(child)) ++counts[label[d]];
    for (int c = 0; c < 2; ++c) covered[c] = covered[c] || counts[c] >= 0.95 * sizes[c];
  }
  CHECK(covered[0]);
  CHECK(covered[1]);
}

TEST_CASE("evaluate_operators on constructed nodes") {
  const double eps = 1e-4;
  auto leaf = [](NodeId id, NodeId parent, std::vector<double> values, std::vector<DocId> docs) {
    GaussianStats s(1);
    for (double v : values) s.add(std::vector<double>{v});
    return ConceptNode{id, parent, s, {}, std::move(docs)};
  };
  SUBCASE("a far point prefers NEW over INSERT") {
    std::vector<ConceptNode> nodes;
    ConceptNode child = leaf(1, 0, {0.0, 0.1}, {"a", "b"});
    nodes.push_back(ConceptNode{0, kNoNode, child.stats, {1}, {}});
    nodes.push_back(child);
    for (auto mode : {CuNormalization::None, CuNormalization::PartitionSize, CuNormalization::PartitionEntropy}) {
      const ConceptTree t = ConceptTree::from_nodes(config(1, mode), nodes, 0, 2);
      const OperatorDecision d = t.evaluate_operators(0, std::vector<double>{100.0});
      CHECK(d.op == OperatorKind::New);
      CHECK(d.score(OperatorKind::New) > d.score(OperatorKind::Insert));
      CHECK(d.score(OperatorKind::Merge) == -std::numeric_limits<double>::infinity());
      CHECK(d.score(OperatorKind::Split) == -std::numeric_limits<double>::infinity());
      // raw CU of both partitions, enumerated from the points
      const double insert = oracle::raw_cu({{{0.0}, {0.1}, {100.0}}}, eps);
      const double fresh = oracle::raw_cu({{{0.0}, {0.1}}, {{100.0}}}, eps);
      CHECK(fresh > insert);
    }
  }
  SUBCASE("a point at a zero-variance child's mean inserts there") {
    std::vector<ConceptNode> nodes;
    ConceptNode a = leaf(1, 0, {0.0, 0.0, 0.0}, {"a1", "a2", "a3"});
    ConceptNode b = leaf(2, 0, {10.0, 10.0, 10.0}, {"b1", "b2", "b3"});
    nodes.push_back(ConceptNode{0, kNoNode, GaussianStats::pooled(a.stats, b.stats), {1, 2}, {}});
    nodes.push_back(a);
    nodes.push_back(b);
    for (auto mode : {CuNormalization::None, CuNormalization::PartitionSize, CuNormalization::PartitionEntropy}) {
      const ConceptTree t = ConceptTree::from_nodes(config(1, mode), nodes, 0, 3);
      const OperatorDecision d = t.evaluate_operators(0, std::vector<double>{0.0});
      CHECK(d.op == OperatorKind::Insert);
      CHECK(d.best_child == 1);
      CHECK(d.second_child == 2);
      CHECK(d.score(OperatorKind::Split) == -std::numeric_limits<double>::infinity());
    }
  }
  SUBCASE("with one leaf child only INSERT and NEW are defined") {
    std::vector<ConceptNode> nodes;
    ConceptNode child = leaf(1, 0, {1.0, 1.0}, {"a", "b"});
    nodes.push_back(ConceptNode{0, kNoNode, child.stats, {1}, {}});
    nodes.push_back(child);
    const ConceptTree t = ConceptTree::from_nodes(config(1), nodes, 0, 2);
    const OperatorDecision d = t.evaluate_operators(0, std::vector<double>{1.0});
    CHECK(d.score(OperatorKind::Merge) == -std::numeric_limits<double>::infinity());
    CHECK(d.score(OperatorKind::Split) == -std::numeric_limits<double>::infinity());
    CHECK((d.op == OperatorKind::Insert || d.op == OperatorKind::New));
    CHECK_THROWS_AS(t.evaluate_operators(1, std::vector<double>{1.0}), ValidationError);
  }
}

TEST_CASE("operator scores equal the scaled CU of the explicit partitions") {
  const double eps = 1e-4;
  for (auto mode : {CuNormalization::None, CuNormalization::PartitionSize, CuNormalization::PartitionEntropy}) {
    CAPTURE(to_string(mode));
    const auto pts = clustered_points(120, 3, 3, 33, 0.05);
    std::map<DocId, std::vector<double>> by_id;
    for (std::size_t i = 0; i < pts.size(); ++i) by_id["d" + std::to_string(i)] = pts[i];
    const ConceptTree t = fit_points(pts, config(3, mode));
    const auto probes = clustered_points(10, 3, 3, 34, 0.05);
    int checked_split = 0;
    for (NodeId id : t.node_ids()) {
      const auto& n = t.node(id);
      if (n.is_leaf()) continue;
      for (const auto& x : probes) {
        const OperatorDecision d = t.evaluate_operators(id, x);
        std::vector<std::vector<std::vector<double>>> kids;
        std::size_t b1 = 0, b2 = 0;
        for (std::size_t i = 0; i < n.children.size(); ++i) {
          kids.push_back(member_points(t, n.children[i], by_id));
          if (n.children[i] == d.best_child) b1 = i;
          if (n.children[i] == d.second_child) b2 = i;
        }
        // best child maximizes the raw insertion CU
        double best_raw = -1e300;
        for (std::size_t i = 0; i < kids.size(); ++i) {
          auto part = kids;
          part[i].push_back(x);
          best_raw = std::max(best_raw, oracle::raw_cu(part, eps));
        }
        auto insert = kids;
        insert[b1].push_back(x);
        CHECK(oracle::raw_cu(insert, eps) == doctest::Approx(best_raw).epsilon(1e-9));
        CHECK(d.score(OperatorKind::Insert) == doctest::Approx(scaled(oracle::raw_cu(insert, eps), insert, mode)).epsilon(1e-8));

        auto fresh = kids;
        fresh.push_back({x});
        CHECK(d.score(OperatorKind::New) == doctest::Approx(scaled(oracle::raw_cu(fresh, eps), fresh, mode)).epsilon(1e-8));

        if (d.second_child != kNoNode) {
          std::vector<std::vector<std::vector<double>>> merged;
          std::vector<std::vector<double>> pool = kids[b1];
          pool.insert(pool.end(), kids[b2].begin(), kids[b2].end());
          pool.push_back(x);
          for (std::size_t i = 0; i < kids.size(); ++i) {
            if (i != b1 && i != b2) merged.push_back(kids[i]);
          }
          merged.push_back(pool);
          CHECK(d.score(OperatorKind::Merge) ==
                doctest::Approx(scaled(oracle::raw_cu(merged, eps), merged, mode)).epsilon(1e-8));
        }

        const auto& c1 = t.node(d.best_child);
        if (!c1.is_leaf()) {
          std::vector<std::vector<std::vector<double>>> promoted;
          for (std::size_t i = 0; i < kids.size(); ++i) {
            if (i != b1) promoted.push_back(kids[i]);
          }
          for (NodeId g : c1.children) promoted.push_back(member_points(t, g, by_id));
          double best = -1e300;
          for (std::size_t i = 0; i < promoted.size(); ++i) {
            auto part = promoted;
            part[i].push_back(x);
            best = std::max(best, scaled(oracle::raw_cu(part, eps), part, mode));
          }
          CHECK(d.score(OperatorKind::Split) == doctest::Approx(best).epsilon(1e-8));
          ++checked_split;
        }
        // argmax with tie order insert > new > merge > split
        for (int op = 0; op < 4; ++op) CHECK(d.score(d.op) >= d.scores[static_cast<std::size_t>(op)]);
        for (int op = 0; op < static_cast<int>(d.op); ++op) CHECK(d.scores[static_cast<std::size_t>(op)] < d.score(d.op));
      }
    }
    if (mode != CuNormalization::None) CHECK(checked_split > 0);
  }
}

TEST_CASE("NEW fires exactly once per document and restructuring happens") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.02);
  ConceptTree t(config(2));
  std::size_t n = 0;
  for (int i = 0; i < 100; ++i) {
    const double cx = i % 2 ? 1.0 : 0.0;
    t.ifit("d" + std::to_string(n++), std::vector<double>{cx + g(rng), g(rng)});
  }
  for (int i = 0; i < 50; ++i) t.ifit("d" + std::to_string(n++), std::vector<double>{0.5 + g(rng), g(rng)});
  const auto& c = t.operator_counts();
  CHECK(c[OperatorKind::New] == n);
  CHECK(c[OperatorKind::Merge] >= 1);
  CHECK(c[OperatorKind::Split] >= 1);
  CHECK(t.leaf_count() == n);
}

TEST_CASE("node ids are monotone and never reused") {
  ConceptTree t(config(2));
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 0.05);
  NodeId last_leaf = -1;
  std::set<NodeId> ever;
  for (int i = 0; i < 200; ++i) {
    const NodeId before = t.next_id();
    const NodeId leaf = t.ifit("d" + std::to_string(i), std::vector<double>{(i % 3) + g(rng), g(rng)});
    CHECK(leaf > last_leaf);
    CHECK(leaf >= before);
    last_leaf = leaf;
    for (NodeId id : t.node_ids()) {
      if (id >= before) CHECK(!ever.contains(id));
    }
    for (NodeId id : t.node_ids()) ever.insert(id);
  }
  CHECK(t.node_count() < static_cast<std::size_t>(t.next_id()));
}

TEST_CASE("categorize is read-only and follows the fitted leaf") {
  const auto pts = clustered_points(150, 4, 3, 41);
  ConceptTree t = fit_points(pts, config(4));
  const auto before = tree_to_json(t);
  const auto p1 = t.categorize(pts[7]);
  const auto p2 = t.categorize(pts[7]);
  CHECK(p1 == p2);
  CHECK(tree_to_json(t) == before);
  CHECK(p1.front() == t.root());
  CHECK(t.node(p1.back()).is_leaf());
  for (std::size_t i = 1; i < p1.size(); ++i) CHECK(t.node(p1[i]).parent == p1[i - 1]);

  ConceptTree empty(config(4));
  CHECK_THROWS_AS(empty.categorize(pts[0]), ValidationError);
  CHECK_THROWS_AS(t.categorize(std::vector<double>{1.0}), ValidationError);
}

TEST_CASE("categorize ends at a pure leaf whose mean is the query") {
  ConceptTree t(config(1));
  for (int i = 0; i < 6; ++i) t.ifit("d" + std::to_string(i), std::vector<double>{i * 10.0});
  for (NodeId id : t.node_ids()) {
    const auto& n = t.node(id);
    if (!n.is_leaf()) continue;
    const auto path = t.categorize(n.stats.mean());
    CHECK(path.back() == id);
  }
}

TEST_CASE("threaded child scoring reproduces the sequential tree") {
  // A flat tree makes the root wide enough for the parallel path.
  const auto pts = random_points(90, 512, 17);
  TreeConfig one = config(512, CuNormalization::None);
  TreeConfig four = one;
  four.threads = 4;
  const ConceptTree a = fit_points(pts, one);
  const ConceptTree b = fit_points(pts, four);
  CHECK(a.node(a.root()).children.size() * 512 >= (1u << 15));
  CHECK(tree_to_json(a) == tree_to_json(b));
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(ConceptTree{TreeConfig{}}, ValidationError);
  TreeConfig bad = config(2);
  bad.variance_floor = 0.0;
  CHECK_THROWS_AS(ConceptTree{bad}, ValidationError);
  CHECK(parse_cu_normalization("size") == CuNormalization::PartitionSize);
  CHECK_THROWS_AS(parse_cu_normalization("bogus"), ValidationError);
}

TEST_CASE("snapshot round-trips and continues identically") {
  const auto pts = clustered_points(600, 5, 4, 51);
  ConceptTree a(config(5));
  for (std::size_t i = 0; i < 500; ++i) a.ifit("d" + std::to_string(i), pts[i]);
  const auto path = std::filesystem::temp_directory_path() / "cobwebtm_core_snapshot.json";
  save_tree(a, path);
  ConceptTree b = load_tree(path, 5);
  CHECK(tree_to_json(a) == tree_to_json(b));
  CHECK(b.operator_counts() == a.operator_counts());
  for (NodeId id : a.node_ids()) {
    CHECK(a.node(id).stats == b.node(id).stats);
    CHECK(a.node(id).children == b.node(id).children);
    CHECK(a.node(id).doc_ids == b.node(id).doc_ids);
  }
  for (std::size_t i = 500; i < 600; ++i) {
    if (!a.node(a.root()).is_leaf()) {
      const auto da = a.evaluate_operators(a.root(), pts[i]);
      const auto db = b.evaluate_operators(b.root(), pts[i]);
      CHECK(da.op == db.op);
      CHECK(da.scores == db.scores);
    }
    CHECK(a.ifit("d" + std::to_string(i), pts[i]) == b.ifit("d" + std::to_string(i), pts[i]));
  }
  CHECK(tree_to_json(a) == tree_to_json(b));
  CHECK(!std::filesystem::exists(path.string() + ".tmp"));
  std::filesystem::remove(path);
}

TEST_CASE("snapshot rejects damaged or mismatched files") {
  const auto dir = std::filesystem::temp_directory_path();
  ConceptTree empty(config(3));
  CHECK(tree_to_json(tree_from_json(tree_to_json(empty))) == tree_to_json(empty));

  ConceptTree t = fit_points(random_points(20, 3, 2), config(3));
  const std::string text = tree_to_json(t).dump();
  const auto truncated = dir / "cobwebtm_truncated.json";
  {
    std::ofstream out(truncated);
    out << text.substr(0, text.size() / 2);
  }
  CHECK_THROWS_AS(load_tree(truncated), ValidationError);
  std::filesystem::remove(truncated);

  CHECK_THROWS_AS(tree_from_json(tree_to_json(t), 4), ValidationError);
  auto wrong_version = tree_to_json(t);
  wrong_version["header"]["format_version"] = 99;
  CHECK_THROWS_AS(tree_from_json(wrong_version), ValidationError);
  auto broken = tree_to_json(t);
  broken["nodes"][0]["count"] = 12345;
  CHECK_THROWS_AS(tree_from_json(broken), ValidationError);
  CHECK_THROWS_AS(load_tree(dir / "cobwebtm_missing_snapshot.json"), ValidationError);
}

TEST_CASE("categorize right after ifit passes through the new leaf") {
  for (auto mode : {CuNormalization::None, CuNormalization::PartitionSize, CuNormalization::PartitionEntropy}) {
    for (double sigma : {0.02, 0.1, 1.0}) {
      std::mt19937_64 rng(77);
      std::normal_distribution<double> g(0.0, sigma);
      ConceptTree t(config(4, mode));
      for (int i = 0; i < 150; ++i) {
        std::vector<double> x(4);
        for (auto& v : x) v = g(rng);
        x[rng() % 3] += 1.0;
        const NodeId leaf = t.ifit("d" + std::to_string(i), x);
        const auto path = t.categorize(x);
        CHECK(std::find(path.begin(), path.end(), leaf) != path.end());
      }
    }
  }
}
