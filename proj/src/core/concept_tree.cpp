#include "cobwebtm/core/concept_tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

#include "cobwebtm/error.hpp"
#include "parallel.hpp"

namespace cobwebtm {

namespace {

constexpr double kUndefined = -std::numeric_limits<double>::infinity();

// Below this many (children x dims) scoring runs inline; thread start-up
// costs more than the work.
constexpr std::size_t kParallelWork = 1u << 15;

double xlogx(double n) { return n > 0.0 ? n * std::log(n) : 0.0; }

}  // namespace

void TreeConfig::validate() const {
  if (dim == 0) throw ValidationError("tree dimensionality must be >= 1");
  if (!(variance_floor > 0.0) || !std::isfinite(variance_floor)) {
    throw ValidationError("variance floor must be a finite value > 0");
  }
}

std::string_view to_string(CuNormalization n) {
  switch (n) {
    case CuNormalization::None: return "none";
    case CuNormalization::PartitionSize: return "size";
    case CuNormalization::PartitionEntropy: return "entropy";
  }
  return "?";
}

CuNormalization parse_cu_normalization(std::string_view name) {
  for (auto n : {CuNormalization::None, CuNormalization::PartitionSize, CuNormalization::PartitionEntropy}) {
    if (to_string(n) == name) return n;
  }
  throw ValidationError("unknown CU normalization '" + std::string(name) + "' (expected none, size or entropy)");
}

std::string_view to_string(OperatorKind op) {
  switch (op) {
    case OperatorKind::Insert: return "INSERT";
    case OperatorKind::New: return "NEW";
    case OperatorKind::Merge: return "MERGE";
    case OperatorKind::Split: return "SPLIT";
  }
  return "?";
}

OperatorCounts operator-(const OperatorCounts& a, const OperatorCounts& b) {
  OperatorCounts out;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a.values[i] - b.values[i];
  return out;
}

ConceptTree::ConceptTree(TreeConfig config) : config_(config) {
  config_.validate();
  if (config_.threads == 0) config_.threads = 1;
}

ConceptTree ConceptTree::from_nodes(TreeConfig config, std::vector<ConceptNode> nodes, NodeId root,
                                    NodeId next_id, OperatorCounts counts) {
  ConceptTree tree(config);
  tree.counts_ = counts;
  if (nodes.empty()) {
    if (root != kNoNode) throw ValidationError("root id given for an empty tree");
    tree.nodes_.resize(static_cast<std::size_t>(std::max<NodeId>(next_id, 0)));
    return tree;
  }
  NodeId max_id = -1;
  for (const auto& n : nodes) {
    if (n.id < 0) throw ValidationError("negative node id " + std::to_string(n.id));
    max_id = std::max(max_id, n.id);
  }
  if (next_id <= max_id) throw ValidationError("next_id must exceed every node id");
  tree.nodes_.resize(static_cast<std::size_t>(next_id));
  for (auto& n : nodes) {
    if (n.stats.dim() != config.dim) {
      throw ValidationError("node " + std::to_string(n.id) + " has dimension " +
                            std::to_string(n.stats.dim()) + ", expected " + std::to_string(config.dim));
    }
    auto& slot = tree.nodes_[static_cast<std::size_t>(n.id)];
    if (slot) throw ValidationError("duplicate node id " + std::to_string(n.id));
    slot = std::move(n);
    ++tree.live_nodes_;
  }
  if (!tree.contains(root)) throw ValidationError("root id " + std::to_string(root) + " not present");
  if (tree.node(root).parent != kNoNode) throw ValidationError("root has a parent");
  tree.root_ = root;

  // Walk from the root: checks reachability, links, and the structural rules.
  std::unordered_set<DocId> seen_docs;
  std::size_t reached = 0;
  std::vector<NodeId> stack{root};
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    ++reached;
    const ConceptNode& n = tree.node(id);
    const std::string where = "node " + std::to_string(id);
    if (n.stats.count() == 0) throw ValidationError(where + " has count 0");
    for (double v : n.stats.m2()) {
      if (std::isnan(v) || v < -1e-9) throw ValidationError(where + " has negative m2");
    }
    if (!n.children.empty() && !n.doc_ids.empty()) {
      throw ValidationError(where + " has both children and documents");
    }
    if (n.children.empty()) {
      if (n.doc_ids.empty()) throw ValidationError(where + " is a leaf without documents");
      if (n.doc_ids.size() != n.stats.count()) throw ValidationError(where + " count differs from its document count");
      for (const auto& d : n.doc_ids) {
        if (!seen_docs.insert(d).second) throw ValidationError("document " + d + " appears twice");
      }
      continue;
    }
    std::uint64_t sum = 0;
    for (NodeId c : n.children) {
      if (!tree.contains(c)) throw ValidationError(where + " references missing child " + std::to_string(c));
      if (tree.node(c).parent != id) throw ValidationError("child " + std::to_string(c) + " does not point back to " + where);
      sum += tree.node(c).stats.count();
      stack.push_back(c);
    }
    if (sum != n.stats.count()) throw ValidationError(where + " count differs from the sum of its children");
  }
  if (reached != tree.live_nodes_) throw ValidationError("tree contains unreachable nodes or cycles");
  tree.doc_count_ = seen_docs.size();
  tree.doc_ids_ = std::move(seen_docs);
  return tree;
}

bool ConceptTree::contains(NodeId id) const {
  return id >= 0 && static_cast<std::size_t>(id) < nodes_.size() &&
         nodes_[static_cast<std::size_t>(id)].has_value();
}

const ConceptNode& ConceptTree::node(NodeId id) const {
  if (!contains(id)) throw std::out_of_range("no node with id " + std::to_string(id));
  return *nodes_[static_cast<std::size_t>(id)];
}

ConceptNode& ConceptTree::at(NodeId id) { return *nodes_[static_cast<std::size_t>(id)]; }

NodeId ConceptTree::add_node(ConceptNode node) {
  node.id = static_cast<NodeId>(nodes_.size());
  nodes_.emplace_back(std::move(node));
  ++live_nodes_;
  return nodes_.back()->id;
}

void ConceptTree::discard(NodeId id) {
  nodes_[static_cast<std::size_t>(id)].reset();
  --live_nodes_;
}

std::size_t ConceptTree::leaf_count() const {
  std::size_t leaves = 0;
  for (const auto& n : nodes_) {
    if (n && n->is_leaf()) ++leaves;
  }
  return leaves;
}

std::size_t ConceptTree::depth() const {
  if (empty()) return 0;
  std::size_t deepest = 0;
  std::vector<std::pair<NodeId, std::size_t>> stack{{root_, 0}};
  while (!stack.empty()) {
    auto [id, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    for (NodeId c : node(id).children) stack.emplace_back(c, d + 1);
  }
  return deepest;
}

std::size_t ConceptTree::node_depth(NodeId id) const {
  std::size_t d = 0;
  for (NodeId p = node(id).parent; p != kNoNode; p = node(p).parent) ++d;
  return d;
}

std::vector<NodeId> ConceptTree::node_ids() const {
  std::vector<NodeId> ids;
  ids.reserve(live_nodes_);
  for (const auto& n : nodes_) {
    if (n) ids.push_back(n->id);
  }
  return ids;
}

std::vector<DocId> ConceptTree::subtree_docs(NodeId id) const {
  std::vector<DocId> docs;
  std::vector<NodeId> stack{id};
  while (!stack.empty()) {
    const ConceptNode& n = node(stack.back());
    stack.pop_back();
    docs.insert(docs.end(), n.doc_ids.begin(), n.doc_ids.end());
    // Reverse push keeps documents in left-to-right leaf order.
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
  }
  return docs;
}

bool ConceptTree::is_ancestor_or_self(NodeId ancestor, NodeId id) const {
  for (NodeId cur = id; cur != kNoNode; cur = node(cur).parent) {
    if (cur == ancestor) return true;
  }
  return false;
}

ConceptTree::ChildScores ConceptTree::insertion_scores(const GaussianStats& parent_with_x,
                                                       const std::vector<NodeId>& children,
                                                       std::span<const double> x) const {
  const double eps = config_.variance_floor;
  const std::size_t k = children.size();
  ChildScores out;
  out.entropy.assign(k, 0.0);
  out.with_x.assign(k, 0.0);
  const std::size_t threads = k * config_.dim >= kParallelWork ? config_.threads : 1;
  detail::parallel_for(k, threads, [&](std::size_t i) {
    const GaussianStats& c = node(children[i]).stats;
    out.entropy[i] = entropy(c, eps);
    GaussianStats with_x = c;
    with_x.add(x);
    out.with_x[i] = entropy(with_x, eps);
  });

  for (std::size_t i = 0; i < k; ++i) {
    out.weighted_sum += static_cast<double>(node(children[i]).stats.count()) * out.entropy[i];
  }

  const double parent_u = entropy(parent_with_x, eps);
  const double n = static_cast<double>(parent_with_x.count());
  out.cu.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double nc = static_cast<double>(node(children[i]).stats.count());
    const double s = out.weighted_sum - nc * out.entropy[i] + (nc + 1.0) * out.with_x[i];
    out.cu[i] = parent_u - s / n;
  }
  return out;
}

std::pair<std::size_t, std::size_t> ConceptTree::best_two(const std::vector<NodeId>& children,
                                                          const std::vector<double>& scores,
                                                          std::span<const double> x) const {
  const double eps = config_.variance_floor;
  std::vector<std::optional<double>> ll(children.size());
  auto loglik = [&](std::size_t i) {
    if (!ll[i]) ll[i] = log_likelihood(node(children[i]).stats, x, eps);
    return *ll[i];
  };
  // Higher CU first; exact ties go to the likelier child, then to the earlier one.
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    const double la = loglik(a);
    const double lb = loglik(b);
    if (la != lb) return la > lb;
    return a < b;
  };
  std::size_t best = 0;
  std::size_t second = children.size();
  for (std::size_t i = 1; i < children.size(); ++i) {
    if (better(i, best)) {
      second = best;
      best = i;
    } else if (second == children.size() || better(i, second)) {
      second = i;
    }
  }
  return {best, second};
}

OperatorDecision ConceptTree::score(NodeId id, const GaussianStats& node_stats,
                                    std::span<const double> x) const {
  const ConceptNode& n = node(id);
  const std::vector<NodeId>& children = n.children;
  const std::size_t k = children.size();
  const double eps = config_.variance_floor;
  const double parent_u = entropy(node_stats, eps);
  const double total = static_cast<double>(node_stats.count());

  // Scales a partition's CU. `sum_xlogx` is sum_c n_c ln n_c over the
  // partition's counts with x included; ln N - sum_xlogx / N is its entropy.
  auto normalized = [&](double cu, std::size_t partition_size, double sum_xlogx) {
    switch (config_.normalization) {
      case CuNormalization::None:
        return cu;
      case CuNormalization::PartitionSize:
        return cu / static_cast<double>(partition_size);
      case CuNormalization::PartitionEntropy: {
        const double h = std::log(total) - sum_xlogx / total;
        // A one-member partition is the parent itself; its CU is zero.
        return h > 1e-12 ? cu / h : 0.0;
      }
    }
    return cu;
  };

  const ChildScores scores = insertion_scores(node_stats, children, x);
  const std::vector<double>& child_u = scores.entropy;
  const std::vector<double>& inserted_u = scores.with_x;
  const double sum = scores.weighted_sum;

  std::vector<double> counts(k);
  double base_xlogx = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    counts[i] = static_cast<double>(node(children[i]).stats.count());
    base_xlogx += xlogx(counts[i]);
  }
  auto moved_xlogx = [&](double from, double to) { return base_xlogx - xlogx(from) + xlogx(to); };

  const auto [b1, b2] = best_two(children, scores.cu, x);

  OperatorDecision decision;
  decision.node = id;
  decision.scores.fill(kUndefined);
  decision.best_child = children[b1];
  decision.second_child = b2 < k ? children[b2] : kNoNode;

  decision.scores[0] = normalized(scores.cu[b1], k, moved_xlogx(counts[b1], counts[b1] + 1.0));

  const double new_cu = parent_u - (sum + singleton_entropy(config_.dim, eps)) / total;
  decision.scores[1] = normalized(new_cu, k + 1, base_xlogx);

  const ConceptNode& c1 = node(children[b1]);
  const double n1 = counts[b1];

  if (b2 < k) {
    const ConceptNode& c2 = node(children[b2]);
    const double n2 = counts[b2];
    GaussianStats merged = GaussianStats::pooled(c1.stats, c2.stats);
    merged.add(x);
    const double s = sum - n1 * child_u[b1] - n2 * child_u[b2] + (n1 + n2 + 1.0) * entropy(merged, eps);
    const double h = base_xlogx - xlogx(n1) - xlogx(n2) + xlogx(n1 + n2 + 1.0);
    decision.scores[2] = normalized(parent_u - s / total, k - 1, h);
  }

  if (!c1.is_leaf()) {
    // Partition after promoting c1's children, then place x in whichever
    // member scores best.
    const std::size_t size = k - 1 + c1.children.size();
    double promoted_sum = sum - n1 * child_u[b1];
    double promoted_xlogx = base_xlogx - xlogx(n1);
    std::vector<double> promoted_u;
    std::vector<double> promoted_inserted_u;
    for (NodeId g : c1.children) {
      const GaussianStats& gs = node(g).stats;
      const double u = entropy(gs, eps);
      GaussianStats with_x = gs;
      with_x.add(x);
      promoted_u.push_back(u);
      promoted_inserted_u.push_back(entropy(with_x, eps));
      promoted_sum += static_cast<double>(gs.count()) * u;
      promoted_xlogx += xlogx(static_cast<double>(gs.count()));
    }
    double best = kUndefined;
    auto consider = [&](double nc, double u, double u_with_x) {
      const double s = promoted_sum - nc * u + (nc + 1.0) * u_with_x;
      const double h = promoted_xlogx - xlogx(nc) + xlogx(nc + 1.0);
      best = std::max(best, normalized(parent_u - s / total, size, h));
    };
    for (std::size_t i = 0; i < k; ++i) {
      if (i != b1) consider(counts[i], child_u[i], inserted_u[i]);
    }
    for (std::size_t j = 0; j < c1.children.size(); ++j) {
      consider(static_cast<double>(node(c1.children[j]).stats.count()), promoted_u[j], promoted_inserted_u[j]);
    }
    decision.scores[3] = best;
  }

  decision.op = OperatorKind::Insert;
  for (std::size_t op = 1; op < decision.scores.size(); ++op) {
    if (decision.scores[op] > decision.score(decision.op)) decision.op = static_cast<OperatorKind>(op);
  }
  return decision;
}

OperatorDecision ConceptTree::evaluate_operators(NodeId id, std::span<const double> x) const {
  validate_embedding(x, config_.dim);
  const ConceptNode& n = node(id);
  if (n.is_leaf()) throw ValidationError("operators are only evaluated at internal nodes");
  GaussianStats with_x = n.stats;
  with_x.add(x);
  return score(id, with_x, x);
}

NodeId ConceptTree::ifit(const DocId& doc, std::span<const double> x) {
  validate_embedding(x, config_.dim);
  if (doc_ids_.contains(doc)) throw ValidationError("document " + doc + " is already in the tree");

  auto make_leaf = [&](NodeId parent) {
    ConceptNode leaf;
    leaf.parent = parent;
    leaf.stats = GaussianStats::singleton(x);
    leaf.doc_ids.push_back(doc);
    return add_node(std::move(leaf));
  };
  auto finish = [&](NodeId leaf) {
    doc_ids_.insert(doc);
    ++doc_count_;
    ++counts_[OperatorKind::New];
    return leaf;
  };

  if (empty()) {
    root_ = make_leaf(kNoNode);
    return finish(root_);
  }

  NodeId current = root_;
  while (true) {
    if (at(current).is_leaf()) {
      // Fracture: the old contents move to a copy, and `current` becomes their
      // parent alongside the new singleton.
      ConceptNode copy;
      copy.parent = current;
      copy.stats = at(current).stats;
      copy.doc_ids = std::move(at(current).doc_ids);
      const NodeId copy_id = add_node(std::move(copy));
      const NodeId fresh = make_leaf(current);
      ConceptNode& fractured = at(current);
      fractured.doc_ids.clear();
      fractured.children = {copy_id, fresh};
      fractured.stats.add(x);
      return finish(fresh);
    }

    at(current).stats.add(x);
    bool descended = false;
    while (!descended) {
      const OperatorDecision d = score(current, at(current).stats, x);
      switch (d.op) {
        case OperatorKind::Insert:
          ++counts_[OperatorKind::Insert];
          current = d.best_child;
          descended = true;
          break;
        case OperatorKind::New: {
          const NodeId fresh = make_leaf(current);
          at(current).children.push_back(fresh);
          return finish(fresh);
        }
        case OperatorKind::Merge: {
          ++counts_[OperatorKind::Merge];
          ConceptNode merged;
          merged.parent = current;
          merged.stats = GaussianStats::pooled(at(d.best_child).stats, at(d.second_child).stats);
          merged.children = {d.best_child, d.second_child};
          const NodeId merged_id = add_node(std::move(merged));
          at(d.best_child).parent = merged_id;
          at(d.second_child).parent = merged_id;
          auto& kids = at(current).children;
          *std::find(kids.begin(), kids.end(), d.best_child) = merged_id;
          kids.erase(std::find(kids.begin(), kids.end(), d.second_child));
          current = merged_id;
          descended = true;
          break;
        }
        case OperatorKind::Split: {
          ++counts_[OperatorKind::Split];
          std::vector<NodeId> promoted = at(d.best_child).children;
          for (NodeId g : promoted) at(g).parent = current;
          auto& kids = at(current).children;
          auto pos = kids.erase(std::find(kids.begin(), kids.end(), d.best_child));
          kids.insert(pos, promoted.begin(), promoted.end());
          discard(d.best_child);
          break;  // re-evaluate at the same node
        }
      }
    }
  }
}

std::vector<NodeId> ConceptTree::categorize(std::span<const double> x) const {
  if (empty()) throw ValidationError("cannot categorize against an empty tree");
  validate_embedding(x, config_.dim);
  std::vector<NodeId> path{root_};
  NodeId current = root_;
  while (!node(current).is_leaf()) {
    const ConceptNode& n = node(current);
    GaussianStats with_x = n.stats;
    with_x.add(x);
    const ChildScores scores = insertion_scores(with_x, n.children, x);
    current = n.children[best_two(n.children, scores.cu, x).first];
    path.push_back(current);
  }
  return path;
}

}  // namespace cobwebtm
