#include "cobwebtm/topics/topics.hpp"

#include <algorithm>
#include <optional>
#include <set>

#include "cobwebtm/core/vector_ops.hpp"
#include "cobwebtm/error.hpp"

namespace cobwebtm {

std::vector<std::string> TopicDescriptor::words() const {
  std::vector<std::string> out;
  out.reserve(top_words.size());
  for (const auto& [w, weight] : top_words) out.push_back(w);
  return out;
}

WordBag subtree_bag(const ConceptTree& tree, const Corpus& corpus, NodeId node) {
  WordBag bag;
  for (const DocId& d : tree.subtree_docs(node)) add_tokens(bag, corpus.tokens(d));
  return bag;
}

namespace {

TopicDescriptor make_descriptor(const ConceptTree& tree, NodeId id, TopicId topic_id, int level,
                                const WordWeights& weights, std::size_t top_k) {
  const ConceptNode& n = tree.node(id);
  TopicDescriptor d;
  d.topic_id = topic_id;
  d.node_id = id;
  d.parent_node = n.parent;
  d.level = level;
  d.centroid = n.stats.mean();
  d.top_words = top_words(weights, top_k);
  d.doc_count = n.stats.count();
  return d;
}

}  // namespace

std::vector<std::vector<TopicDescriptor>> extract_hierarchical_topics(const ConceptTree& tree,
                                                                      const Corpus& corpus,
                                                                      std::size_t levels,
                                                                      std::size_t top_k) {
  if (tree.empty()) throw ValidationError("cannot extract topics from an empty tree");
  if (top_k == 0) throw ValidationError("top_k must be >= 1");
  if (levels == 0) return {};

  std::vector<std::vector<NodeId>> by_level{{tree.root()}};
  while (by_level.size() < levels) {
    std::vector<NodeId> next;
    for (NodeId id : by_level.back()) {
      const auto& kids = tree.node(id).children;
      next.insert(next.end(), kids.begin(), kids.end());
    }
    if (next.empty()) break;
    by_level.push_back(std::move(next));
  }

  // Bags bottom-up: the deepest level reads its subtrees, every level above
  // sums its children (leaves read their own documents).
  std::map<NodeId, WordBag> bags;
  for (std::size_t lvl = by_level.size(); lvl-- > 0;) {
    for (NodeId id : by_level[lvl]) {
      const ConceptNode& n = tree.node(id);
      if (lvl + 1 == by_level.size() || n.is_leaf()) {
        bags[id] = subtree_bag(tree, corpus, id);
      } else {
        WordBag bag;
        for (NodeId c : n.children) add_bag(bag, bags.at(c));
        bags[id] = std::move(bag);
      }
    }
  }

  std::vector<std::vector<TopicDescriptor>> out;
  for (std::size_t lvl = 0; lvl < by_level.size(); ++lvl) {
    std::map<TopicId, WordBag> topic_bags;
    for (NodeId id : by_level[lvl]) topic_bags[id] = bags.at(id);
    std::map<TopicId, WordWeights> weights;
    bool any_tokens = false;
    for (const auto& [id, bag] : topic_bags) any_tokens = any_tokens || !bag.empty();
    if (any_tokens) weights = ctfidf(topic_bags);
    std::vector<TopicDescriptor> level_topics;
    for (NodeId id : by_level[lvl]) {
      level_topics.push_back(make_descriptor(tree, id, id, static_cast<int>(lvl), weights[id], top_k));
    }
    out.push_back(std::move(level_topics));
  }
  return out;
}

std::size_t FlatPartition::outlier_docs() const {
  return static_cast<std::size_t>(std::count_if(assignment.begin(), assignment.end(),
                                                [](const auto& kv) { return kv.second == kOutlierTopic; }));
}

FlatPartition flat_cut(const ConceptTree& tree, std::size_t max_clusters, double leaf_ratio) {
  if (tree.empty()) throw ValidationError("cannot cut an empty tree");
  if (max_clusters == 0) throw ValidationError("max_clusters must be >= 1");
  if (!(leaf_ratio >= 0.0 && leaf_ratio <= 1.0)) throw ValidationError("leaf_ratio must lie in [0, 1]");

  auto larger_first = [&](NodeId a, NodeId b) {
    const auto ca = tree.node(a).stats.count();
    const auto cb = tree.node(b).stats.count();
    if (ca != cb) return ca > cb;
    return a < b;
  };

  std::vector<NodeId> frontier{tree.root()};
  std::size_t frontier_leaves = tree.node(tree.root()).is_leaf() ? 1 : 0;
  while (true) {
    std::vector<NodeId> candidates;
    for (NodeId id : frontier) {
      if (!tree.node(id).is_leaf()) candidates.push_back(id);
    }
    std::sort(candidates.begin(), candidates.end(), larger_first);
    bool committed = false;
    for (NodeId id : candidates) {
      const auto& kids = tree.node(id).children;
      const std::size_t size = frontier.size() - 1 + kids.size();
      std::size_t leaves = frontier_leaves;
      for (NodeId c : kids) leaves += tree.node(c).is_leaf() ? 1 : 0;
      if (size > max_clusters) continue;
      if (static_cast<double>(leaves) > leaf_ratio * static_cast<double>(size)) continue;
      frontier.erase(std::find(frontier.begin(), frontier.end(), id));
      frontier.insert(frontier.end(), kids.begin(), kids.end());
      frontier_leaves = leaves;
      committed = true;
      break;
    }
    if (!committed) break;
  }

  FlatPartition part;
  part.params = {max_clusters, leaf_ratio};
  std::vector<NodeId> topic_nodes;
  for (NodeId id : frontier) {
    const ConceptNode& n = tree.node(id);
    // The root stands for everything, so it is never an outlier even when it
    // is a lone singleton leaf.
    if (n.is_leaf() && n.stats.count() == 1 && id != tree.root()) {
      part.outlier_nodes.push_back(id);
    } else {
      topic_nodes.push_back(id);
    }
  }
  std::sort(topic_nodes.begin(), topic_nodes.end(), larger_first);
  std::sort(part.outlier_nodes.begin(), part.outlier_nodes.end());
  for (std::size_t i = 0; i < topic_nodes.size(); ++i) {
    const TopicId tid = static_cast<TopicId>(i);
    part.topics.push_back({tid, topic_nodes[i], tree.node(topic_nodes[i]).stats.count()});
    for (const DocId& d : tree.subtree_docs(topic_nodes[i])) part.assignment[d] = tid;
  }
  for (NodeId id : part.outlier_nodes) {
    for (const DocId& d : tree.node(id).doc_ids) part.assignment[d] = kOutlierTopic;
  }
  part.cut = topic_nodes;
  part.cut.insert(part.cut.end(), part.outlier_nodes.begin(), part.outlier_nodes.end());
  return part;
}

std::vector<TopicDescriptor> describe_partition(const ConceptTree& tree, const Corpus& corpus,
                                                const FlatPartition& partition, std::size_t top_k) {
  if (top_k == 0) throw ValidationError("top_k must be >= 1");
  std::map<TopicId, WordBag> bags;
  bool any_tokens = false;
  for (const FlatTopic& t : partition.topics) {
    bags[t.topic_id] = subtree_bag(tree, corpus, t.node_id);
    any_tokens = any_tokens || !bags[t.topic_id].empty();
  }
  std::map<TopicId, WordWeights> weights;
  if (any_tokens) weights = ctfidf(bags);
  std::vector<TopicDescriptor> out;
  for (const FlatTopic& t : partition.topics) {
    out.push_back(make_descriptor(tree, t.node_id, t.topic_id, -1, weights[t.topic_id], top_k));
  }
  return out;
}

TopicAlignment match_topics(const std::vector<TopicDescriptor>& prev,
                            const std::vector<TopicDescriptor>& curr, double tau) {
  TopicAlignment out;
  out.tau = tau;

  auto zero_norm = [](const TopicDescriptor& t) {
    return std::all_of(t.centroid.begin(), t.centroid.end(), [](double v) { return v == 0.0; });
  };
  for (const auto& p : prev) {
    if (zero_norm(p)) out.zero_norm_prev.push_back(p.topic_id);
  }
  for (const auto& c : curr) {
    if (zero_norm(c)) out.zero_norm_curr.push_back(c.topic_id);
  }

  std::vector<TopicMatch> pairs;
  for (const auto& p : prev) {
    for (const auto& c : curr) {
      if (p.centroid.size() != c.centroid.size()) {
        throw ValidationError("topic centroids differ in dimensionality");
      }
      const std::optional<double> sim = cosine_similarity(p.centroid, c.centroid);
      if (sim && *sim >= tau) pairs.push_back({p.topic_id, c.topic_id, *sim});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const TopicMatch& a, const TopicMatch& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    if (a.prev != b.prev) return a.prev < b.prev;
    return a.curr < b.curr;
  });

  std::set<TopicId> used_prev;
  std::set<TopicId> used_curr;
  for (const TopicMatch& m : pairs) {
    if (used_prev.contains(m.prev) || used_curr.contains(m.curr)) continue;
    used_prev.insert(m.prev);
    used_curr.insert(m.curr);
    out.matched.push_back(m);
  }
  for (const auto& p : prev) {
    if (!used_prev.contains(p.topic_id)) out.unmatched_prev.push_back(p.topic_id);
  }
  for (const auto& c : curr) {
    if (!used_curr.contains(c.topic_id)) out.unmatched_curr.push_back(c.topic_id);
  }
  return out;
}

}  // namespace cobwebtm
