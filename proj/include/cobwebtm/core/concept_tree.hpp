#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "cobwebtm/core/gaussian_stats.hpp"

namespace cobwebtm {

using NodeId = std::int64_t;
using DocId = std::string;

inline constexpr NodeId kNoNode = -1;

// How a candidate partition's CU is scaled before operators are compared.
// None compares raw CU, under which a singleton child beats inserting into
// any child whose variance exceeds ~e * variance_floor. PartitionSize divides
// by the number of children, PartitionEntropy by -sum P(c) ln P(c).
enum class CuNormalization : std::uint8_t { None, PartitionSize, PartitionEntropy };

std::string_view to_string(CuNormalization n);
CuNormalization parse_cu_normalization(std::string_view name);  // "none", "size", "entropy"

struct TreeConfig {
  std::size_t dim = 0;
  double variance_floor = 1e-4;
  CuNormalization normalization = CuNormalization::PartitionEntropy;
  // Upper bound on worker threads used to score children at one node.
  std::size_t threads = 1;

  void validate() const;
};

// Declaration order is the tie-break order: earlier wins exact ties.
enum class OperatorKind : std::uint8_t { Insert = 0, New = 1, Merge = 2, Split = 3 };

std::string_view to_string(OperatorKind op);

struct OperatorCounts {
  std::array<std::uint64_t, 4> values{};

  std::uint64_t& operator[](OperatorKind op) { return values[static_cast<std::size_t>(op)]; }
  std::uint64_t operator[](OperatorKind op) const { return values[static_cast<std::size_t>(op)]; }
  std::uint64_t total() const { return values[0] + values[1] + values[2] + values[3]; }

  friend OperatorCounts operator-(const OperatorCounts& a, const OperatorCounts& b);
  friend bool operator==(const OperatorCounts&, const OperatorCounts&) = default;
};

struct OperatorDecision {
  OperatorKind op = OperatorKind::New;
  NodeId node = kNoNode;
  // Indexed by OperatorKind; -inf when the operator is undefined here.
  std::array<double, 4> scores{};
  NodeId best_child = kNoNode;
  NodeId second_child = kNoNode;

  double score(OperatorKind k) const { return scores[static_cast<std::size_t>(k)]; }
};

struct ConceptNode {
  NodeId id = kNoNode;
  NodeId parent = kNoNode;
  GaussianStats stats;
  std::vector<NodeId> children;
  std::vector<DocId> doc_ids;

  bool is_leaf() const { return children.empty(); }
};

/// Incremental concept hierarchy over dense embeddings.
///
/// Every node summarizes its subtree with a diagonal Gaussian. Documents enter
/// through `ifit`, which walks a single root-to-leaf path: at each internal
/// node the statistics absorb the embedding, then INSERT, NEW, MERGE and
/// SPLIT are scored by category utility over the hypothetical child
/// partitions and the best one is applied. Reaching a leaf fractures it into
/// an internal node over the old leaf and a new singleton, so each document
/// ends in exactly one fresh leaf.
///
/// Node ids are handed out monotonically and never reused.
class ConceptTree {
 public:
  explicit ConceptTree(TreeConfig config);

  // Rebuilds a tree from explicit node records. Checks parent/child links,
  // the children-xor-docs rule and count consistency; statistics are taken as
  // given.
  static ConceptTree from_nodes(TreeConfig config, std::vector<ConceptNode> nodes, NodeId root,
                                NodeId next_id, OperatorCounts counts = {});

  // Returns the id of the leaf created for `doc`. Invalid input leaves the
  // tree untouched.
  NodeId ifit(const DocId& doc, std::span<const double> x);

  // Read-only descent by insertion score; root-to-leaf path.
  std::vector<NodeId> categorize(std::span<const double> x) const;

  // Scores the four operators at an internal node as if `x` were being
  // incorporated there. The node's stored statistics must not include `x` yet.
  OperatorDecision evaluate_operators(NodeId node, std::span<const double> x) const;

  const TreeConfig& config() const { return config_; }
  bool empty() const { return root_ == kNoNode; }
  NodeId root() const { return root_; }
  NodeId next_id() const { return static_cast<NodeId>(nodes_.size()); }
  bool contains(NodeId id) const;
  const ConceptNode& node(NodeId id) const;

  std::size_t node_count() const { return live_nodes_; }
  std::size_t doc_count() const { return doc_count_; }
  std::size_t leaf_count() const;
  // Number of edges on the longest root-to-leaf path; 0 for a lone root.
  std::size_t depth() const;
  std::size_t node_depth(NodeId id) const;

  // Live ids in ascending order.
  std::vector<NodeId> node_ids() const;
  std::vector<DocId> subtree_docs(NodeId id) const;
  bool is_ancestor_or_self(NodeId ancestor, NodeId id) const;

  const OperatorCounts& operator_counts() const { return counts_; }

  void set_threads(std::size_t threads) { config_.threads = threads == 0 ? 1 : threads; }

 private:
  ConceptNode& at(NodeId id);
  NodeId add_node(ConceptNode node);
  void discard(NodeId id);

  // Scores operators at `node_stats` (which already includes x) over the given
  // children.
  OperatorDecision score(NodeId node, const GaussianStats& node_stats, std::span<const double> x) const;
  struct ChildScores {
    std::vector<double> cu;           // partition CU with x inserted into child i
    std::vector<double> entropy;      // U(child i)
    std::vector<double> with_x;       // U(child i + x)
    double weighted_sum = 0.0;        // sum_i N_i U(child i)
  };
  ChildScores insertion_scores(const GaussianStats& parent_with_x, const std::vector<NodeId>& children,
                               std::span<const double> x) const;
  std::pair<std::size_t, std::size_t> best_two(const std::vector<NodeId>& children,
                                               const std::vector<double>& scores,
                                               std::span<const double> x) const;

  TreeConfig config_;
  std::vector<std::optional<ConceptNode>> nodes_;
  NodeId root_ = kNoNode;
  std::size_t live_nodes_ = 0;
  std::size_t doc_count_ = 0;
  std::unordered_set<DocId> doc_ids_;
  OperatorCounts counts_;
};

}  // namespace cobwebtm
