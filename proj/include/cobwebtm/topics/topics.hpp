#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cobwebtm/core/concept_tree.hpp"
#include "cobwebtm/topics/corpus.hpp"
#include "cobwebtm/topics/ctfidf.hpp"

namespace cobwebtm {

struct TopicDescriptor {
  // Flat topics: the cut's topic number (or a stable id assigned by the
  // harness). Hierarchical topics: the node id.
  TopicId topic_id = 0;
  NodeId node_id = kNoNode;
  NodeId parent_node = kNoNode;
  int level = -1;  // depth below the root; -1 for flat topics
  Embedding centroid;
  std::vector<std::pair<std::string, double>> top_words;
  std::uint64_t doc_count = 0;

  std::vector<std::string> words() const;
};

// Bag of every token of every document under `node`.
WordBag subtree_bag(const ConceptTree& tree, const Corpus& corpus, NodeId node);

/// Topics for every node in the first `levels` levels (root = level 0).
/// c-TF-IDF runs separately per level, with that level's nodes as the topic
/// set. Result index is the level; deeper levels may be shorter or absent
/// when branches end early.
std::vector<std::vector<TopicDescriptor>> extract_hierarchical_topics(const ConceptTree& tree,
                                                                      const Corpus& corpus,
                                                                      std::size_t levels,
                                                                      std::size_t top_k);

struct CutParams {
  std::size_t max_clusters = 10;
  double leaf_ratio = 0.15;
};

struct FlatTopic {
  TopicId topic_id = 0;
  NodeId node_id = kNoNode;
  std::uint64_t doc_count = 0;
};

struct FlatPartition {
  CutParams params;
  std::vector<NodeId> cut;            // topic nodes by topic id, then outlier leaves
  std::vector<FlatTopic> topics;      // topic ids 0.. by descending size
  std::vector<NodeId> outlier_nodes;  // singleton leaves on the cut
  std::map<DocId, TopicId> assignment;

  std::size_t outlier_docs() const;
};

/// Antichain cut through the tree.
///
/// Starting from {root}, repeatedly replaces the largest internal frontier
/// node by its children, provided the frontier then holds at most
/// max_clusters nodes and at most leaf_ratio of them are tree leaves. When the
/// largest candidate fails, smaller ones are tried; the walk ends when nothing
/// can be expanded. Singleton leaves on the cut become outliers (topic -1).
FlatPartition flat_cut(const ConceptTree& tree, std::size_t max_clusters, double leaf_ratio);

// Descriptors of the partition's non-outlier topics, c-TF-IDF over those topics.
std::vector<TopicDescriptor> describe_partition(const ConceptTree& tree, const Corpus& corpus,
                                                const FlatPartition& partition, std::size_t top_k);

struct TopicMatch {
  TopicId prev = 0;
  TopicId curr = 0;
  double similarity = 0.0;
};

struct TopicAlignment {
  double tau = 0.5;
  std::vector<TopicMatch> matched;  // non-increasing similarity
  std::vector<TopicId> unmatched_prev;  // retired
  std::vector<TopicId> unmatched_curr;  // new
  std::vector<TopicId> zero_norm_prev;
  std::vector<TopicId> zero_norm_curr;
};

/// Greedy one-to-one matching of topics by centroid cosine similarity: take
/// the most similar free pair, drop both, repeat while the similarity is at
/// least tau. Exact ties go to the smaller (prev id, curr id). Zero-norm
/// centroids never match and are listed separately.
TopicAlignment match_topics(const std::vector<TopicDescriptor>& prev,
                            const std::vector<TopicDescriptor>& curr, double tau);

}  // namespace cobwebtm
