#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cobwebtm/core/concept_tree.hpp"
#include "cobwebtm/metrics/cooccurrence.hpp"
#include "cobwebtm/topics/topics.hpp"

namespace cobwebtm {

// A metric that may be undefined, with the items excluded along the way.
struct MetricValue {
  std::optional<double> value;
  std::vector<std::string> flags;
};

// Mean of the defined values; flags are concatenated.
MetricValue mean_of(const std::vector<MetricValue>& values);

// Mean NPMI over all unordered pairs of in-vocabulary words. Undefined with
// fewer than two such words; skipped words are flagged.
MetricValue topic_npmi(const std::vector<std::string>& words, const CooccurrenceTable& table);

/// C_v = mean over i<j of cos(v(w_i), v(w_j)), v(w_i) = (NPMI(w_i, w_k))_k.
/// Requires at least two words, all in vocabulary. A pair with a zero-norm
/// vector contributes 0 and is flagged.
MetricValue cv_coherence(const std::vector<std::string>& words, const CooccurrenceTable& table);

// Adjusted Rand index over two labelings of the same items. Computed from
// integer pair counts; both-trivial partitions (all singletons or one
// cluster) score 1. Needs at least two items.
double adjusted_rand_index(std::span<const std::int64_t> a, std::span<const std::int64_t> b);
double adjusted_rand_index(const std::map<DocId, TopicId>& a, const std::map<DocId, TopicId>& b);

// Mean of 1 - cos(prev, curr) over matched pairs; zero-norm pairs are
// excluded and flagged. Undefined with no usable pair.
MetricValue topic_centroid_drift(const TopicAlignment& alignment, const std::map<TopicId, Embedding>& prev,
                                 const std::map<TopicId, Embedding>& curr);

// Word vectors in row order, looked up by word.
class WordVectorTable {
 public:
  WordVectorTable() = default;
  WordVectorTable(std::vector<std::string> words, std::size_t dim, std::vector<double> values);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  bool contains(const std::string& w) const { return index_.contains(w); }
  std::span<const double> vector(const std::string& w) const;  // throws ValidationError

 private:
  std::vector<std::string> words_;
  std::size_t dim_ = 0;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Intruder similarity. For each topic, `n_intruders` distinct words are drawn
/// uniformly (seeded) from the table vocabulary minus the topic's words; each
/// intruder scores its mean cosine to the topic words. Result is the mean over
/// intruders, then over topics. Lower means tighter topics.
MetricValue intruder_similarity(const std::vector<std::vector<std::string>>& topics, const WordVectorTable& vectors,
                                std::size_t n_intruders, std::uint64_t seed);

// Mean cross-level NPMI between child and parent words once their overlap is
// removed. Undefined when either side becomes empty.
MetricValue parent_child_coherence(const std::vector<std::string>& child_words,
                                   const std::vector<std::string>& parent_words, const CooccurrenceTable& table);

// Distinct words occurring in exactly one sibling set, over distinct words.
double sibling_diversity(const std::vector<std::vector<std::string>>& sibling_sets);

struct HierarchyScores {
  std::vector<MetricValue> npmi_per_level;
  MetricValue npmi;  // mean over levels
  MetricValue pcc;   // mean over parent-child edges
  MetricValue sd;    // mean over parents with >= 2 child topics
};

// Scores a level-indexed topic listing as produced by
// extract_hierarchical_topics.
HierarchyScores hierarchy_scores(const std::vector<std::vector<TopicDescriptor>>& levels,
                                 const CooccurrenceTable& table);

}  // namespace cobwebtm
