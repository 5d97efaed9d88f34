#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cobwebtm/core/concept_tree.hpp"
#include "cobwebtm/metrics/metrics.hpp"
#include "cobwebtm/topics/corpus.hpp"
#include "cobwebtm/topics/topics.hpp"

namespace cobwebtm {

struct MetricToggles {
  bool cv = true;
  bool npmi = true;
  bool ari = true;
  bool tcd = true;
  bool isim = true;  // only when a word-vector table is supplied
  bool hierarchy = true;
};

struct ExperimentConfig {
  std::size_t initial_batch = 2000;
  std::size_t batch_size = 125;
  std::size_t max_clusters = 10;
  double leaf_ratio = 0.15;
  std::size_t top_k = 10;        // words per reported topic; C_v and NPMI use these
  std::size_t isim_words = 5;
  std::size_t isim_intruders = 15;
  double tau = 0.5;
  double variance_floor = 1e-4;
  CuNormalization normalization = CuNormalization::PartitionEntropy;
  std::uint64_t seed = 0;
  std::size_t window_size = 110;
  std::size_t hierarchy_levels = 3;  // root included
  std::size_t threads = 1;
  MetricToggles metrics;

  void validate() const;
};

// ceil(1.3 * k)
std::size_t max_clusters_for_k(std::size_t k);

// Positive integer from CBWTM_THREADS, else 1.
std::size_t threads_from_env();

// Intruder-sampling seed for one batch (splitmix64 of seed and batch index).
std::uint64_t isim_seed(std::uint64_t seed, std::uint64_t batch_index);

struct MetricReport {
  std::optional<double> cv;
  std::optional<double> ari;
  std::optional<double> tcd;
  std::optional<double> isim;
  std::optional<double> npmi;
  std::optional<double> pcc;
  std::optional<double> sd;
  std::vector<std::string> flags;
};

struct BatchReport {
  std::size_t batch_index = 0;
  std::size_t docs_processed = 0;
  std::size_t docs_total = 0;
  OperatorCounts operators;
  std::size_t node_count = 0;
  std::size_t depth = 0;
  std::size_t leaf_count = 0;
  CutParams cut_params;
  std::size_t outlier_docs = 0;
  // Topic ids here are stable across batches.
  std::vector<TopicDescriptor> topics;
  std::map<DocId, TopicId> assignment;
  TopicAlignment alignment;
  MetricReport metrics;
  double duration_ms = 0.0;
};

// 16 hex digits of FNV-1a over the little-endian bytes of the values.
std::string centroid_digest(std::span<const double> centroid);

nlohmann::json metrics_to_json(const MetricReport& m);
nlohmann::json report_to_json(const BatchReport& r);
// The report without wall-clock fields.
nlohmann::json without_timing(nlohmann::json report);

/// Lifelong experiment state: the tree, every document seen so far, and the
/// previous batch's topics with the stable ids they were given.
///
/// Each batch is inserted in order, then the flat cut is recomputed and its
/// topics aligned with the previous batch's. Matched topics inherit the old
/// id; new topics draw fresh ids, so a topic keeps one id along a chain of
/// matches.
class Experiment {
 public:
  Experiment(ExperimentConfig config, std::size_t dim, const WordVectorTable* word_vectors = nullptr);

  // Throws ValidationError before touching the tree if any document is
  // invalid or already seen.
  BatchReport process_batch(std::span<const DocumentRecord> batch);

  const ExperimentConfig& config() const { return config_; }
  const ConceptTree& tree() const { return tree_; }
  const Corpus& corpus() const { return corpus_; }
  std::size_t batches_done() const { return batches_done_; }
  std::size_t docs_seen() const { return corpus_.size(); }
  const std::vector<TopicDescriptor>& topics() const { return prev_topics_; }
  const std::map<DocId, TopicId>& assignment() const { return prev_assignment_; }
  const FlatPartition& partition() const { return partition_; }

  void set_word_vectors(const WordVectorTable* word_vectors) { word_vectors_ = word_vectors; }

  // Tree, partition and harness state. Documents are not stored; restore
  // re-reads them from the stream.
  nlohmann::json checkpoint() const;
  void save_checkpoint(const std::filesystem::path& path) const;
  // `stream` must start with the documents the checkpoint has seen, in order.
  static Experiment restore(const nlohmann::json& checkpoint, std::span<const DocumentRecord> stream,
                            const WordVectorTable* word_vectors = nullptr);
  static Experiment restore_file(const std::filesystem::path& path, std::span<const DocumentRecord> stream,
                                 const WordVectorTable* word_vectors = nullptr);

 private:
  MetricReport compute_metrics(const std::vector<TopicDescriptor>& topics, const TopicAlignment& alignment,
                               const std::map<DocId, TopicId>& assignment) const;

  ExperimentConfig config_;
  ConceptTree tree_;
  Corpus corpus_;
  const WordVectorTable* word_vectors_ = nullptr;
  std::size_t batches_done_ = 0;
  TopicId next_topic_id_ = 0;
  FlatPartition partition_;
  std::vector<TopicDescriptor> prev_topics_;
  std::map<DocId, TopicId> prev_assignment_;
};

// Batch boundaries over a stream of `total` documents starting at `offset`:
// the first batch of the whole stream has initial_batch documents, later ones
// batch_size. Returns [begin, end) pairs.
std::vector<std::pair<std::size_t, std::size_t>> batch_bounds(const ExperimentConfig& config, std::size_t total,
                                                              std::size_t offset = 0);

struct RunOptions {
  std::optional<std::filesystem::path> checkpoint;  // written after every batch
  std::optional<std::size_t> max_batches;           // per call
  std::function<void(const BatchReport&)> on_report;
};

// Streams `docs` through `experiment`, continuing after the documents it has
// already seen.
std::vector<BatchReport> run_stream(Experiment& experiment, std::span<const DocumentRecord> docs,
                                    const RunOptions& options = {});

struct HoldoutResult {
  std::string label;
  std::size_t holdout_docs = 0;
  std::optional<TopicId> best_topic;
  double purity = 0.0;
  double recall = 0.0;
  bool best_is_new = false;  // listed in the final alignment's unmatched_curr
  bool emerged = false;      // purity >= 0.8 and recall >= 0.8
  bool absorbed = false;     // no such topic; the holdout merged into existing ones
  MetricReport before;
  MetricReport after;
  std::vector<BatchReport> reports;
};

/// Streams every document not labelled `label` under the normal batch
/// protocol, then all `label` documents as one final batch, and inspects the
/// final flat cut for a topic that captures them.
HoldoutResult holdout_experiment(const ExperimentConfig& config, std::span<const DocumentRecord> docs,
                                 const std::string& label, const WordVectorTable* word_vectors = nullptr,
                                 const RunOptions& options = {});

nlohmann::json holdout_to_json(const HoldoutResult& r);

}  // namespace cobwebtm
