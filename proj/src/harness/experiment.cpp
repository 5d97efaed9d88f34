#include "cobwebtm/harness/experiment.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <unordered_set>

#include "cobwebtm/core/snapshot.hpp"
#include "cobwebtm/error.hpp"
#include "cobwebtm/metrics/cooccurrence.hpp"

namespace cobwebtm {

namespace {

constexpr int kCheckpointVersion = 1;

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

void append_flags(std::vector<std::string>& out, const std::vector<std::string>& flags) {
  out.insert(out.end(), flags.begin(), flags.end());
}

std::uint64_t fnv1a(std::uint64_t h, const unsigned char* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

std::string doc_order_digest(const Corpus& corpus) {
  std::uint64_t h = kFnvOffset;
  for (const auto& d : corpus.docs()) {
    h = fnv1a(h, reinterpret_cast<const unsigned char*>(d.id.data()), d.id.size());
    const unsigned char sep = 0;
    h = fnv1a(h, &sep, 1);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}


nlohmann::json config_to_json(const ExperimentConfig& c) {
  return {{"initial_batch", c.initial_batch},
          {"batch_size", c.batch_size},
          {"max_clusters", c.max_clusters},
          {"leaf_ratio", c.leaf_ratio},
          {"top_k", c.top_k},
          {"isim_words", c.isim_words},
          {"isim_intruders", c.isim_intruders},
          {"tau", c.tau},
          {"variance_floor", c.variance_floor},
          {"cu_normalization", std::string(to_string(c.normalization))},
          {"seed", c.seed},
          {"window_size", c.window_size},
          {"hierarchy_levels", c.hierarchy_levels},
          {"metrics",
           {{"cv", c.metrics.cv},
            {"npmi", c.metrics.npmi},
            {"ari", c.metrics.ari},
            {"tcd", c.metrics.tcd},
            {"isim", c.metrics.isim},
            {"hierarchy", c.metrics.hierarchy}}}};
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.initial_batch = j.at("initial_batch").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.max_clusters = j.at("max_clusters").get<std::size_t>();
  c.leaf_ratio = j.at("leaf_ratio").get<double>();
  c.top_k = j.at("top_k").get<std::size_t>();
  c.isim_words = j.at("isim_words").get<std::size_t>();
  c.isim_intruders = j.at("isim_intruders").get<std::size_t>();
  c.tau = j.at("tau").get<double>();
  c.variance_floor = j.at("variance_floor").get<double>();
  c.normalization = parse_cu_normalization(j.at("cu_normalization").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.window_size = j.at("window_size").get<std::size_t>();
  c.hierarchy_levels = j.at("hierarchy_levels").get<std::size_t>();
  const auto& m = j.at("metrics");
  c.metrics.cv = m.at("cv").get<bool>();
  c.metrics.npmi = m.at("npmi").get<bool>();
  c.metrics.ari = m.at("ari").get<bool>();
  c.metrics.tcd = m.at("tcd").get<bool>();
  c.metrics.isim = m.at("isim").get<bool>();
  c.metrics.hierarchy = m.at("hierarchy").get<bool>();
  return c;
}

nlohmann::json descriptor_to_json(const TopicDescriptor& t) {
  nlohmann::json words = nlohmann::json::array();
  for (const auto& [w, weight] : t.top_words) words.push_back({w, weight});
  return {{"topic_id", t.topic_id},
          {"node_id", t.node_id},
          {"doc_count", t.doc_count},
          {"top_words", words},
          {"centroid_digest", centroid_digest(t.centroid)}};
}

nlohmann::json alignment_to_json(const TopicAlignment& a) {
  nlohmann::json matched = nlohmann::json::array();
  for (const auto& m : a.matched) matched.push_back({{"prev", m.prev}, {"curr", m.curr}, {"similarity", m.similarity}});
  return {{"tau", a.tau},
          {"matched", matched},
          {"unmatched_prev", a.unmatched_prev},
          {"unmatched_curr", a.unmatched_curr},
          {"zero_norm_prev", a.zero_norm_prev},
          {"zero_norm_curr", a.zero_norm_curr}};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (initial_batch < 1) throw ValidationError("initial_batch must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (max_clusters < 1) throw ValidationError("max_clusters must be >= 1");
  if (!(leaf_ratio >= 0.0 && leaf_ratio <= 1.0)) throw ValidationError("leaf_ratio must lie in [0, 1]");
  if (top_k < 1) throw ValidationError("top_k must be >= 1");
  if (isim_words < 1) throw ValidationError("isim_words must be >= 1");
  if (isim_intruders < 1) throw ValidationError("isim_intruders must be >= 1");
  if (!std::isfinite(tau)) throw ValidationError("tau must be finite");
  if (!(variance_floor > 0.0) || !std::isfinite(variance_floor)) throw ValidationError("variance_floor must be > 0");
  if (window_size < 1) throw ValidationError("window_size must be >= 1");
  if (hierarchy_levels < 1) throw ValidationError("hierarchy_levels must be >= 1");
}

std::size_t max_clusters_for_k(std::size_t k) {
  if (k == 0) throw ValidationError("k hint must be >= 1");
  // Integer form of ceil(1.3 k), immune to 1.3 not being representable.
  return (13 * k + 9) / 10;
}

std::size_t threads_from_env() {
  const char* v = std::getenv("CBWTM_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  char* end = nullptr;
  const unsigned long long n = std::strtoull(v, &end, 10);
  if (*end != '\0' || n == 0) return 1;
  return static_cast<std::size_t>(n);
}

std::uint64_t isim_seed(std::uint64_t seed, std::uint64_t batch_index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (batch_index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string centroid_digest(std::span<const double> centroid) {
  std::uint64_t h = kFnvOffset;
  for (double v : centroid) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
    h = fnv1a(h, bytes, 8);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json metrics_to_json(const MetricReport& m) {
  return {{"cv", optional_json(m.cv)},   {"ari", optional_json(m.ari)},   {"tcd", optional_json(m.tcd)},
          {"isim", optional_json(m.isim)}, {"npmi", optional_json(m.npmi)}, {"pcc", optional_json(m.pcc)},
          {"sd", optional_json(m.sd)},   {"flags", m.flags}};
}

nlohmann::json report_to_json(const BatchReport& r) {
  nlohmann::json topics = nlohmann::json::array();
  for (const auto& t : r.topics) topics.push_back(descriptor_to_json(t));
  nlohmann::json assignment = nlohmann::json::object();
  for (const auto& [doc, topic] : r.assignment) assignment[doc] = topic;
  return {{"batch_index", r.batch_index},
          {"docs_processed", r.docs_processed},
          {"docs_total", r.docs_total},
          {"operator_counts",
           {{"INSERT", r.operators[OperatorKind::Insert]},
            {"NEW", r.operators[OperatorKind::New]},
            {"MERGE", r.operators[OperatorKind::Merge]},
            {"SPLIT", r.operators[OperatorKind::Split]}}},
          {"tree", {{"node_count", r.node_count}, {"depth", r.depth}, {"leaf_count", r.leaf_count}}},
          {"partition",
           {{"cut_params", {{"max_clusters", r.cut_params.max_clusters}, {"leaf_ratio", r.cut_params.leaf_ratio}}},
            {"topic_count", r.topics.size()},
            {"outlier_docs", r.outlier_docs},
            {"topics", topics},
            {"assignment", assignment}}},
          {"alignment", alignment_to_json(r.alignment)},
          {"metrics", metrics_to_json(r.metrics)},
          {"duration_ms", r.duration_ms}};
}

nlohmann::json without_timing(nlohmann::json report) {
  report.erase("duration_ms");
  return report;
}

Experiment::Experiment(ExperimentConfig config, std::size_t dim, const WordVectorTable* word_vectors)
    : config_(std::move(config)),
      tree_(TreeConfig{dim, config_.variance_floor, config_.normalization, config_.threads}),
      word_vectors_(word_vectors) {
  config_.validate();
}

BatchReport Experiment::process_batch(std::span<const DocumentRecord> batch) {
  if (batch.empty()) throw ValidationError("batch is empty");
  std::unordered_set<DocId> ids;
  for (const auto& d : batch) {
    validate_embedding(d.embedding, tree_.config().dim);
    if (corpus_.contains(d.id) || !ids.insert(d.id).second) {
      throw ValidationError("document " + d.id + " was already streamed");
    }
  }

  const auto start = std::chrono::steady_clock::now();
  const OperatorCounts before = tree_.operator_counts();
  for (const auto& d : batch) {
    tree_.ifit(d.id, d.embedding);
    DocumentRecord copy = d;
    copy.arrival_index = corpus_.size();
    corpus_.add(std::move(copy));
  }

  BatchReport r;
  r.batch_index = batches_done_;
  r.docs_processed = batch.size();
  r.docs_total = corpus_.size();
  r.operators = tree_.operator_counts() - before;
  r.node_count = tree_.node_count();
  r.depth = tree_.depth();
  r.leaf_count = tree_.leaf_count();

  FlatPartition part = flat_cut(tree_, config_.max_clusters, config_.leaf_ratio);
  std::vector<TopicDescriptor> topics = describe_partition(tree_, corpus_, part, config_.top_k);
  TopicAlignment alignment = match_topics(prev_topics_, topics, config_.tau);

  std::map<TopicId, TopicId> stable;
  for (const auto& m : alignment.matched) stable[m.curr] = m.prev;
  for (const auto& t : topics) {
    if (!stable.contains(t.topic_id)) stable[t.topic_id] = next_topic_id_++;
  }
  for (auto& m : alignment.matched) m.curr = stable.at(m.curr);
  for (auto& id : alignment.unmatched_curr) id = stable.at(id);
  for (auto& id : alignment.zero_norm_curr) id = stable.at(id);
  for (auto& t : topics) t.topic_id = stable.at(t.topic_id);
  std::map<DocId, TopicId> assignment;
  for (const auto& [doc, topic] : part.assignment) {
    assignment.emplace_hint(assignment.end(), doc, topic == kOutlierTopic ? kOutlierTopic : stable.at(topic));
  }

  r.cut_params = part.params;
  r.outlier_docs = part.outlier_docs();
  r.metrics = compute_metrics(topics, alignment, assignment);
  r.topics = topics;
  r.assignment = assignment;
  r.alignment = std::move(alignment);

  partition_ = std::move(part);
  prev_topics_ = std::move(topics);
  prev_assignment_ = std::move(assignment);
  ++batches_done_;
  r.duration_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

MetricReport Experiment::compute_metrics(const std::vector<TopicDescriptor>& topics, const TopicAlignment& alignment,
                                         const std::map<DocId, TopicId>& assignment) const {
  MetricReport out;
  const MetricToggles& on = config_.metrics;

  if (on.ari && !prev_assignment_.empty()) {
    std::vector<std::int64_t> old_labels;
    std::vector<std::int64_t> new_labels;
    for (const auto& [doc, topic] : prev_assignment_) {
      old_labels.push_back(topic);
      new_labels.push_back(assignment.at(doc));
    }
    if (old_labels.size() >= 2) {
      out.ari = adjusted_rand_index(old_labels, new_labels);
    } else {
      out.flags.push_back("ari:fewer_than_two_documents");
    }
  }

  if (on.tcd && !prev_topics_.empty()) {
    std::map<TopicId, Embedding> prev;
    std::map<TopicId, Embedding> curr;
    for (const auto& t : prev_topics_) prev[t.topic_id] = t.centroid;
    for (const auto& t : topics) curr[t.topic_id] = t.centroid;
    MetricValue tcd = topic_centroid_drift(alignment, prev, curr);
    out.tcd = tcd.value;
    append_flags(out.flags, tcd.flags);
    if (alignment.matched.empty()) out.flags.push_back("tcd:no_matched_topics");
  }

  std::vector<std::vector<TopicDescriptor>> levels;
  if (on.hierarchy) levels = extract_hierarchical_topics(tree_, corpus_, config_.hierarchy_levels, config_.top_k);

  if (on.cv || on.npmi || on.hierarchy) {
    std::set<std::string> tracked;
    for (const auto& t : topics) {
      for (const auto& [w, weight] : t.top_words) tracked.insert(w);
    }
    for (const auto& level : levels) {
      for (const auto& t : level) {
        for (const auto& [w, weight] : t.top_words) tracked.insert(w);
      }
    }
    CooccurrenceTable::Builder builder(config_.window_size, std::move(tracked));
    for (const auto& d : corpus_.docs()) builder.add(d.tokens);
    const CooccurrenceTable table = std::move(builder).build();
    if (table.window_count() == 0) {
      out.flags.push_back("coherence:no_windows");
    } else {
      if (on.cv) {
        std::vector<MetricValue> per_topic;
        for (const auto& t : topics) {
          if (t.top_words.size() < 2) {
            out.flags.push_back("cv:fewer_than_two_words:" + std::to_string(t.topic_id));
            continue;
          }
          per_topic.push_back(cv_coherence(t.words(), table));
        }
        const MetricValue cv = mean_of(per_topic);
        out.cv = cv.value;
        append_flags(out.flags, cv.flags);
      }
      if (on.npmi) {
        std::vector<MetricValue> per_topic;
        for (const auto& t : topics) per_topic.push_back(topic_npmi(t.words(), table));
        const MetricValue npmi_mean = mean_of(per_topic);
        out.npmi = npmi_mean.value;
        append_flags(out.flags, npmi_mean.flags);
      }
      if (on.hierarchy) {
        const HierarchyScores h = hierarchy_scores(levels, table);
        out.pcc = h.pcc.value;
        out.sd = h.sd.value;
        append_flags(out.flags, h.pcc.flags);
        append_flags(out.flags, h.sd.flags);
      }
    }
  }

  if (on.isim && word_vectors_ != nullptr) {
    std::vector<std::vector<std::string>> word_sets;
    for (const auto& t : topics) {
      std::vector<std::string> words = t.words();
      if (words.size() > config_.isim_words) words.resize(config_.isim_words);
      if (words.empty()) continue;
      const auto missing = std::find_if(words.begin(), words.end(),
                                        [&](const std::string& w) { return !word_vectors_->contains(w); });
      if (missing != words.end()) {
        out.flags.push_back("isim:no_vector:" + *missing);
        continue;
      }
      if (word_vectors_->size() <= words.size()) {
        out.flags.push_back("isim:vocabulary_too_small");
        continue;
      }
      word_sets.push_back(std::move(words));
    }
    if (!word_sets.empty()) {
      const MetricValue isim =
          intruder_similarity(word_sets, *word_vectors_, config_.isim_intruders, isim_seed(config_.seed, batches_done_));
      out.isim = isim.value;
      append_flags(out.flags, isim.flags);
    }
  }
  return out;
}

nlohmann::json Experiment::checkpoint() const {
  nlohmann::json topics = nlohmann::json::array();
  for (const auto& t : prev_topics_) {
    nlohmann::json words = nlohmann::json::array();
    for (const auto& [w, weight] : t.top_words) words.push_back({w, weight});
    topics.push_back({{"topic_id", t.topic_id},
                      {"node_id", t.node_id},
                      {"doc_count", t.doc_count},
                      {"centroid", t.centroid},
                      {"top_words", words}});
  }
  nlohmann::json assignment = nlohmann::json::object();
  for (const auto& [doc, topic] : prev_assignment_) assignment[doc] = topic;
  nlohmann::json flat = nlohmann::json::array();
  for (const auto& t : partition_.topics) flat.push_back({{"topic_id", t.topic_id}, {"node_id", t.node_id}});
  return {{"checkpoint_version", kCheckpointVersion},
          {"config", config_to_json(config_)},
          {"batches_done", batches_done_},
          {"docs_seen", corpus_.size()},
          {"doc_order_digest", doc_order_digest(corpus_)},
          {"next_topic_id", next_topic_id_},
          {"tree", tree_to_json(tree_)},
          {"partition",
           {{"max_clusters", partition_.params.max_clusters},
            {"leaf_ratio", partition_.params.leaf_ratio},
            {"cut", partition_.cut},
            {"topics", flat}}},
          {"topics", topics},
          {"assignment", assignment}};
}

void Experiment::save_checkpoint(const std::filesystem::path& path) const { write_json_atomically(path, checkpoint()); }

Experiment Experiment::restore(const nlohmann::json& cp, std::span<const DocumentRecord> stream,
                               const WordVectorTable* word_vectors) {
  try {
    if (cp.at("checkpoint_version").get<int>() != kCheckpointVersion) {
      throw ValidationError("unsupported checkpoint version " + cp.at("checkpoint_version").dump());
    }
    ExperimentConfig config = config_from_json(cp.at("config"));
    config.threads = threads_from_env();
    ConceptTree tree = tree_from_json(cp.at("tree"));
    Experiment e(config, tree.config().dim, word_vectors);
    tree.set_threads(config.threads);
    e.tree_ = std::move(tree);

    const auto seen = cp.at("docs_seen").get<std::size_t>();
    if (seen > stream.size()) {
      throw ValidationError("checkpoint has seen " + std::to_string(seen) + " documents but the stream holds " +
                            std::to_string(stream.size()));
    }
    if (seen != e.tree_.doc_count()) throw ValidationError("checkpoint document count disagrees with its tree");
    for (std::size_t i = 0; i < seen; ++i) {
      validate_embedding(stream[i].embedding, e.tree_.config().dim);
      DocumentRecord d = stream[i];
      d.arrival_index = i;
      e.corpus_.add(std::move(d));
    }
    if (doc_order_digest(e.corpus_) != cp.at("doc_order_digest").get<std::string>()) {
      throw ValidationError("stream does not begin with the checkpoint's documents in order");
    }

    e.batches_done_ = cp.at("batches_done").get<std::size_t>();
    e.next_topic_id_ = cp.at("next_topic_id").get<TopicId>();
    for (const auto& t : cp.at("topics")) {
      TopicDescriptor d;
      d.topic_id = t.at("topic_id").get<TopicId>();
      d.node_id = t.at("node_id").get<NodeId>();
      d.doc_count = t.at("doc_count").get<std::uint64_t>();
      d.centroid = t.at("centroid").get<Embedding>();
      for (const auto& w : t.at("top_words")) d.top_words.emplace_back(w.at(0).get<std::string>(), w.at(1).get<double>());
      e.prev_topics_.push_back(std::move(d));
    }
    for (const auto& [doc, topic] : cp.at("assignment").items()) e.prev_assignment_[doc] = topic.get<TopicId>();

    const auto& p = cp.at("partition");
    if (!e.tree_.empty()) {
      e.partition_ = flat_cut(e.tree_, p.at("max_clusters").get<std::size_t>(), p.at("leaf_ratio").get<double>());
      if (e.partition_.cut != p.at("cut").get<std::vector<NodeId>>()) {
        throw ValidationError("checkpoint partition does not match its tree");
      }
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed checkpoint: ") + ex.what());
  }
}

Experiment Experiment::restore_file(const std::filesystem::path& path, std::span<const DocumentRecord> stream,
                                    const WordVectorTable* word_vectors) {
  return restore(read_json_file(path), stream, word_vectors);
}

std::vector<std::pair<std::size_t, std::size_t>> batch_bounds(const ExperimentConfig& config, std::size_t total,
                                                              std::size_t offset) {
  config.validate();
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t begin = 0;
  std::size_t size = config.initial_batch;
  bool aligned = offset == 0;
  while (begin < total) {
    const std::size_t end = std::min(total, begin + size);
    if (begin == offset) aligned = true;
    if (begin >= offset) out.emplace_back(begin, end);
    begin = end;
    size = config.batch_size;
  }
  if (begin == offset) aligned = true;
  if (!aligned) throw ValidationError("offset " + std::to_string(offset) + " is not a batch boundary");
  return out;
}

std::vector<BatchReport> run_stream(Experiment& experiment, std::span<const DocumentRecord> docs,
                                    const RunOptions& options) {
  std::vector<BatchReport> reports;
  for (const auto& [begin, end] : batch_bounds(experiment.config(), docs.size(), experiment.docs_seen())) {
    if (options.max_batches && reports.size() >= *options.max_batches) break;
    reports.push_back(experiment.process_batch(docs.subspan(begin, end - begin)));
    if (options.checkpoint) experiment.save_checkpoint(*options.checkpoint);
    if (options.on_report) options.on_report(reports.back());
  }
  return reports;
}

HoldoutResult holdout_experiment(const ExperimentConfig& config, std::span<const DocumentRecord> docs,
                                 const std::string& label, const WordVectorTable* word_vectors,
                                 const RunOptions& options) {
  std::vector<DocumentRecord> kept;
  std::vector<DocumentRecord> held;
  for (const auto& d : docs) {
    (d.label == label ? held : kept).push_back(d);
  }
  if (held.empty()) throw ValidationError("no document carries the holdout label '" + label + "'");
  if (kept.empty()) throw ValidationError("every document carries the holdout label '" + label + "'");

  HoldoutResult out;
  out.label = label;
  out.holdout_docs = held.size();
  Experiment e(config, docs.front().embedding.size(), word_vectors);
  RunOptions stream_options = options;
  stream_options.max_batches.reset();
  out.reports = run_stream(e, kept, stream_options);
  out.before = out.reports.back().metrics;

  BatchReport last = e.process_batch(held);
  if (options.checkpoint) e.save_checkpoint(*options.checkpoint);
  if (options.on_report) options.on_report(last);
  out.after = last.metrics;

  std::map<TopicId, std::size_t> hits;
  for (const auto& d : held) {
    const TopicId t = last.assignment.at(d.id);
    if (t != kOutlierTopic) ++hits[t];
  }
  std::size_t best_hits = 0;
  for (const auto& [topic, n] : hits) {
    if (n > best_hits) {
      best_hits = n;
      out.best_topic = topic;
    }
  }
  if (out.best_topic) {
    const auto it = std::find_if(last.topics.begin(), last.topics.end(),
                                 [&](const TopicDescriptor& t) { return t.topic_id == *out.best_topic; });
    out.purity = static_cast<double>(best_hits) / static_cast<double>(it->doc_count);
    out.recall = static_cast<double>(best_hits) / static_cast<double>(held.size());
    const auto& fresh = last.alignment.unmatched_curr;
    out.best_is_new = std::find(fresh.begin(), fresh.end(), *out.best_topic) != fresh.end();
  }
  out.emerged = out.purity >= 0.8 && out.recall >= 0.8;
  out.absorbed = !out.emerged;
  out.reports.push_back(std::move(last));
  return out;
}

nlohmann::json holdout_to_json(const HoldoutResult& r) {
  return {{"label", r.label},
          {"holdout_docs", r.holdout_docs},
          {"best_topic", r.best_topic ? nlohmann::json(*r.best_topic) : nlohmann::json()},
          {"purity", r.purity},
          {"recall", r.recall},
          {"best_is_new", r.best_is_new},
          {"emerged", r.emerged},
          {"absorbed", r.absorbed},
          {"metrics_before", metrics_to_json(r.before)},
          {"metrics_after", metrics_to_json(r.after)}};
}

}  // namespace cobwebtm
