#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cobwebtm/core/snapshot.hpp"
#include "cobwebtm/error.hpp"
#include "cobwebtm/harness/experiment.hpp"
#include "cobwebtm/harness/io.hpp"
#include "cobwebtm/metrics/cooccurrence.hpp"

using namespace cobwebtm;
using nlohmann::json;

namespace {

struct ConfigFlags {
  ExperimentConfig config;
  std::optional<std::size_t> k_hint;
  bool no_cv = false;
  bool no_npmi = false;
  bool no_ari = false;
  bool no_tcd = false;
  bool no_isim = false;
  bool no_hierarchy = false;
  std::string normalization = "entropy";

  ExperimentConfig resolve() const {
    ExperimentConfig c = config;
    if (k_hint) c.max_clusters = max_clusters_for_k(*k_hint);
    c.metrics.cv = !no_cv;
    c.metrics.npmi = !no_npmi;
    c.metrics.ari = !no_ari;
    c.metrics.tcd = !no_tcd;
    c.metrics.isim = !no_isim;
    c.metrics.hierarchy = !no_hierarchy;
    c.normalization = parse_cu_normalization(normalization);
    c.threads = threads_from_env();
    c.validate();
    return c;
  }
};

void add_config_flags(CLI::App* app, ConfigFlags& f) {
  auto& c = f.config;
  app->add_option("--initial-batch", c.initial_batch, "Documents in the first batch")->capture_default_str();
  app->add_option("--batch-size", c.batch_size, "Documents per later batch")->capture_default_str();
  auto* mc = app->add_option("--max-clusters", c.max_clusters, "Largest flat cut")->capture_default_str();
  app->add_option("--k-hint", f.k_hint, "Expected topic count; sets max-clusters to ceil(1.3 k)")->excludes(mc);
  app->add_option("--leaf-ratio", c.leaf_ratio, "Largest leaf share of the flat cut")->capture_default_str();
  app->add_option("--top-k", c.top_k, "Words per topic")->capture_default_str();
  app->add_option("--isim-words", c.isim_words, "Topic words used by ISIM")->capture_default_str();
  app->add_option("--isim-intruders", c.isim_intruders, "Intruders per topic")->capture_default_str();
  app->add_option("--tau", c.tau, "Alignment similarity threshold")->capture_default_str();
  app->add_option("--variance-floor", c.variance_floor, "Added to every variance")->capture_default_str();
  app->add_option("--seed", c.seed, "Seed for intruder sampling")->capture_default_str();
  app->add_option("--window-size", c.window_size, "Co-occurrence window in tokens")->capture_default_str();
  app->add_option("--hierarchy-levels", c.hierarchy_levels, "Levels scored by PCC/SD, root included")
      ->capture_default_str();
  app->add_option("--cu-normalization", f.normalization, "Operator score scaling: none, size or entropy")
      ->check(CLI::IsMember({"none", "size", "entropy"}))
      ->capture_default_str();
  app->add_flag("--no-cv", f.no_cv);
  app->add_flag("--no-npmi", f.no_npmi);
  app->add_flag("--no-ari", f.no_ari);
  app->add_flag("--no-tcd", f.no_tcd);
  app->add_flag("--no-isim", f.no_isim);
  app->add_flag("--no-hierarchy", f.no_hierarchy);
}

struct WordVectorFlags {
  std::string vectors;
  std::string vocab;

  void add(CLI::App* app) {
    auto* v = app->add_option("--word-vectors", vectors, "CBW1 word-vector table for ISIM");
    auto* w = app->add_option("--vocab", vocab, "Vocabulary sidecar of the word-vector table");
    v->needs(w);
    w->needs(v);
  }
  std::unique_ptr<WordVectorTable> load() const {
    if (vectors.empty()) return nullptr;
    return std::make_unique<WordVectorTable>(read_word_vectors(vectors, vocab));
  }
};

class ReportSink {
 public:
  ReportSink(const std::string& path, bool append) {
    if (path.empty()) return;
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw ValidationError("cannot write report file " + path);
  }
  void write(json j) {
    if (!out_.is_open()) return;
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void print_summary(const BatchReport& r) {
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("null");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return std::string(buf);
  };
  std::cout << "batch " << r.batch_index << ": docs=" << r.docs_processed << " total=" << r.docs_total
            << " topics=" << r.topics.size() << " new_topics=" << r.alignment.unmatched_curr.size()
            << " INSERT=" << r.operators[OperatorKind::Insert] << " NEW=" << r.operators[OperatorKind::New]
            << " MERGE=" << r.operators[OperatorKind::Merge] << " SPLIT=" << r.operators[OperatorKind::Split]
            << " ari=" << fmt(r.metrics.ari) << " tcd=" << fmt(r.metrics.tcd) << " cv=" << fmt(r.metrics.cv)
            << '\n';
}

std::optional<std::filesystem::path> optional_path(const std::string& p) {
  if (p.empty()) return std::nullopt;
  return std::filesystem::path(p);
}

int run_fit(const ConfigFlags& flags, const std::string& docs_path, const std::string& emb_path,
            const std::string& manifest, const WordVectorFlags& wv, const std::string& report_path, const std::string& snapshot,
            const std::string& resume, std::optional<std::size_t> max_batches, std::size_t trials) {
  if (trials == 0) throw ValidationError("--trials must be >= 1");
  if (trials > 1 && !resume.empty()) throw ValidationError("--resume cannot be combined with --trials");
  const std::vector<DocumentRecord> docs = load_stream(docs_path, emb_path, optional_path(manifest));
  if (docs.empty()) throw ValidationError("document stream is empty");
  const auto vectors = wv.load();
  ReportSink sink(report_path, !resume.empty());

  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::optional<Experiment> e;
    if (!resume.empty()) {
      e.emplace(Experiment::restore_file(resume, docs, vectors.get()));
    } else {
      ExperimentConfig config = flags.resolve();
      config.seed += trial;
      e.emplace(config, docs.front().embedding.size(), vectors.get());
    }
    RunOptions options;
    options.max_batches = max_batches;
    if (!snapshot.empty()) {
      options.checkpoint = trials > 1 ? snapshot + ".trial" + std::to_string(trial) : snapshot;
    }
    options.on_report = [&](const BatchReport& r) {
      json j = report_to_json(r);
      if (trials > 1) j["trial"] = trial;
      sink.write(std::move(j));
      print_summary(r);
    };
    run_stream(*e, docs, options);
  }
  return 0;
}

json descriptor_json(const TopicDescriptor& t) {
  json words = json::array();
  for (const auto& [w, weight] : t.top_words) words.push_back({w, weight});
  json j = {{"node_id", t.node_id},
            {"doc_count", t.doc_count},
            {"top_words", words},
            {"centroid_digest", centroid_digest(t.centroid)}};
  if (t.level >= 0) {
    j["level"] = t.level;
    j["parent_node"] = t.parent_node;
  } else {
    j["topic_id"] = t.topic_id;
  }
  return j;
}

int run_topics(const std::string& snapshot, const std::string& docs_path, const std::string& mode,
               std::size_t levels, std::size_t top_k, std::optional<std::size_t> max_clusters, double leaf_ratio) {
  const json doc = read_json_file(snapshot);
  const bool is_checkpoint = doc.contains("checkpoint_version");
  const ConceptTree tree = tree_from_json(is_checkpoint ? doc.at("tree") : doc);
  if (tree.empty()) throw ValidationError("snapshot holds an empty tree");
  std::size_t clusters = 10;
  if (is_checkpoint) clusters = doc.at("config").at("max_clusters").get<std::size_t>();
  if (max_clusters) clusters = *max_clusters;

  Corpus corpus;
  for (auto& line : read_docs_jsonl(docs_path)) {
    DocumentRecord r;
    r.id = std::move(line.id);
    r.tokens = std::move(line.tokens);
    r.label = std::move(line.label);
    r.timestamp = std::move(line.timestamp);
    r.arrival_index = corpus.size();
    corpus.add(std::move(r));
  }

  json out;
  if (mode == "hierarchy") {
    out = json::array();
    for (const auto& level : extract_hierarchical_topics(tree, corpus, levels, top_k)) {
      for (const auto& t : level) out.push_back(descriptor_json(t));
    }
  } else {
    const FlatPartition part = flat_cut(tree, clusters, leaf_ratio);
    json topics = json::array();
    for (const auto& t : describe_partition(tree, corpus, part, top_k)) topics.push_back(descriptor_json(t));
    json assignment = json::object();
    for (const auto& [d, t] : part.assignment) assignment[d] = t;
    out = {{"cut_params", {{"max_clusters", part.params.max_clusters}, {"leaf_ratio", part.params.leaf_ratio}}},
           {"topics", topics},
           {"assignment", assignment}};
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

std::vector<std::string> report_topic_words(const json& topic) {
  std::vector<std::string> words;
  for (const auto& w : topic.at("top_words")) words.push_back(w.at(0).get<std::string>());
  return words;
}

int run_metrics(const std::string& reports_path, const std::string& docs_path, const WordVectorFlags& wv,
                std::size_t window, std::size_t isim_words, std::size_t isim_intruders, std::uint64_t seed) {
  const std::vector<DocumentLine> docs = read_docs_jsonl(docs_path);
  const auto vectors = wv.load();
  std::ifstream in(reports_path);
  if (!in) throw ValidationError("cannot open " + reports_path);
  std::string line;
  std::map<std::int64_t, json> previous;  // by trial
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json report;
    try {
      report = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(reports_path + ": " + e.what());
    }
    try {
      const std::int64_t trial = report.value("trial", std::int64_t{0});
      const auto total = report.at("docs_total").get<std::size_t>();
      if (total > docs.size()) throw ValidationError("report covers more documents than the document file holds");
      const json& topics = report.at("partition").at("topics");

      MetricReport m;
      std::set<std::string> tracked;
      for (const auto& t : topics) {
        for (const auto& w : report_topic_words(t)) tracked.insert(w);
      }
      CooccurrenceTable::Builder builder(window, tracked);
      for (std::size_t i = 0; i < total; ++i) builder.add(docs[i].tokens);
      const CooccurrenceTable table = std::move(builder).build();
      std::vector<MetricValue> cv;
      std::vector<MetricValue> np;
      std::vector<std::vector<std::string>> isim_sets;
      for (const auto& t : topics) {
        const auto words = report_topic_words(t);
        if (words.size() >= 2 && table.window_count() > 0) cv.push_back(cv_coherence(words, table));
        np.push_back(topic_npmi(words, table));
        std::vector<std::string> head(words.begin(), words.begin() + std::min(words.size(), isim_words));
        if (vectors && !head.empty() &&
            std::all_of(head.begin(), head.end(), [&](const std::string& w) { return vectors->contains(w); }) &&
            vectors->size() > head.size()) {
          isim_sets.push_back(std::move(head));
        }
      }
      const MetricValue cv_mean = mean_of(cv);
      const MetricValue np_mean = mean_of(np);
      m.cv = cv_mean.value;
      m.npmi = np_mean.value;
      m.flags = cv_mean.flags;
      m.flags.insert(m.flags.end(), np_mean.flags.begin(), np_mean.flags.end());
      if (!isim_sets.empty()) {
        m.isim = intruder_similarity(isim_sets, *vectors, isim_intruders,
                                     isim_seed(seed, report.at("batch_index").get<std::uint64_t>()))
                     .value;
      }

      const json& matched = report.at("alignment").at("matched");
      if (!matched.empty()) {
        double drift = 0.0;
        for (const auto& p : matched) drift += 1.0 - p.at("similarity").get<double>();
        m.tcd = drift / static_cast<double>(matched.size());
      }
      auto prev = previous.find(trial);
      if (prev != previous.end()) {
        const json& old_assign = prev->second.at("partition").at("assignment");
        const json& new_assign = report.at("partition").at("assignment");
        std::vector<std::int64_t> a;
        std::vector<std::int64_t> b;
        for (const auto& [doc, topic] : old_assign.items()) {
          a.push_back(topic.get<std::int64_t>());
          b.push_back(new_assign.at(doc).get<std::int64_t>());
        }
        if (a.size() >= 2) m.ari = adjusted_rand_index(a, b);
      }
      const json& reported = report.at("metrics");
      auto carry = [&](const char* key) -> std::optional<double> {
        if (!reported.contains(key) || reported.at(key).is_null()) return std::nullopt;
        return reported.at(key).get<double>();
      };
      m.pcc = carry("pcc");
      m.sd = carry("sd");

      json out = {{"batch_index", report.at("batch_index")}, {"metrics", metrics_to_json(m)}};
      if (report.contains("trial")) out["trial"] = trial;
      std::cout << out.dump() << '\n';
      previous[trial] = std::move(report);
      ++n;
    } catch (const json::exception& e) {
      throw ValidationError(reports_path + ": malformed report: " + e.what());
    }
  }
  if (n == 0) throw ValidationError(reports_path + " holds no reports");
  return 0;
}

int run_holdout(const ConfigFlags& flags, const std::string& docs_path, const std::string& emb_path,
                const std::string& manifest, const WordVectorFlags& wv, const std::string& label, const std::string& report_path,
                const std::string& snapshot) {
  const std::vector<DocumentRecord> docs = load_stream(docs_path, emb_path, optional_path(manifest));
  const auto vectors = wv.load();
  ReportSink sink(report_path, false);
  RunOptions options;
  if (!snapshot.empty()) options.checkpoint = snapshot;
  options.on_report = [&](const BatchReport& r) {
    sink.write(report_to_json(r));
    print_summary(r);
  };
  const HoldoutResult result = holdout_experiment(flags.resolve(), docs, label, vectors.get(), options);
  std::cout << holdout_to_json(result).dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incremental hierarchical topic modelling over document embeddings"};
  app.require_subcommand(1);

  ConfigFlags fit_flags;
  std::string docs_path;
  std::string emb_path;
  std::string manifest;
  std::string report_path;
  std::string snapshot;
  std::string resume;
  std::optional<std::size_t> max_batches;
  std::size_t trials = 1;
  WordVectorFlags wv;

  auto* fit = app.add_subcommand("fit", "Stream documents in batches and report each batch");
  fit->add_option("--docs", docs_path, "Document JSONL")->required()->check(CLI::ExistingFile);
  fit->add_option("--embeddings", emb_path, "CBW1 embeddings, row-aligned with --docs")
      ->required()
      ->check(CLI::ExistingFile);
  fit->add_option("--manifest", manifest, "Embedding manifest to verify before fitting")->check(CLI::ExistingFile);
  fit->add_option("--report", report_path, "Append one JSON report per batch to this file");
  fit->add_option("--snapshot", snapshot, "Checkpoint rewritten after every batch");
  fit->add_option("--resume", resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  fit->add_option("--max-batches", max_batches, "Stop after this many batches");
  fit->add_option("--trials", trials, "Repeat the run with seeds seed, seed+1, ...")->capture_default_str();
  wv.add(fit);
  add_config_flags(fit, fit_flags);

  std::string topics_snapshot;
  std::string topics_docs;
  std::string mode = "flat";
  std::size_t levels = 3;
  std::size_t top_k = 10;
  std::optional<std::size_t> topics_max_clusters;
  double leaf_ratio = 0.15;
  auto* topics = app.add_subcommand("topics", "Print topics of a snapshot");
  topics->add_option("--snapshot", topics_snapshot, "Checkpoint or tree snapshot")
      ->required()
      ->check(CLI::ExistingFile);
  topics->add_option("--docs", topics_docs, "Document JSONL")->required()->check(CLI::ExistingFile);
  topics->add_option("--mode", mode, "flat or hierarchy")
      ->check(CLI::IsMember({"flat", "hierarchy"}))
      ->capture_default_str();
  topics->add_option("--levels", levels, "Hierarchy levels, root included")->capture_default_str();
  topics->add_option("--top-k", top_k)->capture_default_str();
  topics->add_option("--max-clusters", topics_max_clusters);
  topics->add_option("--leaf-ratio", leaf_ratio)->capture_default_str();

  std::string reports_in;
  std::string metrics_docs;
  std::size_t window = 110;
  std::size_t isim_words = 5;
  std::size_t isim_intruders = 15;
  std::uint64_t seed = 0;
  WordVectorFlags metrics_wv;
  auto* metrics = app.add_subcommand("metrics", "Recompute metrics from batch reports and the corpus");
  metrics->add_option("--reports", reports_in, "Report JSONL from fit")->required()->check(CLI::ExistingFile);
  metrics->add_option("--docs", metrics_docs, "Document JSONL used for the run")
      ->required()
      ->check(CLI::ExistingFile);
  metrics->add_option("--window-size", window)->capture_default_str();
  metrics->add_option("--isim-words", isim_words)->capture_default_str();
  metrics->add_option("--isim-intruders", isim_intruders)->capture_default_str();
  metrics->add_option("--seed", seed)->capture_default_str();
  metrics_wv.add(metrics);

  ConfigFlags holdout_flags;
  std::string label;
  WordVectorFlags holdout_wv;
  std::string holdout_docs;
  std::string holdout_emb;
  std::string holdout_manifest;
  std::string holdout_report;
  std::string holdout_snapshot;
  auto* holdout = app.add_subcommand("holdout", "Stream all but one label, then inject that label last");
  holdout->add_option("--docs", holdout_docs)->required()->check(CLI::ExistingFile);
  holdout->add_option("--embeddings", holdout_emb)->required()->check(CLI::ExistingFile);
  holdout->add_option("--manifest", holdout_manifest)->check(CLI::ExistingFile);
  holdout->add_option("--label", label, "Label held out until the final batch")->required();
  holdout->add_option("--report", holdout_report);
  holdout->add_option("--snapshot", holdout_snapshot);
  holdout_wv.add(holdout);
  add_config_flags(holdout, holdout_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*fit) {
      return run_fit(fit_flags, docs_path, emb_path, manifest, wv, report_path, snapshot, resume, max_batches, trials);
    }
    if (*topics) {
      return run_topics(topics_snapshot, topics_docs, mode, levels, top_k, topics_max_clusters, leaf_ratio);
    }
    if (*metrics) {
      return run_metrics(reports_in, metrics_docs, metrics_wv, window, isim_words, isim_intruders, seed);
    }
    if (*holdout) {
      return run_holdout(holdout_flags, holdout_docs, holdout_emb, holdout_manifest, holdout_wv, label, holdout_report,
                         holdout_snapshot);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
