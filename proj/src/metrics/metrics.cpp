#include "cobwebtm/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <unordered_set>

#include "cobwebtm/core/vector_ops.hpp"
#include "cobwebtm/error.hpp"

namespace cobwebtm {

MetricValue mean_of(const std::vector<MetricValue>& values) {
  MetricValue out;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (v.value) {
      sum += *v.value;
      ++n;
    }
    out.flags.insert(out.flags.end(), v.flags.begin(), v.flags.end());
  }
  if (n > 0) out.value = sum / static_cast<double>(n);
  return out;
}

MetricValue topic_npmi(const std::vector<std::string>& words, const CooccurrenceTable& table) {
  MetricValue out;
  std::vector<std::string> known;
  for (const auto& w : words) {
    if (table.contains(w)) {
      known.push_back(w);
    } else {
      out.flags.push_back("oov:" + w);
    }
  }
  if (known.size() < 2) {
    out.flags.push_back("topic_npmi:fewer_than_two_words");
    return out;
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < known.size(); ++i) {
    for (std::size_t j = i + 1; j < known.size(); ++j) {
      sum += npmi(known[i], known[j], table);
      ++pairs;
    }
  }
  out.value = sum / static_cast<double>(pairs);
  return out;
}

MetricValue cv_coherence(const std::vector<std::string>& words, const CooccurrenceTable& table) {
  const std::size_t n = words.size();
  if (n < 2) throw ValidationError("C_v needs at least two words");
  std::vector<std::vector<double>> vectors(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      vectors[i][k] = i == k ? 1.0 : npmi(words[i], words[k], table);
    }
  }
  MetricValue out;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::optional<double> c = cosine_similarity(vectors[i], vectors[j]);
      if (c) {
        sum += *c;
      } else {
        out.flags.push_back("cv:zero_norm:" + words[i] + "/" + words[j]);
      }
    }
  }
  out.value = 2.0 * sum / (static_cast<double>(n) * static_cast<double>(n - 1));
  return out;
}

namespace {

// Dense relabeling so the contingency table can be a flat count map.
std::vector<std::size_t> compact(std::span<const std::int64_t> labels, std::size_t& k) {
  std::map<std::int64_t, std::size_t> ids;
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (auto l : labels) out.push_back(ids.try_emplace(l, ids.size()).first->second);
  k = ids.size();
  return out;
}

using Wide = __int128;

Wide choose2(std::uint64_t n) { return static_cast<Wide>(n) * static_cast<Wide>(n - (n > 0 ? 1 : 0)) / 2; }

}  // namespace

double adjusted_rand_index(std::span<const std::int64_t> a, std::span<const std::int64_t> b) {
  if (a.size() != b.size()) throw ValidationError("ARI labelings differ in length");
  if (a.size() < 2) throw ValidationError("ARI needs at least two items");
  std::size_t ka = 0;
  std::size_t kb = 0;
  const auto la = compact(a, ka);
  const auto lb = compact(b, kb);
  std::map<std::pair<std::size_t, std::size_t>, std::uint64_t> cells;
  std::vector<std::uint64_t> rows(ka, 0);
  std::vector<std::uint64_t> cols(kb, 0);
  for (std::size_t i = 0; i < la.size(); ++i) {
    ++cells[{la[i], lb[i]}];
    ++rows[la[i]];
    ++cols[lb[i]];
  }
  Wide index = 0;
  for (const auto& [cell, n] : cells) index += choose2(n);
  Wide sum_a = 0;
  for (auto n : rows) sum_a += choose2(n);
  Wide sum_b = 0;
  for (auto n : cols) sum_b += choose2(n);
  const Wide total = choose2(a.size());
  // (index - E) / (max - E) with E = sum_a sum_b / total, scaled by 2 * total
  // so both sides stay integral.
  const Wide numerator = 2 * (index * total - sum_a * sum_b);
  const Wide denominator = (sum_a + sum_b) * total - 2 * sum_a * sum_b;
  if (denominator == 0) return 1.0;
  return static_cast<double>(numerator) / static_cast<double>(denominator);
}

double adjusted_rand_index(const std::map<DocId, TopicId>& a, const std::map<DocId, TopicId>& b) {
  if (a.size() != b.size()) throw ValidationError("ARI labelings cover different documents");
  std::vector<std::int64_t> la;
  std::vector<std::int64_t> lb;
  la.reserve(a.size());
  lb.reserve(b.size());
  auto ib = b.begin();
  for (auto ia = a.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first) throw ValidationError("ARI labelings cover different documents");
    la.push_back(ia->second);
    lb.push_back(ib->second);
  }
  return adjusted_rand_index(la, lb);
}

MetricValue topic_centroid_drift(const TopicAlignment& alignment, const std::map<TopicId, Embedding>& prev,
                                 const std::map<TopicId, Embedding>& curr) {
  MetricValue out;
  double sum = 0.0;
  std::size_t n = 0;
  for (const TopicMatch& m : alignment.matched) {
    const auto p = prev.find(m.prev);
    const auto c = curr.find(m.curr);
    if (p == prev.end() || c == curr.end()) {
      throw ValidationError("matched topic missing from the centroid maps");
    }
    const std::optional<double> cos = cosine_similarity(p->second, c->second);
    if (!cos) {
      out.flags.push_back("tcd:zero_norm:" + std::to_string(m.prev) + "/" + std::to_string(m.curr));
      continue;
    }
    sum += 1.0 - *cos;
    ++n;
  }
  if (n > 0) out.value = sum / static_cast<double>(n);
  return out;
}

WordVectorTable::WordVectorTable(std::vector<std::string> words, std::size_t dim, std::vector<double> values)
    : words_(std::move(words)), dim_(dim), values_(std::move(values)) {
  if (values_.size() != words_.size() * dim_) {
    throw ValidationError("word vector table holds " + std::to_string(values_.size()) + " values for " +
                          std::to_string(words_.size()) + " words of dimension " + std::to_string(dim_));
  }
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], i).second) throw ValidationError("duplicate vocabulary word " + words_[i]);
  }
}

std::span<const double> WordVectorTable::vector(const std::string& w) const {
  auto it = index_.find(w);
  if (it == index_.end()) throw ValidationError("no word vector for '" + w + "'");
  return std::span<const double>(values_).subspan(it->second * dim_, dim_);
}

namespace {

// Uniform draw in [0, bound) from raw engine output, so results do not depend
// on the standard library's distribution implementation.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r = rng();
  while (r >= limit) r = rng();
  return r % bound;
}

}  // namespace

MetricValue intruder_similarity(const std::vector<std::vector<std::string>>& topics, const WordVectorTable& vectors,
                                std::size_t n_intruders, std::uint64_t seed) {
  if (n_intruders == 0) throw ValidationError("ISIM needs at least one intruder");
  std::mt19937_64 rng(seed);
  MetricValue out;
  double topic_sum = 0.0;
  std::size_t topic_n = 0;
  for (const auto& words : topics) {
    if (words.empty()) {
      out.flags.push_back("isim:empty_topic");
      continue;
    }
    for (const auto& w : words) vectors.vector(w);  // rejects missing words up front
    const std::unordered_set<std::string> own(words.begin(), words.end());
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      if (!own.contains(vectors.words()[i])) candidates.push_back(i);
    }
    if (candidates.empty()) throw ValidationError("ISIM vocabulary has no word outside the topic");
    const std::size_t draws = std::min(n_intruders, candidates.size());
    if (draws < n_intruders) out.flags.push_back("isim:fewer_intruders_than_requested");
    // Partial Fisher-Yates: the first `draws` slots become the sample.
    for (std::size_t i = 0; i < draws; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(bounded(rng, candidates.size() - i));
      std::swap(candidates[i], candidates[j]);
    }
    double intruder_sum = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
      const auto iv = vectors.vector(vectors.words()[candidates[i]]);
      double s = 0.0;
      for (const auto& w : words) s += cosine_similarity(iv, vectors.vector(w)).value_or(0.0);
      intruder_sum += s / static_cast<double>(words.size());
    }
    topic_sum += intruder_sum / static_cast<double>(draws);
    ++topic_n;
  }
  if (topic_n > 0) out.value = topic_sum / static_cast<double>(topic_n);
  return out;
}

MetricValue parent_child_coherence(const std::vector<std::string>& child_words,
                                   const std::vector<std::string>& parent_words, const CooccurrenceTable& table) {
  if (child_words.empty() || parent_words.empty()) throw ValidationError("PCC needs non-empty word lists");
  const std::set<std::string> child(child_words.begin(), child_words.end());
  const std::set<std::string> parent(parent_words.begin(), parent_words.end());
  MetricValue out;
  std::vector<std::string> c_only;
  std::vector<std::string> p_only;
  for (const auto& w : child) {
    if (parent.contains(w)) continue;
    if (table.contains(w)) c_only.push_back(w); else out.flags.push_back("oov:" + w);
  }
  for (const auto& w : parent) {
    if (child.contains(w)) continue;
    if (table.contains(w)) p_only.push_back(w); else out.flags.push_back("oov:" + w);
  }
  if (c_only.empty() || p_only.empty()) {
    out.flags.push_back("pcc:empty_after_overlap_removal");
    return out;
  }
  double sum = 0.0;
  for (const auto& c : c_only) {
    for (const auto& p : p_only) sum += npmi(c, p, table);
  }
  out.value = sum / static_cast<double>(c_only.size() * p_only.size());
  return out;
}

double sibling_diversity(const std::vector<std::vector<std::string>>& sibling_sets) {
  if (sibling_sets.size() < 2) throw ValidationError("sibling diversity needs at least two siblings");
  std::map<std::string, std::size_t> seen_in;
  for (const auto& s : sibling_sets) {
    for (const auto& w : std::set<std::string>(s.begin(), s.end())) ++seen_in[w];
  }
  if (seen_in.empty()) return 0.0;
  const auto unique = std::count_if(seen_in.begin(), seen_in.end(), [](const auto& kv) { return kv.second == 1; });
  return static_cast<double>(unique) / static_cast<double>(seen_in.size());
}

HierarchyScores hierarchy_scores(const std::vector<std::vector<TopicDescriptor>>& levels,
                                 const CooccurrenceTable& table) {
  HierarchyScores out;
  for (const auto& level : levels) {
    std::vector<MetricValue> per_topic;
    for (const auto& t : level) per_topic.push_back(topic_npmi(t.words(), table));
    out.npmi_per_level.push_back(mean_of(per_topic));
  }
  out.npmi = mean_of(out.npmi_per_level);

  std::vector<MetricValue> edges;
  std::vector<MetricValue> diversity;
  for (std::size_t lvl = 1; lvl < levels.size(); ++lvl) {
    std::map<NodeId, const TopicDescriptor*> parents;
    for (const auto& p : levels[lvl - 1]) parents[p.node_id] = &p;
    std::map<NodeId, std::vector<std::vector<std::string>>> siblings;
    for (const auto& c : levels[lvl]) {
      auto it = parents.find(c.parent_node);
      if (it == parents.end()) continue;
      siblings[c.parent_node].push_back(c.words());
      if (c.top_words.empty() || it->second->top_words.empty()) {
        edges.push_back({std::nullopt, {"pcc:empty_topic:" + std::to_string(c.node_id)}});
        continue;
      }
      edges.push_back(parent_child_coherence(c.words(), it->second->words(), table));
    }
    for (const auto& [parent, sets] : siblings) {
      if (sets.size() >= 2) diversity.push_back({sibling_diversity(sets), {}});
    }
  }
  out.pcc = mean_of(edges);
  out.sd = mean_of(diversity);
  return out;
}

}  // namespace cobwebtm
