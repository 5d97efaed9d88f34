#include "cobwebtm/metrics/cooccurrence.hpp"

#include <algorithm>
#include <cmath>

namespace cobwebtm {

namespace {

std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

}  // namespace

CooccurrenceTable::Builder::Builder(std::size_t window_size, std::optional<std::set<std::string>> tracked,
                                    double smoothing_eps)
    : window_size_(window_size), tracked_(std::move(tracked)), eps_(smoothing_eps) {
  if (window_size_ == 0) throw ValidationError("window size must be >= 1");
}

std::uint32_t CooccurrenceTable::Builder::intern(const std::string& w) {
  auto [it, inserted] = index_.try_emplace(w, static_cast<std::uint32_t>(vocab_.size()));
  if (inserted) {
    vocab_.push_back(w);
    word_counts_.push_back(0);
  }
  return it->second;
}

void CooccurrenceTable::Builder::count_window(std::vector<std::uint32_t>& present) {
  ++windows_;
  std::sort(present.begin(), present.end());
  for (std::size_t i = 0; i < present.size(); ++i) {
    ++word_counts_[present[i]];
    for (std::size_t j = i + 1; j < present.size(); ++j) ++pair_counts_[pair_key(present[i], present[j])];
  }
}

void CooccurrenceTable::Builder::add(const std::vector<std::string>& tokens) {
  ++docs_;
  if (tokens.empty()) return;
  // -1 marks untracked tokens: they fill window slots but are not counted.
  std::vector<std::int64_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    const bool keep = !tracked_ || tracked_->contains(t);
    ids.push_back(keep ? static_cast<std::int64_t>(intern(t)) : -1);
  }

  std::unordered_map<std::uint32_t, std::uint32_t> in_window;
  auto push = [&](std::int64_t id) {
    if (id >= 0) ++in_window[static_cast<std::uint32_t>(id)];
  };
  auto pop = [&](std::int64_t id) {
    if (id < 0) return;
    auto it = in_window.find(static_cast<std::uint32_t>(id));
    if (--it->second == 0) in_window.erase(it);
  };
  auto emit = [&] {
    std::vector<std::uint32_t> present;
    present.reserve(in_window.size());
    for (const auto& [id, n] : in_window) present.push_back(id);
    count_window(present);
  };

  const std::size_t w = std::min(window_size_, ids.size());
  for (std::size_t i = 0; i < w; ++i) push(ids[i]);
  emit();
  for (std::size_t end = w; end < ids.size(); ++end) {
    pop(ids[end - w]);
    push(ids[end]);
    emit();
  }
}

CooccurrenceTable CooccurrenceTable::Builder::build() && {
  if (docs_ == 0) throw ValidationError("co-occurrence corpus is empty");
  CooccurrenceTable t;
  t.window_size_ = window_size_;
  t.eps_ = eps_;
  t.vocab_ = std::move(vocab_);
  t.index_ = std::move(index_);
  t.word_counts_ = std::move(word_counts_);
  t.pair_counts_ = std::move(pair_counts_);
  t.windows_ = windows_;
  return t;
}

std::uint32_t CooccurrenceTable::index_of(const std::string& w) const {
  auto it = index_.find(w);
  if (it == index_.end()) throw OutOfVocabulary(w);
  return it->second;
}

std::uint64_t CooccurrenceTable::word_count(const std::string& w) const { return word_counts_[index_of(w)]; }

std::uint64_t CooccurrenceTable::pair_count(const std::string& a, const std::string& b) const {
  const std::uint32_t ia = index_of(a);
  const std::uint32_t ib = index_of(b);
  if (ia == ib) return word_counts_[ia];
  auto it = pair_counts_.find(pair_key(ia, ib));
  return it == pair_counts_.end() ? 0 : it->second;
}

CooccurrenceTable build_cooccurrence(const std::vector<std::vector<std::string>>& docs, std::size_t window_size,
                                     std::optional<std::set<std::string>> tracked) {
  CooccurrenceTable::Builder builder(window_size, std::move(tracked));
  for (const auto& d : docs) builder.add(d);
  return std::move(builder).build();
}

double npmi(const std::string& a, const std::string& b, const CooccurrenceTable& table) {
  const std::uint64_t joint = table.pair_count(a, b);
  if (a == b) return 1.0;
  const std::uint64_t windows = table.window_count();
  if (joint == 0 || windows == 0) return -1.0;
  if (joint == windows) return 1.0;
  const double n = static_cast<double>(windows);
  const double p_ab = static_cast<double>(joint) / n;
  const double p_a = static_cast<double>(table.word_count(a)) / n;
  const double p_b = static_cast<double>(table.word_count(b)) / n;
  const double eps = table.smoothing_eps();
  const double pmi = std::log(p_ab + eps) - std::log(p_a * p_b);
  const double value = pmi / -std::log(p_ab + eps);
  return std::clamp(value, -1.0, 1.0);
}

}  // namespace cobwebtm
