#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "cobwebtm/error.hpp"

namespace cobwebtm {

class OutOfVocabulary : public ValidationError {
 public:
  explicit OutOfVocabulary(const std::string& word)
      : ValidationError("word '" + word + "' is not in the co-occurrence vocabulary"), word_(word) {}
  const std::string& word() const { return word_; }

 private:
  std::string word_;
};

/// Boolean sliding-window document frequencies.
///
/// Every document contributes windows of `window_size` consecutive tokens at
/// stride 1; a document no longer than the window contributes one window and
/// an empty document none. A word or pair counts once per window it occurs in.
/// Immutable once built.
class CooccurrenceTable {
 public:
  class Builder {
   public:
    // When `tracked` is set only those words enter the vocabulary; windows are
    // still counted over the full token stream.
    explicit Builder(std::size_t window_size, std::optional<std::set<std::string>> tracked = std::nullopt,
                     double smoothing_eps = 1e-12);
    void add(const std::vector<std::string>& tokens);
    CooccurrenceTable build() &&;

   private:
    std::uint32_t intern(const std::string& w);
    void count_window(std::vector<std::uint32_t>& present);

    std::size_t window_size_;
    std::optional<std::set<std::string>> tracked_;
    double eps_;
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, std::uint32_t> index_;
    std::vector<std::uint64_t> word_counts_;
    std::unordered_map<std::uint64_t, std::uint64_t> pair_counts_;
    std::uint64_t windows_ = 0;
    std::size_t docs_ = 0;
  };

  std::size_t window_size() const { return window_size_; }
  std::uint64_t window_count() const { return windows_; }
  double smoothing_eps() const { return eps_; }
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  bool contains(const std::string& w) const { return index_.contains(w); }

  // Both throw OutOfVocabulary for unknown words.
  std::uint64_t word_count(const std::string& w) const;
  std::uint64_t pair_count(const std::string& a, const std::string& b) const;

 private:
  CooccurrenceTable() = default;
  std::uint32_t index_of(const std::string& w) const;

  std::size_t window_size_ = 0;
  double eps_ = 1e-12;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<std::uint64_t> word_counts_;
  std::unordered_map<std::uint64_t, std::uint64_t> pair_counts_;
  std::uint64_t windows_ = 0;
};

// Rejects an empty corpus and window_size 0.
CooccurrenceTable build_cooccurrence(const std::vector<std::vector<std::string>>& docs, std::size_t window_size,
                                     std::optional<std::set<std::string>> tracked = std::nullopt);

/// NPMI(a, b) = ln(P(a,b) / (P(a) P(b))) / -ln P(a,b), in [-1, 1].
/// Never co-occurring words give -1; a pair present in every window gives 1;
/// a word with itself gives 1.
double npmi(const std::string& a, const std::string& b, const CooccurrenceTable& table);

}  // namespace cobwebtm
