#include "cobwebtm/topics/ctfidf.hpp"

#include <algorithm>
#include <cmath>

#include "cobwebtm/error.hpp"

namespace cobwebtm {

void add_tokens(WordBag& bag, const std::vector<std::string>& tokens) {
  for (const auto& t : tokens) ++bag[t];
}

void add_bag(WordBag& into, const WordBag& from) {
  for (const auto& [w, n] : from) into[w] += n;
}

std::map<TopicId, WordWeights> ctfidf(const std::map<TopicId, WordBag>& topics) {
  if (topics.empty()) throw ValidationError("c-TF-IDF needs at least one topic");
  WordBag frequency;
  std::uint64_t total = 0;
  for (const auto& [id, bag] : topics) {
    for (const auto& [w, n] : bag) {
      frequency[w] += n;
      total += n;
    }
  }
  if (total == 0) throw ValidationError("c-TF-IDF needs at least one non-empty topic");
  const double avg_words = static_cast<double>(total) / static_cast<double>(topics.size());

  std::map<TopicId, WordWeights> out;
  for (const auto& [id, bag] : topics) {
    WordWeights& weights = out[id];
    for (const auto& [w, n] : bag) {
      if (n == 0) continue;
      const double f = static_cast<double>(frequency.at(w));
      weights[w] = static_cast<double>(n) * std::log(1.0 + avg_words / f);
    }
  }
  return out;
}

std::vector<std::pair<std::string, double>> top_words(const WordWeights& weights, std::size_t k) {
  std::vector<std::pair<std::string, double>> ranked(weights.begin(), weights.end());
  auto order = [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  };
  const std::size_t n = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n), ranked.end(), order);
  ranked.resize(n);
  return ranked;
}

}  // namespace cobwebtm
