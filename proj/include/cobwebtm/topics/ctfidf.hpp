#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace cobwebtm {

using TopicId = std::int64_t;
using WordBag = std::map<std::string, std::uint64_t>;
using WordWeights = std::map<std::string, double>;

inline constexpr TopicId kOutlierTopic = -1;

void add_tokens(WordBag& bag, const std::vector<std::string>& tokens);
void add_bag(WordBag& into, const WordBag& from);

/// Class-based TF-IDF over a set of topics, each given as the bag of all its
/// documents' tokens:
///   W(C, w) = tf(C, w) * ln(1 + A / f(w))
/// tf is the raw count of w in C, f(w) its count summed over all topics, and A
/// the mean number of tokens per topic. Words absent from a topic are omitted.
/// Throws when every bag is empty.
std::map<TopicId, WordWeights> ctfidf(const std::map<TopicId, WordBag>& topics);

// Highest-weighted k words; equal weights order alphabetically.
std::vector<std::pair<std::string, double>> top_words(const WordWeights& weights, std::size_t k);

}  // namespace cobwebtm
