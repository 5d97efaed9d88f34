#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cobwebtm/core/concept_tree.hpp"

namespace cobwebtm {

struct DocumentRecord {
  DocId id;
  std::vector<std::string> tokens;  // pre-tokenized, used verbatim
  Embedding embedding;
  std::optional<std::string> label;
  std::optional<std::string> timestamp;
  std::uint64_t arrival_index = 0;
};

// Documents seen so far, addressable by id. Insertion order is kept.
class Corpus {
 public:
  void add(DocumentRecord doc);
  bool contains(const DocId& id) const { return index_.contains(id); }
  const DocumentRecord& at(const DocId& id) const;
  const std::vector<std::string>& tokens(const DocId& id) const { return at(id).tokens; }
  std::size_t size() const { return docs_.size(); }
  const std::vector<DocumentRecord>& docs() const { return docs_; }

 private:
  std::vector<DocumentRecord> docs_;
  std::unordered_map<DocId, std::size_t> index_;
};

}  // namespace cobwebtm
