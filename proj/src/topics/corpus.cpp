#include "cobwebtm/topics/corpus.hpp"

#include "cobwebtm/error.hpp"

namespace cobwebtm {

void Corpus::add(DocumentRecord doc) {
  if (index_.contains(doc.id)) throw ValidationError("duplicate document id " + doc.id);
  index_.emplace(doc.id, docs_.size());
  docs_.push_back(std::move(doc));
}

const DocumentRecord& Corpus::at(const DocId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ValidationError("unknown document id " + id);
  return docs_[it->second];
}

}  // namespace cobwebtm
