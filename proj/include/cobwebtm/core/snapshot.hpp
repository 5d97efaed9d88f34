#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "cobwebtm/core/concept_tree.hpp"

namespace cobwebtm {

inline constexpr int kSnapshotFormatVersion = 1;

// {"header": {format_version, D, variance_floor, node_count, doc_count, ...},
//  "nodes": [{id, parent_id, count, mean, m2, children, doc_ids}, ...]}
// Reals are written as shortest round-trip decimals, so they reload bit-exact.
nlohmann::json tree_to_json(const ConceptTree& tree);

// Rejects unknown versions, a dimension other than `expected_dim` (when given)
// and any structural inconsistency. Never returns a partial tree.
ConceptTree tree_from_json(const nlohmann::json& doc, std::optional<std::size_t> expected_dim = std::nullopt);

// Writes through a temporary file and renames it into place.
void write_json_atomically(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json_file(const std::filesystem::path& path);

void save_tree(const ConceptTree& tree, const std::filesystem::path& path);
ConceptTree load_tree(const std::filesystem::path& path, std::optional<std::size_t> expected_dim = std::nullopt);

}  // namespace cobwebtm
