#include "cobwebtm/core/snapshot.hpp"

#include <fstream>
#include <string>

#include "cobwebtm/error.hpp"

namespace cobwebtm {

using nlohmann::json;

json tree_to_json(const ConceptTree& tree) {
  const TreeConfig& cfg = tree.config();
  json counts = json::object();
  for (auto op : {OperatorKind::Insert, OperatorKind::New, OperatorKind::Merge, OperatorKind::Split}) {
    counts[std::string(to_string(op))] = tree.operator_counts()[op];
  }
  json header = {
      {"format_version", kSnapshotFormatVersion},
      {"D", cfg.dim},
      {"variance_floor", cfg.variance_floor},
      {"cu_normalization", std::string(to_string(cfg.normalization))},
      {"node_count", tree.node_count()},
      {"doc_count", tree.doc_count()},
      {"root_id", tree.root()},
      {"next_id", tree.next_id()},
      {"operator_counts", counts},
  };
  json nodes = json::array();
  for (NodeId id : tree.node_ids()) {
    const ConceptNode& n = tree.node(id);
    nodes.push_back({
        {"id", n.id},
        {"parent_id", n.parent},
        {"count", n.stats.count()},
        {"mean", n.stats.mean()},
        {"m2", n.stats.m2()},
        {"children", n.children},
        {"doc_ids", n.doc_ids},
    });
  }
  return {{"header", std::move(header)}, {"nodes", std::move(nodes)}};
}

ConceptTree tree_from_json(const json& doc, std::optional<std::size_t> expected_dim) {
  try {
    const json& header = doc.at("header");
    const int version = header.at("format_version").get<int>();
    if (version != kSnapshotFormatVersion) {
      throw ValidationError("snapshot format_version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kSnapshotFormatVersion) + ")");
    }
    TreeConfig cfg;
    cfg.dim = header.at("D").get<std::size_t>();
    if (expected_dim && *expected_dim != cfg.dim) {
      throw ValidationError("snapshot dimension " + std::to_string(cfg.dim) + " does not match expected " +
                            std::to_string(*expected_dim));
    }
    cfg.variance_floor = header.at("variance_floor").get<double>();
    cfg.normalization = parse_cu_normalization(header.at("cu_normalization").get<std::string>());

    OperatorCounts counts;
    if (header.contains("operator_counts")) {
      const json& oc = header.at("operator_counts");
      for (auto op : {OperatorKind::Insert, OperatorKind::New, OperatorKind::Merge, OperatorKind::Split}) {
        counts[op] = oc.value(std::string(to_string(op)), std::uint64_t{0});
      }
    }

    std::vector<ConceptNode> nodes;
    NodeId max_id = -1;
    for (const json& rec : doc.at("nodes")) {
      ConceptNode n;
      n.id = rec.at("id").get<NodeId>();
      n.parent = rec.at("parent_id").get<NodeId>();
      n.stats = GaussianStats(rec.at("count").get<std::uint64_t>(), rec.at("mean").get<std::vector<double>>(),
                              rec.at("m2").get<std::vector<double>>());
      n.children = rec.at("children").get<std::vector<NodeId>>();
      n.doc_ids = rec.at("doc_ids").get<std::vector<DocId>>();
      max_id = std::max(max_id, n.id);
      nodes.push_back(std::move(n));
    }
    const std::size_t declared_nodes = header.at("node_count").get<std::size_t>();
    if (declared_nodes != nodes.size()) {
      throw ValidationError("snapshot declares " + std::to_string(declared_nodes) + " nodes but holds " +
                            std::to_string(nodes.size()));
    }
    const NodeId root = header.value("root_id", nodes.empty() ? kNoNode : NodeId{0});
    const NodeId next_id = header.value("next_id", max_id + 1);
    ConceptTree tree = ConceptTree::from_nodes(cfg, std::move(nodes), root, next_id, counts);
    const std::size_t declared_docs = header.at("doc_count").get<std::size_t>();
    if (declared_docs != tree.doc_count()) {
      throw ValidationError("snapshot declares " + std::to_string(declared_docs) + " documents but holds " +
                            std::to_string(tree.doc_count()));
    }
    return tree;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed tree snapshot: ") + e.what());
  }
}

void write_json_atomically(const std::filesystem::path& path, const json& doc) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << doc.dump();
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("cannot parse " + path.string() + ": " + e.what());
  }
}

void save_tree(const ConceptTree& tree, const std::filesystem::path& path) {
  write_json_atomically(path, tree_to_json(tree));
}

ConceptTree load_tree(const std::filesystem::path& path, std::optional<std::size_t> expected_dim) {
  return tree_from_json(read_json_file(path), expected_dim);
}

}  // namespace cobwebtm
