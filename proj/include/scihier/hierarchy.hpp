#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "scihier/common.hpp"

namespace scihier {

/// One node of a concept hierarchy. Internal nodes carry a cluster name and a
/// structured summary; papers hang off leaf-attachment nodes.
struct HierarchyNode {
  std::string id;
  int layer = 0;  // 0 = root
  std::string cluster_name;
  /// Summary body: canonical field name -> text (empty for the root and for
  /// topic-tree nodes without descriptions).
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  std::string parent;  // "" for the root
  std::vector<std::string> children;
  std::vector<std::string> paper_ids;

  bool operator==(const HierarchyNode&) const = default;
};

class HierarchyError : public Error {
public:
  using Error::Error;
};

/// Rooted tree of HierarchyNodes plus free-form metadata. The first node
/// added is the root.
class Hierarchy {
public:
  static constexpr const char* kRootAlias = "root";

  nlohmann::ordered_json meta = nlohmann::ordered_json::object();

  /// Adds a node; a non-root node must name an existing parent, which gets
  /// the node appended to its children. Throws HierarchyError.
  HierarchyNode& add_node(HierarchyNode node);

  bool empty() const noexcept { return nodes_.empty(); }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<HierarchyNode>& nodes() const noexcept { return nodes_; }
  const HierarchyNode& root() const;
  /// Accepts "root" as an alias for the root id. Throws NotFound.
  const HierarchyNode& node(const std::string& id) const;
  HierarchyNode& node(const std::string& id);
  const HierarchyNode* find(const std::string& id) const;
  bool contains(const std::string& id) const { return find(id) != nullptr; }

  /// Node ids from the root down to id (inclusive).
  std::vector<std::string> path_to(const std::string& id) const;
  /// Deepest layer present (0 for a single-node tree).
  int max_layer() const;
  /// Paper id -> ids of the nodes holding it, in node order.
  std::map<std::string, std::vector<std::string>> paper_locations() const;
  /// Distinct papers in the subtree rooted at id.
  std::size_t paper_count(const std::string& id) const;
  /// Node ids in breadth-first order following child order.
  std::vector<std::string> bfs_order() const;

  /// Structural check: unique ids, single root at layer 0, parent/child links
  /// agree, child layer = parent layer + 1, every node reachable. Throws
  /// HierarchyError.
  void validate() const;

private:
  std::vector<HierarchyNode> nodes_;
  std::map<std::string, std::size_t> index_;
};

/// {"meta": ..., "nodes": [...]}, nodes in breadth-first order.
nlohmann::ordered_json to_json(const Hierarchy& h);
/// Throws ParseError / HierarchyError.
Hierarchy hierarchy_from_json(const nlohmann::json& j);
/// Canonical text form: 2-space indented JSON and a trailing newline.
std::string serialize_hierarchy(const Hierarchy& h);
void save_hierarchy(const Hierarchy& h, const std::filesystem::path& path);
Hierarchy load_hierarchy(const std::filesystem::path& path);

struct TreeStats {
  int depth = 0;                       // longest root-to-cluster path, papers excluded
  double avg_branching = 0.0;          // child clusters per internal node
  double avg_branching_with_papers = 0.0;  // children counting attached papers
  std::size_t max_branching = 0;
  std::size_t node_count = 0;          // clusters including the root
  std::vector<std::size_t> layer_widths;  // index l-1 -> nodes at layer l
  std::size_t paper_count = 0;         // distinct attached papers
  std::size_t paper_attachments = 0;
  /// Every attached paper sits under exactly one node, all at the deepest layer.
  bool is_partition = true;

  nlohmann::ordered_json to_json() const;
};

TreeStats tree_stats(const Hierarchy& h);

}  // namespace scihier
