#include "scihier/hierarchy.hpp"

#include <deque>
#include <fstream>
#include <sstream>

namespace scihier {

using nlohmann::json;
using nlohmann::ordered_json;

HierarchyNode& Hierarchy::add_node(HierarchyNode node) {
  if (node.id.empty()) throw HierarchyError("node id must be non-empty");
  if (index_.count(node.id)) throw HierarchyError("duplicate node id \"" + node.id + "\"");
  if (nodes_.empty()) {
    if (!node.parent.empty()) throw HierarchyError("the first node must be the root");
  } else {
    auto it = index_.find(node.parent);
    if (it == index_.end())
      throw HierarchyError("node \"" + node.id + "\" names unknown parent \"" + node.parent + "\"");
    nodes_[it->second].children.push_back(node.id);
  }
  node.children.clear();
  index_.emplace(node.id, nodes_.size());
  nodes_.push_back(std::move(node));
  return nodes_.back();
}

const HierarchyNode& Hierarchy::root() const {
  if (nodes_.empty()) throw NotFound("empty hierarchy");
  return nodes_.front();
}

const HierarchyNode* Hierarchy::find(const std::string& id) const {
  if (id == kRootAlias && !nodes_.empty() && !index_.count(id)) return &nodes_.front();
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &nodes_[it->second];
}

const HierarchyNode& Hierarchy::node(const std::string& id) const {
  const auto* n = find(id);
  if (!n) throw NotFound("unknown node \"" + id + "\"");
  return *n;
}

HierarchyNode& Hierarchy::node(const std::string& id) {
  return const_cast<HierarchyNode&>(std::as_const(*this).node(id));
}

std::vector<std::string> Hierarchy::path_to(const std::string& id) const {
  std::vector<std::string> path;
  const HierarchyNode* n = &node(id);
  for (;;) {
    path.push_back(n->id);
    if (n->parent.empty()) break;
    n = &node(n->parent);
    if (path.size() > nodes_.size()) throw HierarchyError("cycle through \"" + id + "\"");
  }
  return {path.rbegin(), path.rend()};
}

int Hierarchy::max_layer() const {
  int m = 0;
  for (const auto& n : nodes_) m = std::max(m, n.layer);
  return m;
}

std::map<std::string, std::vector<std::string>> Hierarchy::paper_locations() const {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& n : nodes_)
    for (const auto& p : n.paper_ids) out[p].push_back(n.id);
  return out;
}

std::size_t Hierarchy::paper_count(const std::string& id) const {
  std::set<std::string> seen;
  std::vector<const HierarchyNode*> stack{&node(id)};
  while (!stack.empty()) {
    const auto* n = stack.back();
    stack.pop_back();
    seen.insert(n->paper_ids.begin(), n->paper_ids.end());
    for (const auto& c : n->children) stack.push_back(&node(c));
  }
  return seen.size();
}

std::vector<std::string> Hierarchy::bfs_order() const {
  std::vector<std::string> out;
  if (nodes_.empty()) return out;
  std::deque<const HierarchyNode*> queue{&nodes_.front()};
  while (!queue.empty()) {
    const auto* n = queue.front();
    queue.pop_front();
    out.push_back(n->id);
    for (const auto& c : n->children) queue.push_back(&node(c));
  }
  return out;
}

void Hierarchy::validate() const {
  if (nodes_.empty()) throw HierarchyError("empty hierarchy");
  const auto& r = nodes_.front();
  if (!r.parent.empty() || r.layer != 0) throw HierarchyError("root must have no parent and layer 0");
  std::map<std::string, int> seen_as_child;
  for (const auto& n : nodes_) {
    if (&n != &r && n.parent.empty()) throw HierarchyError("second root \"" + n.id + "\"");
    for (const auto& c : n.children) {
      const auto* child = find(c);
      if (!child) throw HierarchyError("node \"" + n.id + "\" lists unknown child \"" + c + "\"");
      if (child->parent != n.id)
        throw HierarchyError("child \"" + c + "\" does not name \"" + n.id + "\" as parent");
      if (child->layer != n.layer + 1) throw HierarchyError("layer of \"" + c + "\" is not parent layer + 1");
      if (++seen_as_child[c] > 1) throw HierarchyError("node \"" + c + "\" has several parents");
    }
  }
  if (bfs_order().size() != nodes_.size()) throw HierarchyError("unreachable nodes in hierarchy");
}

namespace {

ordered_json node_json(const HierarchyNode& n) {
  ordered_json j;
  j["id"] = n.id;
  j["layer"] = n.layer;
  j["cluster_name"] = n.cluster_name;
  j["summary"] = n.summary;
  j["parent"] = n.parent.empty() ? ordered_json(nullptr) : ordered_json(n.parent);
  j["children"] = n.children;
  j["paper_ids"] = n.paper_ids;
  return j;
}

}  // namespace

ordered_json to_json(const Hierarchy& h) {
  ordered_json j;
  j["meta"] = h.meta;
  j["nodes"] = ordered_json::array();
  for (const auto& id : h.bfs_order()) j["nodes"].push_back(node_json(h.node(id)));
  return j;
}

Hierarchy hierarchy_from_json(const json& j) {
  Hierarchy h;
  try {
    if (j.contains("meta")) h.meta = ordered_json::parse(j.at("meta").dump());
    const auto& nodes = j.at("nodes");
    if (!nodes.is_array() || nodes.empty()) throw ParseError("hierarchy needs a non-empty \"nodes\" array");
    // Nodes may come in any order; add each once its parent is present.
    std::vector<HierarchyNode> pending;
    std::map<std::string, std::vector<std::string>> declared_children;
    for (const auto& nj : nodes) {
      HierarchyNode n;
      n.id = nj.at("id").get<std::string>();
      n.layer = nj.at("layer").get<int>();
      n.cluster_name = nj.value("cluster_name", "");
      if (nj.contains("summary")) n.summary = ordered_json::parse(nj.at("summary").dump());
      if (nj.contains("parent") && !nj.at("parent").is_null()) n.parent = nj.at("parent").get<std::string>();
      declared_children[n.id] = nj.value("children", std::vector<std::string>{});
      n.paper_ids = nj.value("paper_ids", std::vector<std::string>{});
      pending.push_back(std::move(n));
    }
    std::size_t roots = 0;
    for (const auto& n : pending) roots += n.parent.empty();
    if (roots != 1) throw HierarchyError("hierarchy must have exactly one root");
    std::map<std::string, const HierarchyNode*> by_id;
    for (const auto& n : pending)
      if (!by_id.emplace(n.id, &n).second) throw HierarchyError("duplicate node id \"" + n.id + "\"");
    // Insert following the declared child order so it survives the round trip.
    std::deque<const HierarchyNode*> queue;
    for (const auto& n : pending)
      if (n.parent.empty()) queue.push_back(&n);
    while (!queue.empty()) {
      const auto* n = queue.front();
      queue.pop_front();
      h.add_node(*n);
      for (const auto& c : declared_children[n->id]) {
        auto it = by_id.find(c);
        if (it == by_id.end()) throw HierarchyError("node \"" + n->id + "\" lists unknown child \"" + c + "\"");
        if (it->second->parent != n->id)
          throw HierarchyError("child \"" + c + "\" does not name \"" + n->id + "\" as parent");
        queue.push_back(it->second);
      }
    }
    if (h.size() != pending.size()) throw HierarchyError("unreachable nodes in hierarchy");
  } catch (const json::exception& e) {
    throw ParseError(std::string("hierarchy: ") + e.what());
  }
  h.validate();
  return h;
}

std::string serialize_hierarchy(const Hierarchy& h) { return to_json(h).dump(2) + "\n"; }

void save_hierarchy(const Hierarchy& h, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize_hierarchy(h);
}

Hierarchy load_hierarchy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open hierarchy " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return hierarchy_from_json(j);
}

ordered_json TreeStats::to_json() const {
  ordered_json j;
  j["depth"] = depth;
  j["avg_branching"] = avg_branching;
  j["avg_branching_with_papers"] = avg_branching_with_papers;
  j["max_branching"] = max_branching;
  j["node_count"] = node_count;
  j["layer_widths"] = layer_widths;
  j["paper_count"] = paper_count;
  j["paper_attachments"] = paper_attachments;
  j["is_partition"] = is_partition;
  return j;
}

TreeStats tree_stats(const Hierarchy& h) {
  TreeStats s;
  if (h.empty()) return s;
  s.depth = h.max_layer();
  s.node_count = h.size();
  s.layer_widths.assign(static_cast<std::size_t>(s.depth), 0);
  std::size_t internal = 0, child_sum = 0, with_papers = 0, with_papers_sum = 0;
  for (const auto& n : h.nodes()) {
    if (n.layer > 0) ++s.layer_widths[static_cast<std::size_t>(n.layer - 1)];
    if (!n.children.empty()) {
      ++internal;
      child_sum += n.children.size();
      s.max_branching = std::max(s.max_branching, n.children.size());
    }
    const std::size_t all = n.children.size() + n.paper_ids.size();
    if (all) {
      ++with_papers;
      with_papers_sum += all;
    }
    s.paper_attachments += n.paper_ids.size();
    if (!n.paper_ids.empty() && n.layer != s.depth) s.is_partition = false;
  }
  if (internal) s.avg_branching = double(child_sum) / double(internal);
  if (with_papers) s.avg_branching_with_papers = double(with_papers_sum) / double(with_papers);
  const auto locations = h.paper_locations();
  s.paper_count = locations.size();
  if (s.paper_attachments != s.paper_count) s.is_partition = false;
  return s;
}

}  // namespace scihier
