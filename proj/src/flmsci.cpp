#include "scihier/flmsci.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include "scihier/json_text.hpp"
#include "scihier/prompts.hpp"

namespace scihier {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// TopicTree

TopicTree::TopicTree(std::string root_name) { nodes_.push_back({std::move(root_name), npos, {}}); }

namespace {

void read_children(TopicTree& tree, std::size_t parent, const ordered_json& value, int depth) {
  if (depth > 64) throw ParseError("topic tree nested too deeply");
  if (value.is_null() || (value.is_string() && trim(value.get<std::string>()).empty())) return;
  if (value.is_object()) {
    for (auto it = value.begin(); it != value.end(); ++it) {
      const std::string name = trim(it.key());
      if (name.empty()) throw ParseError("empty topic name");
      const std::size_t child = tree.child_named(parent, name).value_or(TopicTree::npos);
      const std::size_t id = child != TopicTree::npos ? child : tree.add_child(parent, name);
      read_children(tree, id, it.value(), depth + 1);
    }
    return;
  }
  if (value.is_array()) {
    for (const auto& item : value) {
      if (item.is_string()) {
        const std::string name = trim(item.get<std::string>());
        if (!name.empty() && !tree.child_named(parent, name)) tree.add_child(parent, name);
      } else {
        read_children(tree, parent, item, depth + 1);
      }
    }
    return;
  }
  throw ParseError("topic tree values must be objects");
}

ordered_json write_children(const TopicTree& tree, std::size_t i) {
  ordered_json j = ordered_json::object();
  for (auto c : tree.node(i).children) j[tree.name(c)] = write_children(tree, c);
  return j;
}

}  // namespace

TopicTree TopicTree::from_json(const ordered_json& j) {
  if (!j.is_object() || j.size() != 1) throw ParseError("topic tree must be an object with a single root key");
  TopicTree tree(trim(j.begin().key()));
  read_children(tree, 0, j.begin().value(), 0);
  return tree;
}

ordered_json TopicTree::to_json() const {
  ordered_json j;
  j[nodes_[0].name] = write_children(*this, 0);
  return j;
}

std::size_t TopicTree::add_child(std::size_t parent, std::string name) {
  if (parent >= nodes_.size()) throw InvalidArgument("unknown parent node");
  nodes_.push_back({std::move(name), parent, {}});
  nodes_[parent].children.push_back(nodes_.size() - 1);
  return nodes_.size() - 1;
}

std::optional<std::size_t> TopicTree::child_named(std::size_t parent, std::string_view name) const {
  const auto norm = normalize_phrase(name);
  for (auto c : nodes_.at(parent).children)
    if (normalize_phrase(nodes_[c].name) == norm) return c;
  return std::nullopt;
}

std::optional<std::size_t> TopicTree::find(std::string_view name) const {
  const auto norm = normalize_phrase(name);
  for (auto i : preorder())
    if (normalize_phrase(nodes_[i].name) == norm) return i;
  return std::nullopt;
}

std::size_t TopicTree::count_named(std::string_view name) const {
  const auto norm = normalize_phrase(name);
  std::size_t n = 0;
  for (const auto& node : nodes_) n += normalize_phrase(node.name) == norm;
  return n;
}

bool TopicTree::is_ancestor(std::size_t ancestor, std::size_t node) const {
  for (std::size_t i = nodes_.at(node).parent; i != npos; i = nodes_[i].parent)
    if (i == ancestor) return true;
  return false;
}

void TopicTree::reparent(std::size_t node, std::size_t new_parent) {
  if (node == 0) throw InvalidArgument("cannot move the root");
  if (node == new_parent || is_ancestor(node, new_parent)) throw InvalidArgument("reparenting would create a cycle");
  auto& siblings = nodes_[nodes_[node].parent].children;
  siblings.erase(std::find(siblings.begin(), siblings.end(), node));
  nodes_[node].parent = new_parent;
  nodes_[new_parent].children.push_back(node);
}

int TopicTree::depth(std::size_t i) const {
  int d = 0;
  for (std::size_t p = nodes_.at(i).parent; p != npos; p = nodes_[p].parent) ++d;
  return d;
}

int TopicTree::max_depth() const {
  int m = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) m = std::max(m, depth(i));
  return m;
}

std::vector<std::string> TopicTree::path_names(std::size_t i) const {
  std::vector<std::string> out;
  for (std::size_t p = i; p != npos; p = nodes_[p].parent) out.push_back(nodes_[p].name);
  return {out.rbegin(), out.rend()};
}

std::vector<std::size_t> TopicTree::preorder() const {
  std::vector<std::size_t> out, stack{0};
  while (!stack.empty()) {
    const auto i = stack.back();
    stack.pop_back();
    out.push_back(i);
    const auto& ch = nodes_[i].children;
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

TopicTree load_seed() {
  return TopicTree::from_json(ordered_json::parse(embedded_asset("assets/seed_hierarchy.json")));
}

const std::map<std::string, std::string>& subnode_descriptions() {
  static const auto descriptions = [] {
    std::map<std::string, std::string> out;
    const json j = json::parse(embedded_asset("assets/subnode_descriptions.json"));
    for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = it.value().get<std::string>();
    return out;
  }();
  return descriptions;
}

namespace {

/// Maps each seed node to a tree node: the root to the root, every other seed
/// node to the first same-named descendant of its parent's image.
std::optional<std::vector<std::size_t>> embed_seed(const TopicTree& tree, const TopicTree& seed) {
  if (normalize_phrase(tree.name(0)) != normalize_phrase(seed.name(0))) return std::nullopt;
  std::vector<std::size_t> image(seed.size(), TopicTree::npos);
  image[0] = 0;
  for (auto s : seed.preorder()) {
    if (s == 0) continue;
    const auto want = normalize_phrase(seed.name(s));
    const std::size_t from = image[seed.node(s).parent];
    std::deque<std::size_t> queue(tree.node(from).children.begin(), tree.node(from).children.end());
    while (!queue.empty()) {
      const auto t = queue.front();
      queue.pop_front();
      if (normalize_phrase(tree.name(t)) == want) {
        image[s] = t;
        break;
      }
      for (auto c : tree.node(t).children) queue.push_back(c);
    }
    if (image[s] == TopicTree::npos) return std::nullopt;
  }
  return image;
}

std::string path_text(const TopicTree& tree, std::size_t i) { return join(tree.path_names(i), " -> "); }

}  // namespace

bool contains_seed(const TopicTree& tree, const TopicTree& seed) { return embed_seed(tree, seed).has_value(); }

// ---------------------------------------------------------------------------
// Merge

MergeResult merge_hierarchies(const std::vector<TopicTree>& clones, const TopicTree& seed) {
  MergeResult out{seed, {}};
  std::map<std::string, std::size_t> by_name;
  for (auto i : out.tree.preorder()) by_name.emplace(normalize_phrase(out.tree.name(i)), i);
  for (std::size_t c = 0; c < clones.size(); ++c) {
    const auto& clone = clones[c];
    if (!contains_seed(clone, seed))
      throw HierarchyError("clone " + std::to_string(c) + " does not contain the seed hierarchy");
    std::vector<std::size_t> image(clone.size(), TopicTree::npos);
    image[0] = 0;
    for (auto i : clone.preorder()) {
      if (i == 0) continue;
      const std::size_t parent = image[clone.node(i).parent];
      const auto& name = clone.name(i);
      if (auto same = out.tree.child_named(parent, name)) {
        image[i] = *same;
        continue;
      }
      const auto norm = normalize_phrase(name);
      if (auto it = by_name.find(norm); it != by_name.end()) {
        out.conflicts.push_back(
            {c, name, path_text(out.tree, it->second), path_text(out.tree, parent) + " -> " + name});
        image[i] = it->second;
        continue;
      }
      image[i] = out.tree.add_child(parent, name);
      by_name.emplace(norm, image[i]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parallel variant

std::vector<std::string> unique_topics(const std::vector<std::string>& topics) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& t : topics) {
    auto clean = join(split_whitespace(t), " ");
    if (!clean.empty() && seen.insert(normalize_phrase(clean)).second) out.push_back(std::move(clean));
  }
  return out;
}

ParallelResult flmsci_parallel(const std::vector<std::string>& input, const TopicTree& seed, Gateway& gateway,
                               const ParallelOptions& options) {
  if (options.batch_size == 0) throw InvalidArgument("batch size must be >= 1");
  const auto topics = unique_topics(input);
  ParallelResult result{seed, {}, {}, 0, 0};
  if (topics.empty()) return result;
  const std::size_t batches = (topics.size() + options.batch_size - 1) / options.batch_size;
  result.batches = batches;

  const std::string seed_text = seed.to_json().dump();
  const std::string taxonomy = seed.to_json().dump(2);
  std::vector<std::optional<TopicTree>> clones(batches);
  std::vector<std::string> failure(batches);
  std::vector<char> retried(batches, 0);
  parallel_for(batches, options.workers, [&](std::size_t b) {
    const auto first = topics.begin() + static_cast<std::ptrdiff_t>(b * options.batch_size);
    const auto last = topics.begin() + static_cast<std::ptrdiff_t>(std::min(topics.size(), (b + 1) * options.batch_size));
    const std::vector<std::string> batch(first, last);
    std::string listing;
    for (const auto& t : batch) listing += "- " + t + "\n";
    const std::string prompt =
        render_template(embedded_asset("prompts/flmsci_parallel.txt"), {{"taxonomy", taxonomy}, {"topics", listing}});
    const json meta = {{"kind", "flmsci_parallel"}, {"tree", seed_text}, {"topics", batch}, {"batch", b}};
    std::string error;
    for (int attempt = 0; attempt < 2; ++attempt) {
      std::string p = prompt;
      if (attempt > 0) {
        retried[b] = 1;
        p += "\n\n" + render_template(embedded_asset("prompts/json_reminder.txt"), {{"error", error}});
      }
      try {
        auto tree = TopicTree::from_json(parse_json_payload<ordered_json>(gateway.chat(Role::flmsci, p, {}, meta)));
        if (!contains_seed(tree, seed)) throw SchemaError("the answer does not preserve the seed taxonomy");
        clones[b] = std::move(tree);
        return;
      } catch (const ParseError& e) {
        error = e.what();
      } catch (const SchemaError& e) {
        error = e.what();
      }
    }
    failure[b] = error;
  });

  std::vector<TopicTree> ok;
  for (std::size_t b = 0; b < batches; ++b) {
    result.retried_batches += retried[b];
    if (clones[b]) ok.push_back(std::move(*clones[b]));
  }
  auto merged = merge_hierarchies(ok, seed);
  result.tree = std::move(merged.tree);
  result.conflicts = std::move(merged.conflicts);
  std::set<std::string> placed;
  for (std::size_t i = 0; i < result.tree.size(); ++i) placed.insert(normalize_phrase(result.tree.name(i)));
  for (std::size_t i = 0; i < topics.size(); ++i) {
    const std::size_t b = i / options.batch_size;
    if (!clones[b] && !failure[b].empty())
      result.quarantine.push_back({topics[i], b, "batch unusable after retry: " + failure[b]});
    else if (!placed.count(normalize_phrase(topics[i])))
      result.quarantine.push_back({topics[i], b, "not placed by the model"});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Incremental variant

std::string_view edit_kind_name(EditKind kind) {
  switch (kind) {
    case EditKind::go_down: return "go_down";
    case EditKind::add_sibling: return "add_sibling";
    case EditKind::make_parent: return "make_parent";
    case EditKind::discard: return "discard";
  }
  return "discard";
}

std::string_view outcome_name(InsertOutcome outcome) {
  switch (outcome) {
    case InsertOutcome::inserted: return "inserted";
    case InsertOutcome::made_parent: return "made_parent";
    case InsertOutcome::discarded: return "discarded";
    case InsertOutcome::duplicate: return "duplicate";
    case InsertOutcome::invalid: return "invalid";
    case InsertOutcome::depth_guard: return "depth_guard";
  }
  return "discarded";
}

EditAction parse_edit_action(std::string_view text) {
  const json doc = parse_json_payload(text);
  if (!doc.is_object()) throw SchemaError("action must be a JSON object");
  static const std::set<std::string> known = {"action", "node", "parent_node", "child_nodes", "explanation"};
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!known.count(it.key())) throw SchemaError("unknown key \"" + it.key() + "\" in action", it.key());
  if (!doc.contains("action") || !doc.at("action").is_string()) throw SchemaError("missing key \"action\"", "action");
  EditAction a;
  const std::string kind = doc.at("action").get<std::string>();
  if (kind == "go_down") a.kind = EditKind::go_down;
  else if (kind == "add_sibling") a.kind = EditKind::add_sibling;
  else if (kind == "make_parent") a.kind = EditKind::make_parent;
  else if (kind == "discard") a.kind = EditKind::discard;
  else throw SchemaError("unknown action \"" + kind + "\"", "action");

  auto text_field = [&](const char* key) -> std::optional<std::string> {
    if (!doc.contains(key) || doc.at(key).is_null()) return std::nullopt;
    if (!doc.at(key).is_string()) throw SchemaError(std::string("\"") + key + "\" must be a string", key);
    auto v = trim(doc.at(key).get<std::string>());
    if (v.empty()) return std::nullopt;
    return v;
  };
  a.node = text_field("node").value_or("");
  a.parent_node = text_field("parent_node");
  a.explanation = text_field("explanation").value_or("");
  if (doc.contains("child_nodes") && !doc.at("child_nodes").is_null()) {
    if (!doc.at("child_nodes").is_array()) throw SchemaError("\"child_nodes\" must be an array", "child_nodes");
    for (const auto& c : doc.at("child_nodes")) {
      if (!c.is_string()) throw SchemaError("\"child_nodes\" must hold strings", "child_nodes");
      a.child_nodes.push_back(trim(c.get<std::string>()));
    }
  }
  // Field presence per action.
  if (a.kind != EditKind::discard && a.node.empty()) throw SchemaError("missing key \"node\"", "node");
  if (a.kind == EditKind::add_sibling && !a.parent_node)
    throw SchemaError("add_sibling needs \"parent_node\"", "parent_node");
  if (a.kind != EditKind::add_sibling && a.parent_node)
    throw SchemaError("\"parent_node\" is only used by add_sibling", "parent_node");
  if (a.kind == EditKind::make_parent && a.child_nodes.empty())
    throw SchemaError("make_parent needs \"child_nodes\"", "child_nodes");
  if (a.kind != EditKind::make_parent && !a.child_nodes.empty())
    throw SchemaError("\"child_nodes\" is only used by make_parent", "child_nodes");
  return a;
}

namespace {

std::map<std::string, std::string> action_texts() {
  std::map<std::string, std::string> out;
  std::string body(embedded_asset("prompts/flmsci_actions.txt"));
  std::size_t start = 0;
  while (start < body.size()) {
    auto end = body.find('\n', start);
    if (end == std::string::npos) end = body.size();
    const std::string line = body.substr(start, end - start);
    if (const auto eq = line.find('='); eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
    start = end + 1;
  }
  return out;
}

std::string quoted_list(const std::vector<std::string>& items, std::string_view sep) {
  std::vector<std::string> q;
  for (const auto& i : items) q.push_back("\"" + i + "\"");
  return join(q, sep);
}

/// Why the action cannot run here, or "" when it can.
std::string illegal_reason(const EditAction& a, const std::vector<std::string>& allowed, const TopicTree& tree,
                           std::size_t cur, const std::string& topic) {
  const std::string kind(edit_kind_name(a.kind));
  if (std::find(allowed.begin(), allowed.end(), kind) == allowed.end())
    return "action \"" + kind + "\" is not available at \"" + tree.name(cur) + "\"";
  switch (a.kind) {
    case EditKind::go_down:
      if (!tree.child_named(cur, a.node)) return "\"" + a.node + "\" is not one of the subnodes";
      break;
    case EditKind::add_sibling:
      if (normalize_phrase(a.node) != normalize_phrase(topic)) return "add_sibling must add the new topic";
      if (normalize_phrase(*a.parent_node) != normalize_phrase(tree.name(cur)))
        return "parent_node must be \"" + tree.name(cur) + "\"";
      break;
    case EditKind::make_parent: {
      const bool is_topic = normalize_phrase(a.node) == normalize_phrase(topic);
      const auto as_sub = tree.child_named(cur, a.node);
      if (!is_topic && !as_sub) return "make_parent node must be the new topic or a subnode";
      std::set<std::string> seen;
      for (const auto& c : a.child_nodes) {
        if (!tree.child_named(cur, c)) return "\"" + c + "\" is not one of the subnodes";
        if (as_sub && normalize_phrase(c) == normalize_phrase(a.node)) continue;  // ignored
        if (!seen.insert(normalize_phrase(c)).second) return "child_nodes repeats \"" + c + "\"";
      }
      if (seen.empty()) return "make_parent must move at least one other subnode";
      break;
    }
    case EditKind::discard: break;
  }
  return {};
}

}  // namespace

InsertResult flmsci_incremental(const std::string& topic, TopicTree& tree, Gateway& gateway,
                                const IncrementalOptions& options, std::vector<ActionRecord>* log) {
  InsertResult result;
  static const auto actions = action_texts();
  const std::string tmpl(embedded_asset("prompts/flmsci_incremental.txt"));
  std::size_t cur = 0;
  int reprompts_left = options.reprompt_budget;
  auto record = [&](const std::string& action, const std::string& note) {
    if (log)
      log->push_back({topic, path_text(tree, cur), tree.depth(cur), tree.node(cur).children.empty(), action, note});
  };

  for (;;) {
    const int depth = tree.depth(cur);
    if (depth >= options.max_depth) {
      result.outcome = InsertOutcome::depth_guard;
      result.reason = "maximum depth reached";
      record("discard", result.reason);
      return result;
    }
    std::vector<std::string> subnodes;
    for (auto c : tree.node(cur).children) subnodes.push_back(tree.name(c));
    std::vector<std::string> allowed;
    if (!subnodes.empty()) allowed.push_back("go_down");
    if (depth >= options.creation_min_depth) {
      allowed.push_back("add_sibling");
      if (!subnodes.empty()) allowed.push_back("make_parent");
    }
    allowed.push_back("discard");

    std::string action_lines, descriptions;
    for (const auto& a : allowed)
      action_lines += render_template(actions.at(a), {{"new_topic", topic}, {"current_node", tree.name(cur)}}) + "\n";
    if (depth == 0) {
      const auto& desc = subnode_descriptions();
      std::string lines;
      for (const auto& s : subnodes)
        if (auto it = desc.find(s); it != desc.end()) lines += "- " + s + ": " + it->second + "\n";
      if (!lines.empty()) descriptions = "SUBNODE_DESCRIPTIONS:\n" + lines;
    }
    const std::string prompt = render_template(
        tmpl, {{"current_path", path_text(tree, cur)},
               {"descriptions", descriptions},
               {"subnodes", quoted_list(subnodes, ", ")},
               {"new_topic", topic},
               {"actions", action_lines},
               {"current_node", tree.name(cur)},
               {"action_list", quoted_list(allowed, " | ")}});
    const json meta = {{"kind", "flmsci_incremental"}, {"topic", topic},       {"current", tree.name(cur)},
                       {"depth", depth},               {"subnodes", subnodes}, {"allowed", allowed}};

    std::string p = prompt;
    EditAction action;
    for (;;) {
      ++result.calls;
      std::string why;
      try {
        action = parse_edit_action(gateway.chat(Role::flmsci, p, {}, meta));
        why = illegal_reason(action, allowed, tree, cur, topic);
      } catch (const ParseError& e) {
        why = e.what();
      } catch (const SchemaError& e) {
        why = e.what();
      }
      if (why.empty()) break;
      record("invalid", why);
      if (reprompts_left-- <= 0) {
        result.outcome = InsertOutcome::invalid;
        result.reason = why;
        return result;
      }
      ++result.reprompts;
      p = prompt + "\n\nYour previous answer was rejected: " + why + ". Choose one of " +
          quoted_list(allowed, ", ") + " and answer with valid JSON only.";
    }

    switch (action.kind) {
      case EditKind::go_down:
        record("go_down", action.node);
        cur = *tree.child_named(cur, action.node);
        continue;
      case EditKind::discard:
        record("discard", action.explanation);
        result.outcome = InsertOutcome::discarded;
        result.reason = action.explanation;
        return result;
      case EditKind::add_sibling:
        if (tree.child_named(cur, topic)) {
          record("add_sibling", "already present");
          result.outcome = InsertOutcome::duplicate;
          return result;
        }
        record("add_sibling", "");
        tree.add_child(cur, topic);
        result.outcome = InsertOutcome::inserted;
        return result;
      case EditKind::make_parent: {
        record("make_parent", join(action.child_nodes, ", "));
        std::vector<std::size_t> moving;
        for (const auto& c : action.child_nodes) moving.push_back(*tree.child_named(cur, c));
        std::size_t parent;
        if (auto sub = tree.child_named(cur, action.node); sub && normalize_phrase(action.node) != normalize_phrase(topic)) {
          parent = *sub;
          if (!tree.child_named(parent, topic)) tree.add_child(parent, topic);
        } else {
          parent = tree.child_named(cur, topic).value_or(TopicTree::npos);
          if (parent == TopicTree::npos) parent = tree.add_child(cur, topic);
        }
        for (auto m : moving)
          if (m != parent && tree.node(m).parent == cur) tree.reparent(m, parent);
        result.outcome = InsertOutcome::made_parent;
        return result;
      }
    }
  }
}

IncrementalResult flmsci_incremental_all(const std::vector<std::string>& topics, const TopicTree& seed,
                                         Gateway& gateway, const IncrementalOptions& options) {
  IncrementalResult out{seed, {}, 0, {}};
  for (const auto& t : unique_topics(topics)) {
    const auto r = flmsci_incremental(t, out.tree, gateway, options, &out.log);
    ++out.outcomes[std::string(outcome_name(r.outcome))];
    out.calls += r.calls;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cost model

CostMethod parse_cost_method(std::string_view name) {
  if (name == "scichic") return CostMethod::scichic;
  if (name == "par") return CostMethod::par;
  if (name == "inc") return CostMethod::inc;
  throw InvalidArgument("unknown cost method \"" + std::string(name) + "\"");
}

std::uint64_t predicted_calls(CostMethod method, std::uint64_t C, double b, std::uint64_t l,
                              const std::vector<std::size_t>& plan) {
  if (C == 0) throw InvalidArgument("C must be positive");
  switch (method) {
    case CostMethod::scichic: {
      if (!plan.empty()) {
        std::uint64_t s = 0;
        for (auto k : plan) s += k;
        return s;
      }
      if (!(b > 1.0)) throw InvalidArgument("branching factor must exceed 1");
      std::uint64_t s = 0;
      for (double layer = std::ceil(double(C) / b); layer > 1.0; layer = std::ceil(layer / b))
        s += static_cast<std::uint64_t>(layer);
      return s;
    }
    case CostMethod::par:
      if (l == 0) throw InvalidArgument("batch size must be positive");
      return (C + l - 1) / l;
    case CostMethod::inc: {
      if (!(b > 1.0)) throw InvalidArgument("branching factor must exceed 1");
      const double levels = C > 1 ? std::ceil(std::log(double(C)) / std::log(b)) : 1.0;
      return C * static_cast<std::uint64_t>(levels);
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Export

Hierarchy topic_tree_to_hierarchy(const TopicTree& tree,
                                  const std::map<std::string, std::vector<std::string>>& paper_topics,
                                  ordered_json meta) {
  std::map<std::string, std::vector<std::size_t>> by_name;
  for (auto i : tree.preorder()) by_name[normalize_phrase(tree.name(i))].push_back(i);
  std::vector<std::vector<std::string>> attached(tree.size());
  std::size_t unattached = 0;
  for (const auto& [paper, topics] : paper_topics) {
    std::set<std::size_t> nodes;
    for (const auto& t : topics)
      if (auto it = by_name.find(normalize_phrase(t)); it != by_name.end()) nodes.insert(it->second.begin(), it->second.end());
    nodes.erase(0);
    if (nodes.empty()) ++unattached;
    for (auto n : nodes) attached[n].push_back(paper);
  }

  // Breadth-first numbering, as for clustered hierarchies.
  std::vector<std::size_t> order{0};
  for (std::size_t i = 0; i < order.size(); ++i)
    for (auto c : tree.node(order[i]).children) order.push_back(c);
  std::vector<std::string> ids(tree.size());
  std::map<int, std::size_t> ordinal;
  const auto& desc = subnode_descriptions();
  Hierarchy h;
  for (auto i : order) {
    const int layer = tree.depth(i);
    ids[i] = "L" + std::to_string(layer) + "-" + std::to_string(ordinal[layer]++);
    HierarchyNode n;
    n.id = ids[i];
    n.layer = layer;
    n.cluster_name = tree.name(i);
    if (layer == 1)
      if (auto it = desc.find(tree.name(i)); it != desc.end()) n.summary["description"] = it->second;
    if (i != 0) n.parent = ids[tree.node(i).parent];
    n.paper_ids = attached[i];
    h.add_node(std::move(n));
  }
  h.meta = std::move(meta);
  h.meta["unattached_papers"] = unattached;
  h.meta["stats"] = tree_stats(h).to_json();
  return h;
}

}  // namespace scihier
