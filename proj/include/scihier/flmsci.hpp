#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scihier/gateway.hpp"
#include "scihier/hierarchy.hpp"

namespace scihier {

/// Named topic tree edited by the LLM-only baselines. Nodes are never
/// removed, so indices stay valid; index 0 is the root.
class TopicTree {
public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  struct Node {
    std::string name;
    std::size_t parent = npos;
    std::vector<std::size_t> children;
  };

  explicit TopicTree(std::string root_name = "Science");
  /// Nested object with a single root key: {"Science": {"Formal Sciences": {...}, ...}}.
  /// Throws ParseError.
  static TopicTree from_json(const nlohmann::ordered_json& j);
  nlohmann::ordered_json to_json() const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  const std::string& name(std::size_t i) const { return nodes_.at(i).name; }
  std::size_t add_child(std::size_t parent, std::string name);
  /// Child of parent whose normalized name equals name's.
  std::optional<std::size_t> child_named(std::size_t parent, std::string_view name) const;
  /// First node in pre-order with that normalized name.
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t count_named(std::string_view name) const;
  /// Moves node under new_parent. Throws InvalidArgument when that would
  /// create a cycle or move the root.
  void reparent(std::size_t node, std::size_t new_parent);
  int depth(std::size_t i) const;
  int max_depth() const;
  bool is_ancestor(std::size_t ancestor, std::size_t node) const;
  std::vector<std::string> path_names(std::size_t i) const;
  std::vector<std::size_t> preorder() const;

private:
  std::vector<Node> nodes_;
};

/// The built-in seed science taxonomy.
TopicTree load_seed();
/// Descriptions shown instead of bare labels for the seed's first level.
const std::map<std::string, std::string>& subnode_descriptions();

/// True when every seed node is present and every seed edge is preserved as
/// an ancestor relation (nodes may gain intermediate parents).
bool contains_seed(const TopicTree& tree, const TopicTree& seed);

struct MergeConflict {
  std::size_t clone = 0;
  std::string name;
  std::string kept_path;     // existing location
  std::string dropped_path;  // location proposed by the later clone
};

struct MergeResult {
  TopicTree tree;
  std::vector<MergeConflict> conflicts;
};

/// Union of the clones by normalized name under identical parent paths, in
/// clone order. A name already placed elsewhere keeps its first location and
/// the conflict is logged. Throws HierarchyError if a clone lacks the seed.
MergeResult merge_hierarchies(const std::vector<TopicTree>& clones, const TopicTree& seed);

struct ParallelOptions {
  std::size_t batch_size = 100;
  std::size_t workers = 4;
};

struct QuarantinedTopic {
  std::string topic;
  std::size_t batch = 0;
  std::string reason;
};

struct ParallelResult {
  TopicTree tree;
  std::vector<QuarantinedTopic> quarantine;
  std::vector<MergeConflict> conflicts;
  std::size_t batches = 0;
  std::size_t retried_batches = 0;
};

/// Case-folded, whitespace-collapsed dedup keeping first occurrences.
std::vector<std::string> unique_topics(const std::vector<std::string>& topics);

/// Batched insertion: each batch is sent once (role flmsci) with a private
/// clone of the seed; unusable answers are retried once, then the batch's
/// topics are quarantined. Clones are merged without further calls. Every
/// input topic ends up in the tree or in the quarantine list.
ParallelResult flmsci_parallel(const std::vector<std::string>& topics, const TopicTree& seed, Gateway& gateway,
                               const ParallelOptions& options = {});

enum class EditKind { go_down, add_sibling, make_parent, discard };
std::string_view edit_kind_name(EditKind kind);

struct EditAction {
  EditKind kind = EditKind::discard;
  std::string node;
  std::optional<std::string> parent_node;
  std::vector<std::string> child_nodes;
  std::string explanation;
};

/// Parses the action JSON; throws ParseError / SchemaError.
EditAction parse_edit_action(std::string_view text);

struct IncrementalOptions {
  /// Node-creation actions are offered only at nodes this deep or deeper
  /// (root = 0), so new nodes land at layer 3 or below.
  int creation_min_depth = 2;
  /// Descents stop here and the topic is discarded.
  int max_depth = 14;
  /// Re-prompts allowed per topic after an invalid answer.
  int reprompt_budget = 1;
};

/// One executed (or rejected) decision, for audit.
struct ActionRecord {
  std::string topic;
  std::string at;       // path of the node the decision was made at
  int depth = 0;
  bool at_leaf = false;
  std::string action;   // executed action, or "invalid"
  std::string note;
};

enum class InsertOutcome { inserted, made_parent, discarded, duplicate, invalid, depth_guard };
std::string_view outcome_name(InsertOutcome outcome);

struct InsertResult {
  InsertOutcome outcome = InsertOutcome::discarded;
  std::size_t calls = 0;
  std::size_t reprompts = 0;
  std::string reason;
};

/// Inserts one topic by repeated prompting from the root (role flmsci). At
/// depth < creation_min_depth only go_down/discard are offered; go_down is
/// withheld at a leaf; make_parent needs at least one subnode.
InsertResult flmsci_incremental(const std::string& topic, TopicTree& tree, Gateway& gateway,
                                const IncrementalOptions& options = {}, std::vector<ActionRecord>* log = nullptr);

struct IncrementalResult {
  TopicTree tree;
  std::map<std::string, std::size_t> outcomes;  // outcome name -> count
  std::size_t calls = 0;
  std::vector<ActionRecord> log;
};

/// Sequential insertion of every unique topic into a copy of the seed.
IncrementalResult flmsci_incremental_all(const std::vector<std::string>& topics, const TopicTree& seed,
                                         Gateway& gateway, const IncrementalOptions& options = {});

enum class CostMethod { scichic, par, inc };
CostMethod parse_cost_method(std::string_view name);

/// LLM-call estimates: scichic = sum of the layer plan if given, else
/// sum_i ceil(C / b^i) over the layers above single clusters; par =
/// ceil(C / l); inc = C * ceil(log_b C). Throws InvalidArgument on
/// non-positive inputs.
std::uint64_t predicted_calls(CostMethod method, std::uint64_t C, double b, std::uint64_t l = 100,
                              const std::vector<std::size_t>& plan = {});

/// Converts a topic tree into the shared hierarchy format. Each paper is
/// attached to every node whose normalized name equals one of its topics.
Hierarchy topic_tree_to_hierarchy(const TopicTree& tree,
                                  const std::map<std::string, std::vector<std::string>>& paper_topics,
                                  nlohmann::ordered_json meta = nlohmann::ordered_json::object());

}  // namespace scihier
