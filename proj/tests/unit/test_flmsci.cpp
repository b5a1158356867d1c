#include <gtest/gtest.h>

#include <mutex>
#include <set>

#include "scihier/flmsci.hpp"
#include "scihier/mock_provider.hpp"
#include "support.hpp"

using namespace scihier;
using namespace scihier::testing;
using nlohmann::json;

namespace {

std::vector<std::string> make_topics(std::size_t n, std::uint64_t seed) {
  static const char* kA[] = {"adaptive", "sparse", "quantum", "stochastic", "robust", "neural", "thermal", "spectral"};
  static const char* kB[] = {"imaging", "transport", "sampling", "control", "inference", "catalysis", "ecology", "markets"};
  Rng rng(seed);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(std::string(kA[rng.below(8)]) + " " + kB[rng.below(8)] + " " + std::to_string(i));
  return out;
}

std::size_t index_of(const TopicTree& t, const std::string& name) {
  auto i = t.find(name);
  if (!i) throw NotFound(name);
  return *i;
}

/// Wraps the mock, returning garbage for chosen parallel batches.
class BrokenBatchProvider : public ChatProvider {
public:
  explicit BrokenBatchProvider(std::set<std::size_t> broken) : broken_(std::move(broken)) {}
  std::string name() const override { return "broken-batch"; }
  std::string complete(const ChatRequest& r) override {
    if (broken_.count(r.meta.value("batch", std::size_t{0}))) return "I cannot do this.";
    return inner_.complete(r);
  }

private:
  std::set<std::size_t> broken_;
  MockProvider inner_;
};

/// Answers every incremental prompt with a random, often illegal, action.
class ChaosProvider : public ChatProvider {
public:
  std::string name() const override { return "chaos"; }
  std::string complete(const ChatRequest& r) override {
    std::lock_guard lock(mutex_);
    const auto subs = r.meta.value("subnodes", std::vector<std::string>{});
    const std::string topic = r.meta.value("topic", "");
    const std::string any = subs.empty() ? "Nowhere" : subs[rng_.below(subs.size())];
    switch (rng_.below(6)) {
      case 0: return json{{"action", "go_down"}, {"node", any}}.dump();
      case 1: return json{{"action", "go_down"}, {"node", "Invented Node"}}.dump();
      case 2: return json{{"action", "add_sibling"}, {"node", topic}, {"parent_node", r.meta.value("current", "")}}.dump();
      case 3: return json{{"action", "make_parent"}, {"node", topic}, {"child_nodes", {any}}}.dump();
      case 4: return "{not json";
      default: return json{{"action", "add_sibling"}, {"node", topic}, {"parent_node", "Science"}}.dump();
    }
  }

private:
  std::mutex mutex_;
  Rng rng_{99};
};

}  // namespace

TEST(Seed, KnownStructure) {
  const auto seed = load_seed();
  EXPECT_EQ(seed.size(), 53u);
  std::vector<std::string> top;
  for (auto c : seed.node(0).children) top.push_back(seed.name(c));
  EXPECT_EQ(top, (std::vector<std::string>{"Formal Sciences", "Natural Sciences", "Social Sciences"}));
  EXPECT_TRUE(seed.child_named(index_of(seed, "Physics"), "Quantum Mechanics"));
  EXPECT_EQ(seed.path_names(index_of(seed, "Astronomy")),
            (std::vector<std::string>{"Science", "Natural Sciences", "Physical Science", "Astronomy"}));
  EXPECT_TRUE(contains_seed(seed, seed));
  for (const auto& [name, text] : subnode_descriptions()) EXPECT_TRUE(seed.child_named(0, name)) << name;
}

TEST(TopicTree, JsonRoundTripAndEdits) {
  auto t = load_seed();
  EXPECT_EQ(TopicTree::from_json(t.to_json()).to_json(), t.to_json());
  const auto physics = index_of(t, "Physics");
  const auto chem = index_of(t, "Chemistry");
  t.reparent(chem, physics);
  EXPECT_TRUE(t.is_ancestor(physics, chem));
  EXPECT_TRUE(contains_seed(t, load_seed()));  // Physical Science is still an ancestor of Chemistry
  EXPECT_THROW(t.reparent(physics, chem), InvalidArgument);
  EXPECT_THROW(t.reparent(0, physics), InvalidArgument);
  EXPECT_THROW(TopicTree::from_json(json::parse(R"({"a":{}, "b":{}})")), ParseError);
}

TEST(TopicTree, MovingASeedNodeAcrossBranchesBreaksTheSeed) {
  auto t = load_seed();
  t.reparent(index_of(t, "Chemistry"), index_of(t, "Economics"));
  EXPECT_FALSE(contains_seed(t, load_seed()));
}

TEST(Merge, IdenticalClonesGiveTheSeed) {
  const auto seed = load_seed();
  const auto m = merge_hierarchies({seed, seed}, seed);
  EXPECT_EQ(m.tree.to_json(), seed.to_json());
  EXPECT_TRUE(m.conflicts.empty());
}

TEST(Merge, UnionCountsAndFirstLocationWins) {
  const auto seed = load_seed();
  auto a = seed, b = seed, c = seed;
  a.add_child(index_of(a, "Physics"), "Topic A");
  b.add_child(index_of(b, "Mathematics"), "Topic B");
  b.add_child(index_of(b, "Mathematics"), "topic   a");  // conflicts with a's placement
  c.add_child(index_of(c, "Economics"), "Topic C");
  c.add_child(index_of(c, "Physics"), "Topic A");        // same place: no conflict
  const auto m = merge_hierarchies({a, b, c}, seed);
  EXPECT_EQ(m.tree.size(), seed.size() + 3);
  ASSERT_EQ(m.conflicts.size(), 1u);
  EXPECT_EQ(m.conflicts[0].clone, 1u);
  EXPECT_NE(m.conflicts[0].kept_path.find("Physics"), std::string::npos);
  EXPECT_NE(m.conflicts[0].dropped_path.find("Mathematics"), std::string::npos);
  EXPECT_EQ(m.tree.count_named("topic a"), 1u);
  EXPECT_TRUE(contains_seed(m.tree, seed));
}

TEST(Merge, CloneWithoutTheSeedIsRejected) {
  const auto seed = load_seed();
  EXPECT_THROW(merge_hierarchies({TopicTree("Science")}, seed), HierarchyError);
}

TEST(Parallel, UniqueTopicsFoldCaseAndSpace) {
  EXPECT_EQ(unique_topics({"Graph  Theory", "graph theory", "Optics", ""}),
            (std::vector<std::string>{"Graph Theory", "Optics"}));
}

TEST(Parallel, NoTopicsNoCalls) {
  auto gw = mock_gateway(std::make_shared<MockProvider>());
  const auto r = flmsci_parallel({}, load_seed(), *gw);
  EXPECT_EQ(gw->ledger_report().total_calls(), 0u);
  EXPECT_EQ(r.tree.to_json(), load_seed().to_json());
}

TEST(Parallel, OneCallPerBatchAndEveryTopicAccountedFor) {
  const auto topics = make_topics(350, 3);
  auto gw = mock_gateway(std::make_shared<MockProvider>());
  const auto r = flmsci_parallel(topics, load_seed(), *gw, {.batch_size = 100, .workers = 3});
  EXPECT_EQ(r.batches, 4u);
  EXPECT_EQ(gw->ledger_report().of(Role::flmsci).calls, 4u);
  EXPECT_TRUE(contains_seed(r.tree, load_seed()));
  std::size_t placed = 0;
  for (const auto& t : topics) placed += r.tree.count_named(t) > 0;
  EXPECT_EQ(placed + r.quarantine.size(), topics.size());
}

TEST(Parallel, UnusableBatchIsRetriedOnceThenQuarantined) {
  const auto topics = make_topics(250, 4);
  auto gw = mock_gateway(std::make_shared<BrokenBatchProvider>(std::set<std::size_t>{1}));
  const auto r = flmsci_parallel(topics, load_seed(), *gw, {.batch_size = 100, .workers = 2});
  EXPECT_EQ(gw->ledger_report().of(Role::flmsci).calls, 4u);
  EXPECT_EQ(r.retried_batches, 1u);
  ASSERT_EQ(r.quarantine.size(), 100u);
  for (const auto& q : r.quarantine) EXPECT_EQ(q.batch, 1u);
  std::size_t placed = 0;
  for (const auto& t : topics) placed += r.tree.count_named(t) > 0;
  EXPECT_EQ(placed, 150u);
}

TEST(EditAction, ParsingIsStrict) {
  const auto a = parse_edit_action(R"({"action":"make_parent","node":"X","child_nodes":["A","B"]})");
  EXPECT_EQ(a.kind, EditKind::make_parent);
  EXPECT_EQ(a.child_nodes.size(), 2u);
  EXPECT_THROW(parse_edit_action(R"({"action":"teleport","node":"X"})"), SchemaError);
  EXPECT_THROW(parse_edit_action(R"({"action":"discard","node":"X","mood":"sad"})"), SchemaError);
  EXPECT_THROW(parse_edit_action("nope"), ParseError);
}

TEST(Incremental, ScriptedDescentThenSibling) {
  auto mock = std::make_shared<MockProvider>();
  ScriptEntry e;
  e.role = Role::flmsci;
  e.responses = {R"({"action":"go_down","node":"Natural Sciences"})",
                 R"({"action":"go_down","node":"Physical Science"})",
                 R"({"action":"add_sibling","node":"Plasma Physics","parent_node":"Physical Science"})"};
  mock->add_script(e);
  auto gw = mock_gateway(mock);
  auto tree = load_seed();
  std::vector<ActionRecord> log;
  const auto r = flmsci_incremental("Plasma Physics", tree, *gw, {}, &log);
  EXPECT_EQ(r.outcome, InsertOutcome::inserted);
  EXPECT_EQ(r.calls, 3u);
  EXPECT_EQ(tree.path_names(index_of(tree, "Plasma Physics")),
            (std::vector<std::string>{"Science", "Natural Sciences", "Physical Science", "Plasma Physics"}));
  ASSERT_EQ(log.size(), 3u);
  EXPECT_EQ(log[2].action, "add_sibling");
  EXPECT_EQ(log[2].depth, 2);
}

TEST(Incremental, DiscardAtTheRoot) {
  auto mock = std::make_shared<MockProvider>();
  ScriptEntry e;
  e.responses = {R"({"action":"discard","node":"Cooking","explanation":"not science"})"};
  mock->add_script(e);
  auto gw = mock_gateway(mock);
  auto tree = load_seed();
  const auto r = flmsci_incremental("Cooking", tree, *gw);
  EXPECT_EQ(r.outcome, InsertOutcome::discarded);
  EXPECT_EQ(r.calls, 1u);
  EXPECT_EQ(tree.to_json(), load_seed().to_json());
}

TEST(Incremental, CreationAtShallowDepthIsRejected) {
  auto mock = std::make_shared<MockProvider>();
  ScriptEntry e;
  e.responses = {R"({"action":"add_sibling","node":"Plasma","parent_node":"Science"})"};
  mock->add_script(e);
  auto gw = mock_gateway(mock);
  auto tree = load_seed();
  const auto r = flmsci_incremental("Plasma", tree, *gw);
  EXPECT_EQ(r.outcome, InsertOutcome::invalid);
  EXPECT_EQ(r.calls, 2u);  // one re-prompt
  EXPECT_EQ(r.reprompts, 1u);
  EXPECT_EQ(tree.size(), load_seed().size());
}

TEST(Incremental, MakeParentGroupsSubnodes) {
  auto mock = std::make_shared<MockProvider>();
  ScriptEntry e;
  e.responses = {R"({"action":"go_down","node":"Natural Sciences"})",
                 R"({"action":"go_down","node":"Physical Science"})",
                 R"({"action":"make_parent","node":"Planetary Sciences","child_nodes":["Geology","Oceanography"]})"};
  mock->add_script(e);
  auto gw = mock_gateway(mock);
  auto tree = load_seed();
  const auto r = flmsci_incremental("Planetary Sciences", tree, *gw);
  EXPECT_EQ(r.outcome, InsertOutcome::made_parent);
  const auto p = index_of(tree, "Planetary Sciences");
  EXPECT_EQ(tree.name(tree.node(p).parent), "Physical Science");
  EXPECT_EQ(tree.name(tree.node(index_of(tree, "Geology")).parent), "Planetary Sciences");
  EXPECT_TRUE(contains_seed(tree, load_seed()));
}

TEST(Incremental, IllegalAnswersNeverCorruptTheTree) {
  auto gw = mock_gateway(std::make_shared<ChaosProvider>());
  const auto seed = load_seed();
  const auto r = flmsci_incremental_all(make_topics(300, 8), seed, *gw);
  EXPECT_TRUE(contains_seed(r.tree, seed));
  for (std::size_t i = seed.size(); i < r.tree.size(); ++i) EXPECT_GE(r.tree.depth(i), 3) << r.tree.name(i);
  for (const auto& rec : r.log) {
    if (rec.action == "go_down") EXPECT_FALSE(rec.at_leaf);
    if (rec.action == "add_sibling" || rec.action == "make_parent") EXPECT_GE(rec.depth, 2);
  }
  EXPECT_GT(r.outcomes.count("invalid"), 0u);
}

TEST(Incremental, ThousandInsertionsPreserveTheSeed) {
  auto gw = mock_gateway(std::make_shared<MockProvider>());
  const auto seed = load_seed();
  const auto r = flmsci_incremental_all(make_topics(1000, 5), seed, *gw);
  EXPECT_TRUE(contains_seed(r.tree, seed));
  EXPECT_EQ(r.calls, gw->ledger_report().of(Role::flmsci).calls);
  std::size_t total = 0;
  for (const auto& [k, v] : r.outcomes) total += v;
  EXPECT_EQ(total, 1000u);
  EXPECT_LE(r.tree.max_depth(), 14);
}

TEST(CostModel, PredictedCalls) {
  EXPECT_EQ(predicted_calls(CostMethod::scichic, 2000, 7.0, 100, {6, 40, 276}), 322u);
  EXPECT_EQ(predicted_calls(CostMethod::par, 22600, 7.1, 100), 226u);
  EXPECT_EQ(predicted_calls(CostMethod::inc, 10400, 7.1), 52000u);
  // Without a plan: ceil(100/3)=34, ceil(34/3)=12, ceil(12/3)=4, ceil(4/3)=2.
  EXPECT_EQ(predicted_calls(CostMethod::scichic, 100, 3.0), 34u + 12u + 4u + 2u);
  EXPECT_THROW(predicted_calls(CostMethod::par, 0, 2.0), InvalidArgument);
  EXPECT_THROW(predicted_calls(CostMethod::inc, 10, 1.0), InvalidArgument);
  EXPECT_EQ(parse_cost_method("inc"), CostMethod::inc);
}

TEST(Export, PapersAttachToEveryMatchingNode) {
  auto t = load_seed();
  t.add_child(index_of(t, "Physics"), "Optics");
  t.add_child(index_of(t, "Economics"), "optics");
  const auto h = topic_tree_to_hierarchy(t, {{"p1", {"Optics"}}, {"p2", {"Quantum Mechanics", "Nowhere"}}},
                                         {{"kind", "flmsci-inc"}});
  EXPECT_NO_THROW(h.validate());
  EXPECT_EQ(h.paper_locations().at("p1").size(), 2u);
  EXPECT_EQ(h.paper_locations().at("p2").size(), 1u);
  EXPECT_EQ(h.meta["kind"], "flmsci-inc");
  EXPECT_EQ(h.size(), t.size());
}
