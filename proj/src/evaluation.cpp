#include "scihier/evaluation.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "scihier/prompts.hpp"

namespace scihier {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json TraversalTrace::to_json() const {
  ordered_json j;
  j["query_id"] = query_id;
  j["run"] = run;
  j["path"] = path;
  j["terminal"] = terminal;
  j["found"] = found;
  j["level1_correct"] = level1_correct;
  j["decisions"] = decisions;
  j["judge_calls"] = judge_calls;
  j["reason"] = reason;
  return j;
}

std::optional<std::size_t> parse_option_number(std::string_view answer, std::size_t count) {
  const std::string t = trim(answer);
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
  if (v < 1 || v > count) return std::nullopt;
  return v;
}

namespace {

struct Option {
  bool is_paper = false;
  std::string id;
};

std::string describe_option(const Option& o, std::size_t number, const Hierarchy& h, const Corpus* corpus) {
  std::string out = std::to_string(number) + ". ";
  if (o.is_paper) {
    const auto* p = corpus ? corpus->find(o.id) : nullptr;
    out += "[Paper] " + (p ? p->title : o.id);
    return out;
  }
  const auto& n = h.node(o.id);
  out += "[Cluster] " + n.cluster_name;
  for (auto it = n.summary.begin(); it != n.summary.end(); ++it)
    if (it.value().is_string() && !it.value().get<std::string>().empty())
      out += "\n   " + replace_all(it.key(), "_", " ") + ": " + it.value().get<std::string>();
  return out;
}

}  // namespace

TraversalTrace traverse(const Query& query, const Hierarchy& h, Gateway& judge, const Corpus* corpus,
                        const TraverseOptions& options) {
  TraversalTrace trace;
  trace.query_id = query.target_id;
  trace.run = options.run;
  // Nodes on a path from the root to any location of the target.
  std::set<std::string> toward;
  for (const auto& n : h.nodes())
    if (std::find(n.paper_ids.begin(), n.paper_ids.end(), query.target_id) != n.paper_ids.end())
      for (const auto& id : h.path_to(n.id)) toward.insert(id);

  const std::string tmpl(embedded_asset("prompts/judge.txt"));
  std::string cur = h.root().id;
  trace.path.push_back(cur);
  trace.terminal = cur;
  int reprompts_left = options.reprompt_budget;
  bool on_track = toward.count(cur) > 0;
  if (!on_track) trace.reason = "target not in hierarchy";

  for (;;) {
    const auto& node = h.node(cur);
    std::vector<Option> opts;
    for (const auto& c : node.children) opts.push_back({false, c});
    for (const auto& p : node.paper_ids) opts.push_back({true, p});
    if (opts.empty()) {
      if (trace.reason.empty()) trace.reason = "no options below " + cur;
      return trace;
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < opts.size() && !correct; ++i)
      if (opts[i].is_paper ? opts[i].id == query.target_id : toward.count(opts[i].id) > 0) correct = i + 1;

    std::vector<std::string> crumbs;
    for (const auto& id : trace.path) crumbs.push_back(h.node(id).cluster_name);
    std::string listing;
    for (std::size_t i = 0; i < opts.size(); ++i) listing += describe_option(opts[i], i + 1, h, corpus) + "\n";
    const std::string prompt = render_template(tmpl, {{"title", query.title},
                                                      {"abstract", query.abstract},
                                                      {"path", join(crumbs, " -> ")},
                                                      {"options", listing},
                                                      {"count", std::to_string(opts.size())}});
    ChatParams params;
    params.seed = combine_seed(combine_seed(options.seed, options.run),
                               fnv1a64(query.target_id + "#" + std::to_string(trace.decisions)));
    const json meta = {{"kind", "judge"}, {"num_options", opts.size()}, {"correct", correct}};

    std::optional<std::size_t> choice;
    std::string p = prompt;
    for (;;) {
      ++trace.judge_calls;
      std::string answer;
      try {
        answer = judge.chat(Role::judge, p, params, meta);
      } catch (const Error& e) {
        trace.reason = std::string("judge failed: ") + e.what();
        return trace;
      }
      choice = parse_option_number(answer, opts.size());
      if (choice) break;
      if (reprompts_left-- <= 0) {
        trace.reason = "invalid judge answer \"" + trim(answer).substr(0, 80) + "\"";
        return trace;
      }
      p = prompt + "\n\nYour previous answer \"" + trim(answer).substr(0, 80) +
          "\" was not a valid option. Answer with a single integer between 1 and " + std::to_string(opts.size()) +
          ".";
    }
    ++trace.decisions;
    const Option& chosen = opts[*choice - 1];
    // With several routes to the target (papers attached in several places)
    // any option leading towards it counts as correct.
    const bool leads = on_track && (chosen.is_paper ? chosen.id == query.target_id : toward.count(chosen.id) > 0);
    if (trace.decisions == 1) trace.level1_correct = leads;
    trace.terminal = chosen.id;
    if (chosen.is_paper) {
      trace.found = chosen.id == query.target_id;
      if (!trace.found) trace.reason = "selected a different paper";
      return trace;
    }
    trace.path.push_back(chosen.id);
    cur = chosen.id;
    if (!leads) {
      if (trace.reason.empty()) trace.reason = "left the target's subtree at " + cur;
      return trace;
    }
  }
}

MetricSummary summarize_metric(const std::vector<double>& per_run) {
  MetricSummary m;
  m.per_run = per_run;
  if (per_run.empty()) return m;
  double s = 0.0;
  for (double v : per_run) s += v;
  m.mean = s / double(per_run.size());
  double var = 0.0;
  for (double v : per_run) var += (v - m.mean) * (v - m.mean);
  m.std = std::sqrt(var / double(per_run.size()));
  return m;
}

namespace {

ordered_json metric_json(const MetricSummary& m) {
  ordered_json j;
  j["mean"] = m.mean;
  j["std"] = m.std;
  j["per_run"] = m.per_run;
  return j;
}

}  // namespace

ordered_json EvalReport::to_json() const {
  ordered_json j;
  j["judge"] = judge;
  j["runs"] = runs;
  j["queries_per_run"] = queries_per_run;
  j["query_sampling"] = "resampled per run";
  j["std_kind"] = "population";
  j["strict_acc"] = metric_json(strict_acc);
  j["l1_acc"] = metric_json(l1_acc);
  j["judge_calls"] = judge_calls;
  j["invalid_answers"] = invalid_answers;
  j["input_tokens"] = input_tokens;
  j["output_tokens"] = output_tokens;
  j["tokens_approximate"] = tokens_approximate;
  return j;
}

EvalReport evaluate(const Hierarchy& h, const Corpus& corpus, Gateway& judge, const EvalOptions& options) {
  if (options.runs == 0) throw InvalidArgument("runs must be >= 1");
  const std::size_t n = options.queries_per_run;
  if (n == 0 || n > corpus.size())
    throw InvalidArgument("queries_per_run must be in [1, " + std::to_string(corpus.size()) + "]");
  EvalReport report;
  report.runs = options.runs;
  report.queries_per_run = n;
  report.judge = options.judge_name;
  const auto before = judge.ledger_report();
  std::vector<double> strict, l1;
  for (std::size_t r = 0; r < options.runs; ++r) {
    const auto queries = sample_queries(corpus, n, combine_seed(options.seed, 0x9E3779B9ULL + r));
    std::vector<TraversalTrace> traces(queries.size());
    TraverseOptions topt;
    topt.seed = options.seed;
    topt.run = r;
    parallel_for(queries.size(), options.max_in_flight,
                 [&](std::size_t i) { traces[i] = traverse(queries[i], h, judge, &corpus, topt); });
    std::size_t found = 0, first = 0;
    for (auto& t : traces) {
      found += t.found;
      first += t.level1_correct;
      report.judge_calls += t.judge_calls;
      report.invalid_answers += t.judge_calls - t.decisions;
      report.traces.push_back(std::move(t));
    }
    strict.push_back(100.0 * double(found) / double(n));
    l1.push_back(100.0 * double(first) / double(n));
  }
  report.strict_acc = summarize_metric(strict);
  report.l1_acc = summarize_metric(l1);
  const auto after = judge.ledger_report();
  report.input_tokens = after.of(Role::judge).input_tokens - before.of(Role::judge).input_tokens;
  report.output_tokens = after.of(Role::judge).output_tokens - before.of(Role::judge).output_tokens;
  report.tokens_approximate = after.tokens_approximate;
  return report;
}

void save_traces(const std::vector<TraversalTrace>& traces, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& t : traces) out << t.to_json().dump() << '\n';
}

ordered_json CitationCoherence::to_json() const {
  ordered_json j;
  j["intra"] = intra;
  j["inter"] = inter;
  j["ratio"] = ratio ? ordered_json(*ratio) : ordered_json(nullptr);
  return j;
}

CitationCoherence citation_coherence(const Corpus& corpus, const Hierarchy& h) {
  // Paper -> top-level cluster of its first location.
  std::map<std::string, std::string> top;
  for (const auto& [paper, nodes] : h.paper_locations()) {
    const auto path = h.path_to(nodes.front());
    top[paper] = path.size() > 1 ? path[1] : path[0];
  }
  CitationCoherence c;
  for (const auto& p : corpus) {
    auto from = top.find(p.id);
    if (from == top.end()) continue;
    for (const auto& cited : p.outbound_citations) {
      if (!corpus.contains(cited)) continue;
      auto to = top.find(cited);
      if (to == top.end()) continue;
      if (from->second == to->second)
        ++c.intra;
      else
        ++c.inter;
    }
  }
  if (c.intra + c.inter) c.ratio = double(c.intra) / double(c.intra + c.inter);
  return c;
}

double judge_agreement(const std::vector<TraversalTrace>& a, const std::vector<TraversalTrace>& b) {
  auto index = [](const std::vector<TraversalTrace>& traces) {
    std::map<std::pair<std::size_t, std::string>, const TraversalTrace*> m;
    for (const auto& t : traces)
      if (!m.emplace(std::make_pair(t.run, t.query_id), &t).second)
        throw InvalidArgument("duplicate trace for query " + t.query_id);
    return m;
  };
  const auto ia = index(a), ib = index(b);
  if (ia.empty()) throw InvalidArgument("no traces to compare");
  if (ia.size() != ib.size()) throw InvalidArgument("trace sets cover different queries");
  std::size_t same = 0;
  for (const auto& [key, t] : ia) {
    auto it = ib.find(key);
    if (it == ib.end()) throw InvalidArgument("query " + key.second + " missing from the second trace set");
    same += t->terminal == it->second->terminal;
  }
  return 100.0 * double(same) / double(ia.size());
}

Hierarchy read_two_layer_hierarchy(std::istream& in) {
  struct Group {
    std::string name;
    std::vector<std::pair<std::string, std::vector<std::string>>> subgroups;
  };
  std::vector<Group> groups;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::string paper, l1, l2;
    try {
      const json j = json::parse(line);
      paper = j.at("paper_id").get<std::string>();
      l1 = trim(j.at("level1").get<std::string>());
      l2 = trim(j.at("level2").get<std::string>());
    } catch (const json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
    if (l1.empty() || l2.empty()) throw ParseError("empty level label", line_no);
    if (!seen.insert(paper).second) throw DuplicateIdError(paper);
    auto g = std::find_if(groups.begin(), groups.end(), [&](const Group& x) { return x.name == l1; });
    if (g == groups.end()) g = groups.insert(groups.end(), Group{l1, {}});
    auto s = std::find_if(g->subgroups.begin(), g->subgroups.end(), [&](const auto& x) { return x.first == l2; });
    if (s == g->subgroups.end()) s = g->subgroups.insert(g->subgroups.end(), {l2, {}});
    s->second.push_back(paper);
  }
  if (groups.empty()) throw ParseError("no annotated papers");
  Hierarchy h;
  h.add_node({"L0-0", 0, "All papers", ordered_json::object(), "", {}, {}});
  std::size_t l2_ordinal = 0;
  for (std::size_t i = 0; i < groups.size(); ++i)
    h.add_node({"L1-" + std::to_string(i), 1, groups[i].name, ordered_json::object(), "L0-0", {}, {}});
  for (std::size_t i = 0; i < groups.size(); ++i)
    for (const auto& [name, papers] : groups[i].subgroups)
      h.add_node({"L2-" + std::to_string(l2_ordinal++), 2, name, ordered_json::object(), "L1-" + std::to_string(i), {},
                  papers});
  h.meta["kind"] = "two_layer_import";
  h.meta["stats"] = tree_stats(h).to_json();
  return h;
}

Hierarchy load_two_layer_hierarchy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open " + path.string());
  return read_two_layer_hierarchy(in);
}

}  // namespace scihier
