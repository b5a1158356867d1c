#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scihier/corpus.hpp"
#include "scihier/gateway.hpp"
#include "scihier/hierarchy.hpp"

namespace scihier {

/// One judge-guided descent from the root towards a query's target paper.
struct TraversalTrace {
  std::string query_id;               // target paper id
  std::size_t run = 0;
  std::vector<std::string> path;      // node ids visited, starting at the root
  std::string terminal;               // final selection: a paper id, or the last node reached
  bool found = false;                 // terminal == target
  bool level1_correct = false;        // first choice leads towards the target
  std::size_t decisions = 0;          // answered judge prompts
  std::size_t judge_calls = 0;        // including re-prompts
  std::string reason;                 // why the descent stopped early, if it did

  nlohmann::ordered_json to_json() const;
};

struct TraverseOptions {
  /// Sampling seed forwarded to the judge, so stochastic judges stay
  /// reproducible and independent across queries and runs.
  std::uint64_t seed = 0;
  std::size_t run = 0;
  int reprompt_budget = 1;
};

/// Descends from the root. At each node the options are its child clusters
/// followed by its attached papers; the judge answers with an option number.
/// A wrong choice ends the descent (the target is no longer reachable). An
/// unparsable answer gets one re-prompt, after which the trace is not-found.
/// `corpus` supplies titles for paper options (ids are shown without it).
TraversalTrace traverse(const Query& query, const Hierarchy& h, Gateway& judge, const Corpus* corpus = nullptr,
                        const TraverseOptions& options = {});

/// Strict option-number parse: the trimmed answer must be an integer in
/// [1, count].
std::optional<std::size_t> parse_option_number(std::string_view answer, std::size_t count);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over runs
  std::vector<double> per_run;
};

MetricSummary summarize_metric(const std::vector<double>& per_run);

struct EvalOptions {
  std::size_t runs = 5;
  std::size_t queries_per_run = 100;  // fresh sample each run
  std::uint64_t seed = 0;
  std::size_t max_in_flight = 8;
  std::string judge_name = "judge";
};

struct EvalReport {
  MetricSummary strict_acc;  // percent
  MetricSummary l1_acc;      // percent
  std::size_t runs = 0;
  std::size_t queries_per_run = 0;
  std::string judge;
  std::size_t judge_calls = 0;
  std::size_t invalid_answers = 0;
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;
  bool tokens_approximate = true;
  std::vector<TraversalTrace> traces;  // run-major, query order within a run

  nlohmann::ordered_json to_json() const;
};

/// Runs `runs` independent query samples through traverse(). Per-trace
/// failures are recorded in the trace and never abort the batch.
EvalReport evaluate(const Hierarchy& h, const Corpus& corpus, Gateway& judge, const EvalOptions& options = {});

/// Line-delimited traces, one per line.
void save_traces(const std::vector<TraversalTrace>& traces, const std::filesystem::path& path);

struct CitationCoherence {
  std::size_t intra = 0;
  std::size_t inter = 0;
  std::optional<double> ratio;  // intra / (intra + inter); empty without edges

  nlohmann::ordered_json to_json() const;
};

/// Classifies every citation whose endpoints both sit in the hierarchy by
/// whether they share a top-level (layer-1) cluster.
CitationCoherence citation_coherence(const Corpus& corpus, const Hierarchy& h);

/// Percentage of queries with identical terminal selections. Throws
/// InvalidArgument unless both lists cover the same (query, run) pairs.
double judge_agreement(const std::vector<TraversalTrace>& a, const std::vector<TraversalTrace>& b);

/// Two-layer hierarchy from externally annotated papers, one JSON object per
/// line: {"paper_id", "level1", "level2"}. Groups keep first-appearance order.
Hierarchy read_two_layer_hierarchy(std::istream& in);
Hierarchy load_two_layer_hierarchy(const std::filesystem::path& path);

}  // namespace scihier
