#include "scihier/cli.hpp"

#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "scihier/corpus.hpp"
#include "scihier/embedding.hpp"
#include "scihier/evaluation.hpp"
#include "scihier/extraction.hpp"
#include "scihier/flmsci.hpp"
#include "scihier/hierarchy.hpp"
#include "scihier/providers.hpp"
#include "scihier/scichic.hpp"
#include "scihier/service.hpp"
#include "scihier/synthetic.hpp"

namespace scihier {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

struct GlobalFlags {
  std::uint64_t seed = 0;
  bool mock = false;
  std::string config;
};

ProviderSet providers_for(const GlobalFlags& g) {
  const ProviderConfig config = g.config.empty() ? ProviderConfig::mock_only() : ProviderConfig::load(g.config);
  return make_providers(config, g.mock);
}

/// "out/hierarchy.json" -> "out/hierarchy.ledger.json".
fs::path sidecar(const fs::path& output, const std::string& tag) {
  fs::path p = output;
  p.replace_extension("." + tag + ".json");
  return p;
}

void write_json(const fs::path& path, const ordered_json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw InvalidArgument("cannot write " + path.string());
  }
  fs::rename(tmp, path);
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

ContributionType type_from_flags(const std::string& kind, const std::string& dims) {
  const ContributionKind k = parse_kind(kind);
  if (dims.empty()) return ContributionType(k);
  std::vector<std::string> fields;
  for (const auto& part : split_whitespace(replace_all(dims, ",", " "))) fields.push_back(normalize_key(part));
  return ContributionType(k, fields);
}

std::vector<std::string> all_topics(const std::map<std::string, ContributionSet>& sets) {
  std::vector<std::string> topics;
  for (const auto& [id, set] : sets) topics.insert(topics.end(), set.topics.begin(), set.topics.end());
  return topics;
}

std::map<std::string, std::vector<std::string>> paper_topics(const std::map<std::string, ContributionSet>& sets) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [id, set] : sets) out[id] = set.topics;
  return out;
}

ordered_json quarantine_json(const std::vector<QuarantinedTopic>& q) {
  ordered_json a = ordered_json::array();
  for (const auto& t : q) a.push_back({{"topic", t.topic}, {"batch", t.batch}, {"reason", t.reason}});
  return a;
}

ordered_json conflicts_json(const std::vector<MergeConflict>& c) {
  ordered_json a = ordered_json::array();
  for (const auto& m : c)
    a.push_back({{"clone", m.clone}, {"name", m.name}, {"kept", m.kept_path}, {"dropped", m.dropped_path}});
  return a;
}

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Build, evaluate and serve multi-level concept hierarchies over a paper corpus.", "scihier"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags g;
  app.add_option("--seed", g.seed, "Seed for every stochastic step")->capture_default_str();
  app.add_flag("--mock", g.mock, "Serve every LLM role and the embedder with the deterministic offline mocks");
  app.add_option("--config", g.config, "Provider configuration file (JSON)")->check(CLI::ExistingFile);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Load or synthesize papers, filter them and optionally expand the corpus");
  std::string in_input, in_output, in_fixture;
  std::size_t in_synthetic = 0, in_per_keyword = 5;
  int in_reference_year = 2025;
  bool in_no_filter = false;
  auto* opt_input = ingest->add_option("--input", in_input, "Line-delimited paper records")->check(CLI::ExistingFile);
  auto* opt_syn = ingest->add_option("--synthetic", in_synthetic, "Generate this many synthetic papers instead");
  opt_input->excludes(opt_syn);
  ingest->add_option("-o,--output", in_output, "Output corpus (line-delimited JSON)")->required();
  ingest->add_flag("--no-filter", in_no_filter, "Keep every record");
  ingest->add_option("--reference-year", in_reference_year, "Year the citation threshold is anchored at")
      ->capture_default_str();
  ingest->add_option("--search-fixture", in_fixture,
                     "Expand the corpus from an offline search index: JSON object keyword -> [records]")
      ->check(CLI::ExistingFile);
  ingest->add_option("--per-keyword-limit", in_per_keyword, "Papers admitted per keyword during expansion")
      ->capture_default_str();

  // extract
  auto* extract = app.add_subcommand("extract", "Decompose every paper into its contribution set");
  std::string ex_corpus, ex_output, ex_variant = "detailed";
  extract->add_option("--corpus", ex_corpus, "Corpus file")->required()->check(CLI::ExistingFile);
  extract->add_option("-o,--output", ex_output, "Output contributions (line-delimited JSON)")->required();
  extract->add_option("--variant", ex_variant, "Prompt variant")->check(CLI::IsMember({"detailed", "simplified"}));

  // embed
  auto* embed = app.add_subcommand("embed", "Embed the selected dimensions of one contribution type");
  std::string em_input, em_output, em_type = "problem", em_dims, em_cache;
  embed->add_option("--contributions", em_input, "Contributions file")->required()->check(CLI::ExistingFile);
  embed->add_option("-o,--output", em_output, "Output vectors (line-delimited JSON)")->required();
  embed->add_option("--type", em_type, "Contribution type")->check(CLI::IsMember({"problem", "solution", "result", "topic"}));
  embed->add_option("--dims", em_dims, "Comma-separated selected dimensions (default: all fields of the type)");
  embed->add_option("--cache", em_cache, "Vector cache directory");

  // build
  auto* buildc = app.add_subcommand("build", "Construct a hierarchy from paper vectors");
  std::string bd_corpus, bd_vectors, bd_output, bd_layers, bd_mode = "hybrid", bd_type = "problem", bd_dims,
                                                           bd_variant = "detailed", bd_checkpoint, bd_cache;
  std::size_t bd_members = 10;
  buildc->add_option("--corpus", bd_corpus, "Corpus file")->required()->check(CLI::ExistingFile);
  buildc->add_option("--vectors", bd_vectors, "Vectors file from `embed`")->required()->check(CLI::ExistingFile);
  buildc->add_option("-o,--output", bd_output, "Output hierarchy JSON")->required();
  buildc->add_option("--layers", bd_layers, "Layer plan k_1,...,k_L, e.g. 6,40,276")->required();
  buildc->add_option("--mode", bd_mode, "Construction mode")->check(CLI::IsMember({"hybrid", "topdown", "bottomup"}));
  buildc->add_option("--type", bd_type, "Contribution type")->check(CLI::IsMember({"problem", "solution", "result", "topic"}));
  buildc->add_option("--dims", bd_dims, "Comma-separated selected dimensions");
  buildc->add_option("--variant", bd_variant, "Summary prompt variant")->check(CLI::IsMember({"detailed", "simplified"}));
  buildc->add_option("--checkpoint", bd_checkpoint, "Summary checkpoint file; an interrupted build resumes from it");
  buildc->add_option("--cache", bd_cache, "Vector cache directory for summary embeddings");
  buildc->add_option("--max-prompt-members", bd_members, "Members shown to the summarizer per cluster (0 = all)")
      ->capture_default_str();

  // flmsci
  auto* flm = app.add_subcommand("flmsci", "Grow the seed science taxonomy with the LLM-only baselines");
  std::string fl_input, fl_output, fl_method = "par";
  std::size_t fl_batch = 100, fl_workers = 4, fl_max_topics = 0;
  flm->add_option("--contributions", fl_input, "Contributions file (its topics are inserted)")
      ->required()
      ->check(CLI::ExistingFile);
  flm->add_option("-o,--output", fl_output, "Output hierarchy JSON")->required();
  flm->add_option("--method", fl_method, "par (batched clone-and-merge) or inc (per-topic editing)")
      ->check(CLI::IsMember({"par", "inc"}));
  flm->add_option("--batch", fl_batch, "Topics per batch (par)")->capture_default_str();
  flm->add_option("--workers", fl_workers, "Concurrent batches (par)")->capture_default_str();
  flm->add_option("--max-topics", fl_max_topics, "Insert only the first N unique topics (0 = all)");

  // eval
  auto* evalc = app.add_subcommand("eval", "Measure judge-guided traversal accuracy");
  std::string ev_hier, ev_corpus, ev_output, ev_traces, ev_judge = "oracle";
  std::size_t ev_runs = 5, ev_queries = 100;
  evalc->add_option("--hierarchy", ev_hier, "Hierarchy JSON")->required()->check(CLI::ExistingFile);
  evalc->add_option("--corpus", ev_corpus, "Corpus file")->required()->check(CLI::ExistingFile);
  evalc->add_option("-o,--output", ev_output, "Output report JSON")->required();
  evalc->add_option("--traces", ev_traces, "Also write every traversal (line-delimited JSON)");
  evalc->add_option("--judge", ev_judge, "Mock judge policy")->check(CLI::IsMember({"oracle", "random", "adversarial"}));
  evalc->add_option("--runs", ev_runs, "Independent query samples")->capture_default_str();
  evalc->add_option("--queries", ev_queries, "Queries per run")->capture_default_str();

  // stats
  auto* stats = app.add_subcommand("stats", "Print structural statistics of a hierarchy");
  std::string st_hier, st_corpus, st_output;
  double st_branching = 0.0;
  std::uint64_t st_contributions = 0, st_batch = 100;
  stats->add_option("--hierarchy", st_hier, "Hierarchy JSON")->required()->check(CLI::ExistingFile);
  stats->add_option("--corpus", st_corpus, "Corpus file; adds the citation-coherence diagnostic")
      ->check(CLI::ExistingFile);
  stats->add_option("-o,--output", st_output, "Also write the statistics here");
  stats->add_option("--contributions", st_contributions,
                    "Contribution count for call predictions (default: papers in the hierarchy)");
  stats->add_option("--branching", st_branching, "Branching factor for call predictions (default: measured)");
  stats->add_option("--batch", st_batch, "Parallel-baseline batch size for call predictions")->capture_default_str();

  // serve
  auto* serve = app.add_subcommand("serve", "Serve hierarchies over a read-only HTTP/JSON API");
  std::vector<std::string> sv_hier;
  std::string sv_corpus, sv_ui, sv_host = "127.0.0.1";
  int sv_port = 8080;
  serve->add_option("--hierarchy", sv_hier, "Hierarchy JSON files (build id = file stem)")
      ->required()
      ->check(CLI::ExistingFile);
  serve->add_option("--corpus", sv_corpus, "Corpus file for titles, years and paper records")
      ->check(CLI::ExistingFile);
  serve->add_option("--ui-dir", sv_ui, "Explorer static assets served under /ui")->check(CLI::ExistingDirectory);
  serve->add_option("--host", sv_host, "Bind address")->capture_default_str();
  serve->add_option("--port", sv_port, "Port (0 picks a free one)")->capture_default_str();

  std::vector<const char*> argv{"scihier"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    // A config file is checked even by commands that make no LLM calls.
    if (!g.config.empty()) ProviderConfig::load(g.config);
    if (ingest->parsed()) {
      if (in_input.empty() && in_synthetic == 0) throw InvalidArgument("ingest needs --input or --synthetic N");
      Corpus raw = in_input.empty() ? synthetic_corpus(in_synthetic, g.seed) : load_corpus(in_input);
      ordered_json report;
      report["source"] = in_input.empty() ? "synthetic" : "file";
      report["input_papers"] = raw.size();
      Corpus kept = raw;
      FilterPolicy policy;
      policy.reference_year = in_reference_year;
      if (!in_no_filter) {
        auto f = filter_papers(raw, policy);
        report["filter"] = {{"reference_year", policy.reference_year},
                            {"rejected_citations", f.rejected_citations},
                            {"rejected_abstract", f.rejected_abstract},
                            {"rejected_venue", f.rejected_venue},
                            {"rejected_total", f.rejected_total}};
        kept = std::move(f.kept);
      }
      if (!in_fixture.empty()) {
        std::ifstream fin(in_fixture);
        const auto fixture = nlohmann::json::parse(fin);
        MockSearchClient client;
        for (auto it = fixture.begin(); it != fixture.end(); ++it) {
          std::vector<PaperRecord> records;
          for (const auto& r : it.value()) records.push_back(paper_from_json(r));
          client.set_results(it.key(), std::move(records));
        }
        auto set = providers_for(g);
        ExpandOptions eo;
        eo.per_keyword_limit = in_per_keyword;
        eo.policy = policy;
        auto ex = expand_corpus(kept, client, llm_keyword_provider(*set.gateway), eo);
        ordered_json failures = ordered_json::array();
        for (const auto& f : ex.failures)
          failures.push_back({{"seed_id", f.seed_id}, {"keyword", f.keyword}, {"message", f.message}});
        report["expansion"] = {{"admitted", ex.admitted}, {"search_requests", client.requests()}, {"failures", failures}};
        report["ledger"] = set.gateway->ledger_report().to_json();
        kept = std::move(ex.corpus);
      }
      report["papers"] = kept.size();
      ensure_parent(in_output);
      save_corpus(kept, in_output);
      write_json(sidecar(in_output, "report"), report);
      out << "ingest: " << kept.size() << " papers -> " << in_output << "\n";
      return 0;
    }

    if (extract->parsed()) {
      const Corpus corpus = load_corpus(ex_corpus);
      auto set = providers_for(g);
      auto batch = extract_all(corpus, *set.gateway, parse_variant(ex_variant), set.gateway->options().max_in_flight);
      ensure_parent(ex_output);
      save_contributions(batch.sets, ex_output);
      ordered_json failures = ordered_json::array();
      for (const auto& f : batch.failures) failures.push_back({{"paper_id", f.paper_id}, {"message", f.message}});
      ordered_json report;
      report["papers"] = corpus.size();
      report["extracted"] = batch.sets.size();
      report["variant"] = ex_variant;
      report["schema_retries"] = batch.schema_retries;
      report["failures"] = failures;
      report["ledger"] = set.gateway->ledger_report().to_json();
      write_json(sidecar(ex_output, "ledger"), report);
      out << "extract: " << batch.sets.size() << "/" << corpus.size() << " papers -> " << ex_output << "\n";
      if (!batch.failures.empty()) {
        err << "extract: " << batch.failures.size() << " papers failed (see " << sidecar(ex_output, "ledger").string()
            << ")\n";
        return 1;
      }
      return 0;
    }

    if (embed->parsed()) {
      const auto sets = load_contributions(em_input);
      const ContributionType type = type_from_flags(em_type, em_dims);
      auto set = providers_for(g);
      VectorCache cache;
      if (!em_cache.empty() && fs::exists(em_cache)) cache.load(em_cache);
      const auto vectors = embed_papers(sets, type, *set.embedder, cache);
      if (!em_cache.empty()) cache.save(em_cache);
      ensure_parent(em_output);
      save_vectors(vectors, type, em_output);
      out << "embed: " << vectors.size() << " papers x " << type.dimensions().size() << " dimensions -> " << em_output
          << "\n";
      return 0;
    }

    if (buildc->parsed()) {
      const Corpus corpus = load_corpus(bd_corpus);
      const auto vectors = load_vectors(bd_vectors);
      BuildConfig config;
      config.mode = parse_mode(bd_mode);
      config.type = type_from_flags(bd_type, bd_dims);
      config.layers = parse_layer_plan(bd_layers);
      config.seed = g.seed;
      config.variant = parse_variant(bd_variant);
      config.validate(corpus.size());
      auto set = providers_for(g);
      VectorCache cache;
      if (!bd_cache.empty() && fs::exists(bd_cache)) cache.load(bd_cache);
      KMeansClusterer clusterer;
      BuildContext ctx{*set.gateway, *set.embedder, cache, clusterer, 8, 10, std::nullopt, {}};
      ctx.max_in_flight = set.gateway->options().max_in_flight;
      ctx.max_prompt_members = bd_members;
      if (!bd_checkpoint.empty()) ctx.checkpoint = bd_checkpoint;
      BuildReport br;
      const Hierarchy h = build(corpus, vectors, config, ctx, &br);
      if (!bd_cache.empty()) cache.save(bd_cache);
      ensure_parent(bd_output);
      save_hierarchy(h, bd_output);
      const auto ts = tree_stats(h);
      ordered_json report;
      report["config"] = config.to_json();
      report["summarizer_calls"] = br.summarizer_calls;
      report["summaries_reused"] = br.summaries_reused;
      report["schema_retries"] = br.schema_retries;
      report["stats"] = ts.to_json();
      report["ledger"] = set.gateway->ledger_report().to_json();
      write_json(sidecar(bd_output, "ledger"), report);
      out << "build: " << ts.node_count << " nodes, depth " << ts.depth << ", "
          << set.gateway->ledger_report().of(Role::summarizer).calls << " summarizer calls -> " << bd_output << "\n";
      return 0;
    }

    if (flm->parsed()) {
      const auto sets = load_contributions(fl_input);
      auto topics = unique_topics(all_topics(sets));
      if (fl_max_topics && topics.size() > fl_max_topics) topics.resize(fl_max_topics);
      auto set = providers_for(g);
      const TopicTree seed = load_seed();
      ordered_json report;
      report["method"] = fl_method;
      report["topics"] = topics.size();
      TopicTree tree;
      if (fl_method == "par") {
        ParallelOptions po;
        po.batch_size = fl_batch;
        po.workers = fl_workers;
        auto r = flmsci_parallel(topics, seed, *set.gateway, po);
        report["batch_size"] = fl_batch;
        report["batches"] = r.batches;
        report["retried_batches"] = r.retried_batches;
        report["quarantine"] = quarantine_json(r.quarantine);
        report["conflicts"] = conflicts_json(r.conflicts);
        tree = std::move(r.tree);
      } else {
        auto r = flmsci_incremental_all(topics, seed, *set.gateway);
        report["outcomes"] = r.outcomes;
        tree = std::move(r.tree);
      }
      report["seed_preserved"] = contains_seed(tree, seed);
      report["tree_nodes"] = tree.size();
      report["tree_depth"] = tree.max_depth();
      ordered_json meta;
      meta["kind"] = "flmsci-" + fl_method;
      meta["contribution_type"] = "topic";
      const Hierarchy h = topic_tree_to_hierarchy(tree, paper_topics(sets), meta);
      ensure_parent(fl_output);
      save_hierarchy(h, fl_output);
      report["ledger"] = set.gateway->ledger_report().to_json();
      write_json(sidecar(fl_output, "ledger"), report);
      out << "flmsci " << fl_method << ": " << tree.size() << " topics in tree, "
          << set.gateway->ledger_report().of(Role::flmsci).calls << " calls -> " << fl_output << "\n";
      return 0;
    }

    if (evalc->parsed()) {
      const Hierarchy h = load_hierarchy(ev_hier);
      const Corpus corpus = load_corpus(ev_corpus);
      auto set = providers_for(g);
      set.mock->set_judge_policy(parse_judge_policy(ev_judge), g.seed);
      EvalOptions eo;
      eo.runs = ev_runs;
      eo.queries_per_run = ev_queries;
      eo.seed = g.seed;
      eo.max_in_flight = set.gateway->options().max_in_flight;
      eo.judge_name = ev_judge;
      const EvalReport r = evaluate(h, corpus, *set.gateway, eo);
      ordered_json report = r.to_json();
      report["ledger"] = set.gateway->ledger_report().to_json();
      write_json(ev_output, report);
      if (!ev_traces.empty()) {
        ensure_parent(ev_traces);
        save_traces(r.traces, ev_traces);
      }
      out << "eval (" << ev_judge << "): strict " << r.strict_acc.mean << "% +- " << r.strict_acc.std << ", L1 "
          << r.l1_acc.mean << "% +- " << r.l1_acc.std << " -> " << ev_output << "\n";
      return 0;
    }

    if (stats->parsed()) {
      const Hierarchy h = load_hierarchy(st_hier);
      const auto ts = tree_stats(h);
      ordered_json j;
      j["stats"] = ts.to_json();
      if (!st_corpus.empty()) j["citation_coherence"] = citation_coherence(load_corpus(st_corpus), h).to_json();
      const std::uint64_t C = st_contributions ? st_contributions : ts.paper_count;
      const double b = st_branching > 0 ? st_branching : ts.avg_branching_with_papers;
      if (C > 0 && b > 1.0) {
        std::vector<std::size_t> plan(ts.layer_widths.begin(), ts.layer_widths.end());
        j["predicted_calls"] = {{"contributions", C},
                                {"branching", b},
                                {"batch", st_batch},
                                {"scichic", predicted_calls(CostMethod::scichic, C, b, st_batch, plan)},
                                {"par", predicted_calls(CostMethod::par, C, b, st_batch)},
                                {"inc", predicted_calls(CostMethod::inc, C, b, st_batch)}};
      }
      if (!st_output.empty()) write_json(st_output, j);
      out << j.dump(2) << "\n";
      return 0;
    }

    if (serve->parsed()) {
      std::vector<ServiceBuild> builds;
      for (const auto& f : sv_hier) builds.push_back({build_id_from_path(f), load_hierarchy(f)});
      std::optional<Corpus> corpus;
      if (!sv_corpus.empty()) corpus = load_corpus(sv_corpus);
      std::optional<fs::path> ui;
      if (!sv_ui.empty()) ui = sv_ui;
      const HierarchyService service(std::move(builds), std::move(corpus), ui);
      HttpServer server(service);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      int port = sv_port;
      if (port == 0) {
        port = server.bind_any(sv_host);
        if (port < 0) throw InvalidArgument("cannot bind " + sv_host);
      }
      out << "serving " << service.builds().size() << " hierarchies on http://" << sv_host << ":" << port << "/\n"
          << std::flush;
      const bool ok = sv_port == 0 ? server.listen_after_bind() : server.listen(sv_host, port);
      g_server = nullptr;
      if (!ok) throw InvalidArgument("cannot listen on " + sv_host + ":" + std::to_string(port));
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << "error: no command given\n";
  return 2;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace scihier
