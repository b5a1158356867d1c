#include "scihier/scichic.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>

#include "scihier/json_text.hpp"
#include "scihier/prompts.hpp"

namespace scihier {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view mode_name(BuildMode mode) {
  switch (mode) {
    case BuildMode::hybrid: return "hybrid";
    case BuildMode::topdown: return "topdown";
    case BuildMode::bottomup: return "bottomup";
  }
  return "hybrid";
}

BuildMode parse_mode(std::string_view name) {
  if (name == "hybrid") return BuildMode::hybrid;
  if (name == "topdown" || name == "top-down") return BuildMode::topdown;
  if (name == "bottomup" || name == "bottom-up") return BuildMode::bottomup;
  throw InvalidArgument("unknown build mode \"" + std::string(name) + "\"");
}

std::size_t BuildConfig::top_down_layers() const noexcept {
  switch (mode) {
    case BuildMode::hybrid: return layers.size() / 2;
    case BuildMode::topdown: return layers.size();
    case BuildMode::bottomup: return 0;
  }
  return 0;
}

void BuildConfig::validate(std::size_t corpus_size) const {
  if (layers.empty()) throw InvalidArgument("layer plan must name at least one layer");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i] == 0) throw InvalidArgument("layer sizes must be >= 1");
    if (i > 0 && layers[i] <= layers[i - 1])
      throw InvalidArgument("layer sizes must be strictly increasing");
  }
  if (layers.back() > corpus_size)
    throw InvalidArgument("leaf layer size " + std::to_string(layers.back()) + " exceeds the " +
                          std::to_string(corpus_size) + " papers");
}

ordered_json BuildConfig::to_json() const {
  ordered_json j;
  j["mode"] = mode_name(mode);
  j["contribution_type"] = kind_name(type.kind());
  j["dimensions"] = type.dimensions();
  j["layers"] = layers;
  j["top_down_layers"] = top_down_layers();
  j["seed"] = seed;
  j["prompt_variant"] = variant_name(variant);
  return j;
}

std::vector<std::size_t> parse_layer_plan(std::string_view text) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string part = trim(text.substr(start, end - start));
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc() || ptr != part.data() + part.size())
      throw InvalidArgument("malformed layer plan \"" + std::string(text) + "\"");
    out.push_back(v);
    start = end + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Summaries

std::string ClusterSummary::embedding_text() const {
  std::string out = cluster_name;
  for (const auto& [k, v] : body) out += "\n" + v;
  return out;
}

namespace {

std::string display_field(const std::string& field) { return replace_all(field, "_", " "); }

}  // namespace

std::string ClusterSummary::member_text(ContributionKind kind) const {
  std::string out = "Cluster Name: " + cluster_name + "\n" + std::string(kind_label(kind)) + ":";
  for (const auto& [k, v] : body) out += "\n- " + display_field(k) + ": " + v;
  return out;
}

ordered_json ClusterSummary::body_json() const {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : body) j[k] = v;
  return j;
}

ClusterSummary parse_cluster_summary(std::string_view text, ContributionKind kind) {
  const json doc = parse_json_payload(text);
  if (!doc.is_object()) throw SchemaError("cluster summary must be a JSON object");
  const std::string label = normalize_key(kind_label(kind));
  const json* name = nullptr;
  const json* body = nullptr;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const auto norm = normalize_key(it.key());
    if (norm == "cluster_name" && !name)
      name = &it.value();
    else if (norm == label && !body)
      body = &it.value();
    else
      throw SchemaError("unknown key \"" + it.key() + "\" in cluster summary", it.key());
  }
  if (!name) throw SchemaError("missing key \"Cluster Name\"", "Cluster Name");
  if (!body) throw SchemaError("missing key \"" + std::string(kind_label(kind)) + "\"", std::string(kind_label(kind)));
  if (!name->is_string()) throw SchemaError("\"Cluster Name\" must be a string", "Cluster Name");
  ClusterSummary s;
  // Collapse internal whitespace but keep the model's casing.
  s.cluster_name = join(split_whitespace(name->get<std::string>()), " ");
  const auto words = split_whitespace(s.cluster_name).size();
  if (words < kMinClusterNameWords)
    throw SchemaError("cluster name \"" + s.cluster_name + "\" has " + std::to_string(words) +
                          " words; at least " + std::to_string(kMinClusterNameWords) + " are required",
                      "Cluster Name");
  if (!body->is_object())
    throw SchemaError("\"" + std::string(kind_label(kind)) + "\" must be a JSON object", std::string(kind_label(kind)));
  std::map<std::string, const json*> fields;
  const auto& schema = schema_fields(kind);
  for (auto it = body->begin(); it != body->end(); ++it) {
    const auto norm = normalize_key(it.key());
    if (std::find(schema.begin(), schema.end(), norm) == schema.end() || fields.count(norm))
      throw SchemaError("unknown key \"" + it.key() + "\" in cluster summary body", it.key());
    fields[norm] = &it.value();
  }
  for (const auto& f : schema) {
    auto it = fields.find(f);
    if (it == fields.end()) throw SchemaError("missing key \"" + f + "\" in cluster summary body", f);
    const json& v = *it->second;
    std::string value;
    if (v.is_string()) {
      value = trim(v.get<std::string>());
    } else if (v.is_array()) {
      std::vector<std::string> parts;
      for (const auto& e : v) {
        if (!e.is_string()) throw SchemaError("field \"" + f + "\" must be text", f);
        parts.push_back(trim(e.get<std::string>()));
      }
      value = join(parts, "; ");
    } else if (!v.is_null()) {
      throw SchemaError("field \"" + f + "\" must be text", f);
    }
    s.body.emplace_back(f, std::move(value));
  }
  return s;
}

std::string paper_payload(const PaperRecord& paper) {
  return "Title: " + paper.title + "\nAbstract: " + paper.abstract;
}

namespace {

struct SummaryRequest {
  std::string prompt;
  json meta;
};

SummaryRequest summary_request(const std::vector<std::string>& members, const ContributionType& type, int layer,
                               PromptVariant variant) {
  if (members.empty()) throw InvalidArgument("cannot summarize an empty cluster");
  const std::string asset = "prompts/summarize_" + std::string(kind_name(type.kind())) + "_" +
                            std::string(variant_name(variant)) + ".txt";
  std::string content;
  for (std::size_t i = 0; i < members.size(); ++i)
    content += "\n\n[Item " + std::to_string(i + 1) + "]\n" + members[i];
  SummaryRequest r;
  r.prompt = render_template(embedded_asset(asset), {{"content", content}});
  r.meta = {{"kind", "cluster_summary"},
            {"label", kind_label(type.kind())},
            {"fields", schema_fields(type.kind())},
            {"members", members},
            {"layer", layer}};
  return r;
}

ClusterSummary run_summary(const SummaryRequest& r, ContributionKind kind, Gateway& gateway,
                           SummaryCallStats* stats) {
  ChatParams params;
  params.temperature = 0.0;
  const std::string first = gateway.chat(Role::summarizer, r.prompt, params, r.meta);
  try {
    return parse_cluster_summary(first, kind);
  } catch (const Error& e) {
    if (!dynamic_cast<const SchemaError*>(&e) && !dynamic_cast<const ParseError*>(&e)) throw;
    if (stats) ++stats->schema_retries;
    const std::string repair =
        r.prompt + "\n\n" + render_template(embedded_asset("prompts/json_reminder.txt"), {{"error", e.what()}});
    const std::string second = gateway.chat(Role::summarizer, repair, params, r.meta);
    try {
      return parse_cluster_summary(second, kind);
    } catch (const SchemaError& e2) {
      throw SchemaError("cluster summary invalid after 1 retry: " + std::string(e2.what()), e2.key());
    } catch (const ParseError& e2) {
      throw ParseError("cluster summary unparsable after 1 retry: " + std::string(e2.what()));
    }
  }
}

}  // namespace

ClusterSummary summarize_cluster(const std::vector<std::string>& member_payloads, const ContributionType& type,
                                 int layer, Gateway& gateway, PromptVariant variant, SummaryCallStats* stats) {
  return run_summary(summary_request(member_payloads, type, layer, variant), type.kind(), gateway, stats);
}

// ---------------------------------------------------------------------------
// Checkpoint store

std::optional<ClusterSummary> SummaryStore::get(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void SummaryStore::put(const std::string& key, ClusterSummary summary) {
  std::lock_guard lock(mutex_);
  entries_[key] = std::move(summary);
}

std::size_t SummaryStore::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

void SummaryStore::save(const std::filesystem::path& path) const {
  std::lock_guard lock(mutex_);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + tmp);
    for (const auto& [key, s] : entries_) {
      ordered_json j;
      j["key"] = key;
      j["cluster_name"] = s.cluster_name;
      j["body"] = ordered_json::array();
      for (const auto& [k, v] : s.body) j["body"].push_back({k, v});
      out << j.dump() << '\n';
    }
  }
  std::filesystem::rename(tmp, path);
}

void SummaryStore::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open checkpoint " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::lock_guard lock(mutex_);
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      ClusterSummary s;
      s.cluster_name = j.at("cluster_name").get<std::string>();
      for (const auto& kv : j.at("body")) s.body.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
      entries_[j.at("key").get<std::string>()] = std::move(s);
    } catch (const json::exception& e) {
      throw ParseError(std::string("checkpoint: ") + e.what(), line_no);
    }
  }
}

// ---------------------------------------------------------------------------
// Construction

namespace {

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

struct Draft {
  int layer = 0;
  std::size_t parent = kNone;
  std::vector<std::size_t> children;  // draft indices, in cluster order
  std::vector<std::size_t> papers;    // corpus indices under this node, corpus order
  std::vector<std::size_t> prompt_members;  // papers or child drafts shown to the summarizer
  ClusterSummary summary;
  Vector summary_vector;
};

/// Indices of the members nearest their centroid, nearest first.
std::vector<std::size_t> nearest_members(const Matrix& points, const std::vector<std::size_t>& rows,
                                         std::span<const double> centroid, std::size_t limit) {
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) d.emplace_back(squared_distance(points.row(rows[i]), centroid), i);
  std::sort(d.begin(), d.end());
  if (limit && d.size() > limit) d.resize(limit);
  std::vector<std::size_t> out;
  for (const auto& [dist, i] : d) out.push_back(i);
  return out;
}

Matrix select_rows(const Matrix& all, const std::vector<std::size_t>& rows) {
  Matrix m;
  for (auto r : rows) m.push_row(all.row(r));
  return m;
}

std::uint64_t cluster_seed(std::uint64_t base, std::string_view phase, std::size_t layer, std::size_t ordinal) {
  return combine_seed(base, fnv1a64(std::string(phase) + "/" + std::to_string(layer) + "/" + std::to_string(ordinal)));
}

class Builder {
public:
  Builder(const Corpus& corpus, const BuildConfig& config, BuildContext& ctx, BuildReport& report)
      : corpus_(corpus), config_(config), ctx_(ctx), report_(report) {
    if (ctx_.checkpoint && std::filesystem::exists(*ctx_.checkpoint)) store_.load(*ctx_.checkpoint);
  }

  Hierarchy run(const Matrix& paper_points) {
    const std::size_t L = config_.depth();
    const std::size_t h = config_.top_down_layers();

    Draft root;
    root.papers.resize(corpus_.size());
    std::iota(root.papers.begin(), root.papers.end(), 0);
    drafts_.push_back(std::move(root));

    // Top-down: layers 1..h, each parent split in proportion to its papers.
    std::vector<std::size_t> frontier{0};
    for (std::size_t l = 1; l <= h; ++l) {
      std::vector<std::size_t> sizes;
      for (auto p : frontier) sizes.push_back(drafts_[p].papers.size());
      const auto alloc = allocate_subclusters(sizes, config_.layers[l - 1], sizes);
      std::vector<std::size_t> next;
      for (std::size_t i = 0; i < frontier.size(); ++i) {
        const std::size_t p = frontier[i];
        const auto rows = drafts_[p].papers;
        const auto res = ctx_.clusterer.cluster(select_rows(paper_points, rows), alloc[i],
                                                cluster_seed(config_.seed, "td", l, i));
        const std::size_t first = drafts_.size();
        for (std::size_t c = 0; c < alloc[i]; ++c) {
          Draft d;
          d.layer = static_cast<int>(l);
          d.parent = p;
          drafts_.push_back(std::move(d));
          drafts_[p].children.push_back(first + c);
          next.push_back(first + c);
        }
        for (std::size_t m = 0; m < rows.size(); ++m) drafts_[first + res.assignments[m]].papers.push_back(rows[m]);
        for (std::size_t c = 0; c < alloc[i]; ++c) {
          auto& d = drafts_[first + c];
          for (auto m : nearest_members(paper_points, d.papers, res.centroids.row(c), ctx_.max_prompt_members))
            d.prompt_members.push_back(d.papers[m]);
        }
      }
      summarize_layer(next, /*members_are_papers=*/true);
      frontier = std::move(next);
    }

    if (h < L) bottom_up(paper_points, frontier, h, L);
    return assemble();
  }

private:
  void bottom_up(const Matrix& paper_points, const std::vector<std::size_t>& groups, std::size_t h, std::size_t L) {
    // Per-group budgets, leaf layer first; each layer is capped by the one below.
    std::vector<std::size_t> sizes;
    for (auto g : groups) sizes.push_back(drafts_[g].papers.size());
    std::vector<std::vector<std::size_t>> budget(L + 1);
    budget[L] = allocate_subclusters(sizes, config_.layers[L - 1], sizes);
    for (std::size_t l = L - 1; l > h; --l) budget[l] = allocate_subclusters(sizes, config_.layers[l - 1], budget[l + 1]);

    // Leaf layer: cluster papers within each group.
    std::vector<std::vector<std::size_t>> level(groups.size());
    std::vector<std::size_t> layer_nodes;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto rows = drafts_[groups[g]].papers;
      const std::size_t k = budget[L][g];
      const auto res = ctx_.clusterer.cluster(select_rows(paper_points, rows), k, cluster_seed(config_.seed, "bu", L, g));
      const std::size_t first = drafts_.size();
      for (std::size_t c = 0; c < k; ++c) {
        Draft d;
        d.layer = static_cast<int>(L);
        drafts_.push_back(std::move(d));
        level[g].push_back(first + c);
        layer_nodes.push_back(first + c);
      }
      for (std::size_t m = 0; m < rows.size(); ++m) drafts_[first + res.assignments[m]].papers.push_back(rows[m]);
      for (std::size_t c = 0; c < k; ++c) {
        auto& d = drafts_[first + c];
        for (auto m : nearest_members(paper_points, d.papers, res.centroids.row(c), ctx_.max_prompt_members))
          d.prompt_members.push_back(d.papers[m]);
      }
    }
    summarize_layer(layer_nodes, true);
    if (L - 1 > h) embed_summaries(layer_nodes);

    // Upper layers: cluster the summaries of the layer below.
    for (std::size_t l = L - 1; l > h; --l) {
      layer_nodes.clear();
      for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& below = level[g];
        Matrix points;
        for (auto b : below) points.push_row(drafts_[b].summary_vector);
        const std::size_t k = budget[l][g];
        const auto res = ctx_.clusterer.cluster(points, k, cluster_seed(config_.seed, "bu", l, g));
        const std::size_t first = drafts_.size();
        std::vector<std::size_t> upper;
        for (std::size_t c = 0; c < k; ++c) {
          Draft d;
          d.layer = static_cast<int>(l);
          drafts_.push_back(std::move(d));
          upper.push_back(first + c);
          layer_nodes.push_back(first + c);
        }
        std::vector<std::vector<std::size_t>> local(k);
        for (std::size_t m = 0; m < below.size(); ++m) {
          auto& parent = drafts_[first + res.assignments[m]];
          parent.children.push_back(below[m]);
          drafts_[below[m]].parent = first + res.assignments[m];
          local[res.assignments[m]].push_back(m);
        }
        for (std::size_t c = 0; c < k; ++c) {
          auto& d = drafts_[first + c];
          for (auto ch : d.children) d.papers.insert(d.papers.end(), drafts_[ch].papers.begin(), drafts_[ch].papers.end());
          std::sort(d.papers.begin(), d.papers.end());
          for (auto m : nearest_members(points, local[c], res.centroids.row(c), ctx_.max_prompt_members))
            d.prompt_members.push_back(d.children[m]);
        }
        level[g] = std::move(upper);
      }
      summarize_layer(layer_nodes, false);
      if (l - 1 > h) embed_summaries(layer_nodes);
    }

    for (std::size_t g = 0; g < groups.size(); ++g)
      for (auto top : level[g]) {
        drafts_[groups[g]].children.push_back(top);
        drafts_[top].parent = groups[g];
      }
  }

  void summarize_layer(const std::vector<std::size_t>& nodes, bool members_are_papers) {
    std::vector<SummaryRequest> requests;
    requests.reserve(nodes.size());
    for (auto n : nodes) {
      const auto& d = drafts_[n];
      std::vector<std::string> payloads;
      for (auto m : d.prompt_members)
        payloads.push_back(members_are_papers ? paper_payload(corpus_[m])
                                              : drafts_[m].summary.member_text(config_.type.kind()));
      requests.push_back(summary_request(payloads, config_.type, d.layer, config_.variant));
    }
    std::vector<int> retries(nodes.size(), 0);
    std::vector<char> called(nodes.size(), 0);
    try {
      parallel_for(nodes.size(), ctx_.max_in_flight, [&](std::size_t i) {
        const std::string key = sha256_hex(requests[i].prompt);
        if (auto hit = store_.get(key)) {
          drafts_[nodes[i]].summary = std::move(*hit);
          return;
        }
        called[i] = 1;
        SummaryCallStats stats;
        try {
          drafts_[nodes[i]].summary = run_summary(requests[i], config_.type.kind(), ctx_.gateway, &stats);
        } catch (...) {
          retries[i] = stats.schema_retries;
          throw;
        }
        retries[i] = stats.schema_retries;
        store_.put(key, drafts_[nodes[i]].summary);
      });
    } catch (...) {
      tally(called, retries);
      if (ctx_.checkpoint) store_.save(*ctx_.checkpoint);
      throw;
    }
    tally(called, retries);
    if (ctx_.checkpoint) store_.save(*ctx_.checkpoint);
  }

  void tally(const std::vector<char>& called, const std::vector<int>& retries) {
    for (std::size_t i = 0; i < called.size(); ++i) {
      if (called[i])
        ++report_.summarizer_calls;
      else
        ++report_.summaries_reused;
      report_.schema_retries += retries[i];
    }
  }

  void embed_summaries(const std::vector<std::size_t>& nodes) {
    std::vector<std::string> texts;
    texts.reserve(nodes.size());
    for (auto n : nodes) texts.push_back(drafts_[n].summary.embedding_text());
    auto vecs = embed_texts(ctx_.embedder, texts, ctx_.cache, ctx_.embed_options);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      l2_normalize(vecs[i]);
      drafts_[nodes[i]].summary_vector = std::move(vecs[i]);
    }
  }

  Hierarchy assemble() {
    // Breadth-first numbering: (layer, parent order, cluster index).
    std::vector<std::size_t> order{0};
    for (std::size_t i = 0; i < order.size(); ++i)
      for (auto c : drafts_[order[i]].children) order.push_back(c);
    if (order.size() != drafts_.size()) throw Error("internal error: detached clusters during build");
    std::vector<std::string> ids(drafts_.size());
    std::map<int, std::size_t> ordinal;
    for (auto d : order) ids[d] = "L" + std::to_string(drafts_[d].layer) + "-" + std::to_string(ordinal[drafts_[d].layer]++);

    Hierarchy hier;
    const int leaf_layer = static_cast<int>(config_.depth());
    for (auto d : order) {
      const auto& draft = drafts_[d];
      HierarchyNode n;
      n.id = ids[d];
      n.layer = draft.layer;
      if (d == 0) {
        n.cluster_name = "All papers";
      } else {
        n.cluster_name = draft.summary.cluster_name;
        n.summary = draft.summary.body_json();
        n.parent = ids[draft.parent];
      }
      if (draft.layer == leaf_layer)
        for (auto p : draft.papers) n.paper_ids.push_back(corpus_[p].id);
      hier.add_node(std::move(n));
    }
    hier.meta["kind"] = "scichic";
    hier.meta["config"] = config_.to_json();
    hier.meta["corpus_size"] = corpus_.size();
    hier.meta["embedder"] = ctx_.embedder.name() + ":" + ctx_.embedder.model_tag();
    std::size_t summaries = 0;
    for (auto k : config_.layers) summaries += k;
    hier.meta["summaries"] = summaries;
    hier.meta["max_prompt_members"] = ctx_.max_prompt_members;
    hier.meta["stats"] = tree_stats(hier).to_json();
    return hier;
  }

  const Corpus& corpus_;
  const BuildConfig& config_;
  BuildContext& ctx_;
  BuildReport& report_;
  SummaryStore store_;
  std::vector<Draft> drafts_;
};

}  // namespace

Hierarchy build(const Corpus& corpus, const std::map<std::string, PaperVector>& vectors, const BuildConfig& config,
                BuildContext& context, BuildReport* report) {
  config.validate(corpus.size());
  Matrix points;
  for (const auto& p : corpus) {
    auto it = vectors.find(p.id);
    if (it == vectors.end()) throw InvalidArgument("paper " + p.id + " has no vector");
    if (!points.rows() && it->second.values.empty()) throw InvalidArgument("paper vectors are empty");
    if (points.rows() && it->second.values.size() != points.cols())
      throw InvalidArgument("paper " + p.id + " has a vector of the wrong dimension");
    points.push_row(it->second.values);
  }
  BuildReport local;
  Builder builder(corpus, config, context, report ? *report : local);
  return builder.run(points);
}

}  // namespace scihier
