#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "scihier/synthetic.hpp"

namespace scihier::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
  static std::atomic<std::uint64_t> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = fs::temp_directory_path() /
          ("scihier-test-" + std::to_string(stamp) + "-" + std::to_string(counter.fetch_add(1)));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

std::string filler_words(std::size_t n, std::uint64_t seed) {
  static const char* kWords[] = {"model", "data", "signal", "theory", "method", "system", "energy", "phase",
                                 "network", "sample", "measure", "field", "structure", "process", "analysis"};
  Rng rng(seed);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += kWords[rng.below(std::size(kWords))];
  }
  return out;
}

PaperRecord make_paper(const std::string& id, const std::string& title, int year, std::int64_t citations,
                       std::size_t abstract_words, const std::string& venue) {
  PaperRecord p;
  p.id = id;
  p.title = title;
  p.abstract = filler_words(abstract_words, fnv1a64(id));
  p.venue = venue;
  p.year = year;
  p.citation_count = citations;
  return p;
}

std::unique_ptr<Gateway> mock_gateway(std::shared_ptr<ChatProvider> provider, std::size_t max_in_flight) {
  GatewayOptions opts;
  opts.max_in_flight = max_in_flight;
  opts.retry.base_delay = std::chrono::milliseconds(0);
  opts.sleeper = [](std::chrono::milliseconds) {};
  return std::make_unique<Gateway>(std::move(provider), opts);
}

// ---------------------------------------------------------------------------
// Oracles

namespace {

double groups_inertia(const Matrix& points, const std::vector<std::size_t>& label, std::size_t groups) {
  const std::size_t d = points.cols();
  std::vector<double> sum(groups * d, 0.0);
  std::vector<std::size_t> count(groups, 0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    ++count[label[i]];
    for (std::size_t c = 0; c < d; ++c) sum[label[i] * d + c] += points.row(i)[c];
  }
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i)
    for (std::size_t c = 0; c < d; ++c) {
      const double mean = sum[label[i] * d + c] / double(count[label[i]]);
      const double diff = points.row(i)[c] - mean;
      total += diff * diff;
    }
  return total;
}

}  // namespace

double exhaustive_optimal_inertia(const Matrix& points, std::size_t k) {
  const std::size_t n = points.rows();
  if (n == 0 || n > 12 || k == 0) throw InvalidArgument("exhaustive oracle needs 1 <= n <= 12 and k >= 1");
  std::vector<std::size_t> label(n, 0);
  double best = std::numeric_limits<double>::infinity();
  // Restricted growth strings: label[i] <= max(label[0..i-1]) + 1, < k.
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t used) {
    if (i == n) {
      best = std::min(best, groups_inertia(points, label, used));
      return;
    }
    for (std::size_t g = 0; g < std::min(used + 1, k); ++g) {
      label[i] = g;
      rec(i + 1, std::max(used, g + 1));
    }
  };
  rec(0, 0);
  return best;
}

std::vector<std::size_t> hamilton_apportionment(const std::vector<std::size_t>& sizes, std::size_t total) {
  const std::size_t m = sizes.size();
  const unsigned long long S = std::accumulate(sizes.begin(), sizes.end(), 0ULL);
  std::vector<std::size_t> out(m);
  std::vector<unsigned long long> rem(m);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const unsigned long long num = static_cast<unsigned long long>(total) * sizes[i];
    out[i] = num / S;
    rem[i] = num % S;
    assigned += out[i];
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rem[a] != rem[b]) return rem[a] > rem[b];
    if (sizes[a] != sizes[b]) return sizes[a] > sizes[b];
    return a < b;
  });
  for (std::size_t j = 0; assigned < total; ++j, ++assigned) ++out[order[j]];
  return out;
}

Blobs planted_blobs(std::size_t k, std::size_t per_cluster, std::size_t dim, double separation, std::uint64_t seed) {
  Rng rng(seed);
  Blobs b;
  b.radius = 1.0;
  // Centers on a scaled lattice of random offsets, re-drawn until separated.
  std::vector<std::vector<double>> centers;
  while (centers.size() < k) {
    std::vector<double> c(dim);
    for (auto& v : c) v = (rng.uniform01() * 2 - 1) * separation * double(k) * 2.0;
    bool ok = true;
    for (const auto& o : centers) {
      double d2 = 0;
      for (std::size_t i = 0; i < dim; ++i) d2 += (c[i] - o[i]) * (c[i] - o[i]);
      if (std::sqrt(d2) < separation * b.radius) ok = false;
    }
    if (ok) centers.push_back(c);
  }
  b.min_center_distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j)
      b.min_center_distance = std::min(b.min_center_distance, std::sqrt(squared_distance(centers[i], centers[j])));
  // Interleave labels so cluster membership is not positional.
  for (std::size_t p = 0; p < per_cluster; ++p)
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> x(dim), dir(dim);
      double norm = 0;
      for (auto& v : dir) {
        v = rng.uniform01() * 2 - 1;
        norm += v * v;
      }
      norm = std::sqrt(norm);
      const double r = rng.uniform01() * b.radius;
      for (std::size_t i = 0; i < dim; ++i) x[i] = centers[c][i] + (norm > 0 ? dir[i] / norm * r : 0.0);
      b.points.push_row(x);
      b.labels.push_back(c);
    }
  return b;
}

Matrix random_points(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < dim; ++c) m.row(i)[c] = rng.uniform01() * 10.0;
  return m;
}

bool same_partition(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.size() != b.size()) return false;
  std::map<std::size_t, std::size_t> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto [x, fresh_x] = ab.emplace(a[i], b[i]);
    auto [y, fresh_y] = ba.emplace(b[i], a[i]);
    if (x->second != b[i] || y->second != a[i]) return false;
  }
  return true;
}

std::size_t option_count(const HierarchyNode& node) { return node.children.size() + node.paper_ids.size(); }

RandomDescentExpectation random_descent_expectation(const Hierarchy& h, const std::vector<std::string>& targets) {
  const auto locations = h.paper_locations();
  RandomDescentExpectation e;
  for (const auto& t : targets) {
    const auto path = h.path_to(locations.at(t).front());
    double p = 1.0;
    for (const auto& id : path) p /= double(option_count(h.node(id)));
    e.strict += p;
    e.l1 += 1.0 / double(option_count(h.root()));
  }
  e.strict *= 100.0 / double(targets.size());
  e.l1 *= 100.0 / double(targets.size());
  return e;
}

RandomDescentExpectation random_descent_monte_carlo(const Hierarchy& h, const std::vector<std::string>& targets,
                                                    std::size_t trials, std::uint64_t seed) {
  const auto locations = h.paper_locations();
  std::mt19937_64 gen(seed);
  std::size_t found = 0, first = 0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::string& target = targets[trial % targets.size()];
    const auto path = h.path_to(locations.at(target).front());
    const HierarchyNode* cur = &h.root();
    for (std::size_t depth = 0;; ++depth) {
      std::uniform_int_distribution<std::size_t> pick(0, option_count(*cur) - 1);
      const std::size_t choice = pick(gen);
      if (choice >= cur->children.size()) {
        const bool hit = cur->paper_ids[choice - cur->children.size()] == target;
        found += hit;
        if (depth == 0) first += hit;
        break;
      }
      const std::string& next = cur->children[choice];
      const bool toward = depth + 1 < path.size() && path[depth + 1] == next;
      if (depth == 0) first += toward;
      if (!toward) break;
      cur = &h.node(next);
    }
  }
  return {100.0 * double(found) / double(trials), 100.0 * double(first) / double(trials)};
}

CitationFixture citation_fixture(std::size_t intra, std::size_t inter, std::size_t papers_per_group) {
  const std::size_t g = papers_per_group;
  if (intra > 2 * g * (g - 1) || inter > 2 * g * g) throw InvalidArgument("citation fixture too small");
  std::vector<PaperRecord> papers;
  for (std::size_t i = 0; i < 2 * g; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "c-%04zu", i);
    papers.push_back(make_paper(id, "Paper " + std::to_string(i)));
  }
  // Enumerate distinct directed edges deterministically.
  std::size_t placed_intra = 0, placed_inter = 0;
  for (std::size_t i = 0; i < 2 * g && (placed_intra < intra || placed_inter < inter); ++i)
    for (std::size_t j = 0; j < 2 * g; ++j) {
      if (i == j) continue;
      const bool same = (i < g) == (j < g);
      if (same && placed_intra < intra) {
        papers[i].outbound_citations.push_back(papers[j].id);
        ++placed_intra;
      } else if (!same && placed_inter < inter) {
        papers[i].outbound_citations.push_back(papers[j].id);
        ++placed_inter;
      }
    }
  CitationFixture f;
  f.hierarchy.add_node({"L0-0", 0, "All papers", nlohmann::ordered_json::object(), "", {}, {}});
  f.hierarchy.add_node({"L1-0", 1, "Group A", nlohmann::ordered_json::object(), "L0-0", {}, {}});
  f.hierarchy.add_node({"L1-1", 1, "Group B", nlohmann::ordered_json::object(), "L0-0", {}, {}});
  // Two leaves per group so the layer-1 ancestor (not the leaf) decides.
  std::vector<std::string> leaves[4];
  for (std::size_t i = 0; i < 2 * g; ++i) leaves[(i < g ? 0 : 2) + (i % 2)].push_back(papers[i].id);
  f.hierarchy.add_node({"L2-0", 2, "A1", nlohmann::ordered_json::object(), "L1-0", {}, leaves[0]});
  f.hierarchy.add_node({"L2-1", 2, "A2", nlohmann::ordered_json::object(), "L1-0", {}, leaves[1]});
  f.hierarchy.add_node({"L2-2", 2, "B1", nlohmann::ordered_json::object(), "L1-1", {}, leaves[2]});
  f.hierarchy.add_node({"L2-3", 2, "B2", nlohmann::ordered_json::object(), "L1-1", {}, leaves[3]});
  f.corpus = Corpus(std::move(papers));
  return f;
}

// ---------------------------------------------------------------------------
// Pipeline

MockRun mock_pipeline(std::size_t papers, const std::vector<std::size_t>& plan, const MockRunOptions& options) {
  MockRun run;
  run.corpus = synthetic_corpus(papers, options.seed);
  auto provider = std::make_shared<MockProvider>();
  auto gateway = mock_gateway(provider, options.max_in_flight);
  auto extracted = extract_all(run.corpus, *gateway, PromptVariant::detailed, options.max_in_flight);
  if (!extracted.failures.empty()) throw Error("mock extraction failed for " + extracted.failures.front().paper_id);
  run.contributions = std::move(extracted.sets);
  const ContributionType type(options.kind);
  MockEmbedder embedder(options.embed_dimension, options.seed);
  VectorCache cache;
  run.vectors = embed_papers(run.contributions, type, embedder, cache);
  BuildConfig config;
  config.mode = options.mode;
  config.type = type;
  config.layers = plan;
  config.seed = options.seed;
  run.hierarchy = mock_build(run.corpus, run.vectors, config, &run.report, &run.ledger, options.embed_dimension);
  return run;
}

Hierarchy mock_build(const Corpus& corpus, const std::map<std::string, PaperVector>& vectors,
                     const BuildConfig& config, BuildReport* report, CallLedger* ledger,
                     std::size_t embed_dimension) {
  auto gateway = mock_gateway(std::make_shared<MockProvider>());
  MockEmbedder embedder(embed_dimension, config.seed);
  VectorCache cache;
  KMeansClusterer clusterer;
  BuildContext ctx{*gateway, embedder, cache, clusterer, 8, 10, std::nullopt, {}};
  Hierarchy h = build(corpus, vectors, config, ctx, report);
  if (ledger) *ledger = gateway->ledger_report();
  return h;
}

std::string check_partition_and_widths(const Hierarchy& h, const Corpus& corpus,
                                       const std::vector<std::size_t>& plan) {
  try {
    h.validate();
  } catch (const std::exception& e) {
    return std::string("invalid structure: ") + e.what();
  }
  const auto stats = tree_stats(h);
  if (stats.layer_widths != plan) {
    std::string got;
    for (auto w : stats.layer_widths) got += std::to_string(w) + " ";
    return "layer widths " + got + "differ from the plan";
  }
  const int leaf = static_cast<int>(plan.size());
  std::map<std::string, std::size_t> seen;
  for (const auto& n : h.nodes()) {
    if (!n.paper_ids.empty() && n.layer != leaf) return "papers attached above the leaf layer at " + n.id;
    if (n.layer == leaf && n.paper_ids.empty()) return "empty leaf cluster " + n.id;
    if (n.layer < leaf && n.children.empty()) return "internal node without children " + n.id;
    for (const auto& p : n.paper_ids) ++seen[p];
  }
  for (const auto& p : corpus) {
    auto it = seen.find(p.id);
    if (it == seen.end()) return "paper " + p.id + " missing from the leaf layer";
    if (it->second != 1) return "paper " + p.id + " attached " + std::to_string(it->second) + " times";
  }
  if (seen.size() != corpus.size()) return "leaf layer holds papers outside the corpus";
  return {};
}

}  // namespace scihier::testing
