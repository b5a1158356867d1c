#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "scihier/clustering.hpp"
#include "scihier/corpus.hpp"
#include "scihier/embedding.hpp"
#include "scihier/extraction.hpp"
#include "scihier/gateway.hpp"
#include "scihier/hierarchy.hpp"
#include "scihier/mock_provider.hpp"
#include "scihier/scichic.hpp"

namespace scihier::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

/// Deterministic filler text of exactly n whitespace tokens.
std::string filler_words(std::size_t n, std::uint64_t seed = 1);

PaperRecord make_paper(const std::string& id, const std::string& title, int year = 2020,
                       std::int64_t citations = 100, std::size_t abstract_words = 300,
                       const std::string& venue = "Journal of Tests");

/// Mock gateway without retry delays.
std::unique_ptr<Gateway> mock_gateway(std::shared_ptr<ChatProvider> provider, std::size_t max_in_flight = 8);

// ---------------------------------------------------------------------------
// Brute-force oracles

/// Minimum inertia over every partition of the rows into at most k non-empty
/// groups (restricted-growth enumeration). Exponential; n <= 12.
double exhaustive_optimal_inertia(const Matrix& points, std::size_t k);

/// Exact proportional quotas total * size / sum rounded by largest
/// remainder (ties: larger size, then lower index); no minimum per parent.
std::vector<std::size_t> hamilton_apportionment(const std::vector<std::size_t>& sizes, std::size_t total);

struct Blobs {
  Matrix points;
  std::vector<std::size_t> labels;
  double radius = 1.0;
  double min_center_distance = 0.0;
};

/// k clusters of per_cluster points within `radius` of centers that are at
/// least separation * radius apart.
Blobs planted_blobs(std::size_t k, std::size_t per_cluster, std::size_t dim, double separation, std::uint64_t seed);

Matrix random_points(std::size_t n, std::size_t dim, std::uint64_t seed);

/// True when a and b induce the same partition (labels may be permuted).
bool same_partition(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

/// Options at a node's judge prompt: child clusters then attached papers.
std::size_t option_count(const HierarchyNode& node);

/// Probability that uniformly random choices reach `target` (product of
/// 1/options along the path), averaged over targets; and the probability
/// that the first choice leads towards it.
struct RandomDescentExpectation {
  double strict = 0.0;  // percent
  double l1 = 0.0;      // percent
};
RandomDescentExpectation random_descent_expectation(const Hierarchy& h, const std::vector<std::string>& targets);

/// Monte-Carlo simulation of the same process with an independent RNG.
RandomDescentExpectation random_descent_monte_carlo(const Hierarchy& h, const std::vector<std::string>& targets,
                                                    std::size_t trials, std::uint64_t seed);

/// Two top-level groups of `papers_per_group` papers each with exactly
/// `intra` within-group and `inter` cross-group citation edges; the
/// hierarchy attaches every paper under its group.
struct CitationFixture {
  Corpus corpus;
  Hierarchy hierarchy;
};
CitationFixture citation_fixture(std::size_t intra, std::size_t inter, std::size_t papers_per_group = 60);

// ---------------------------------------------------------------------------
// Offline pipeline

struct MockRun {
  Corpus corpus;
  std::map<std::string, ContributionSet> contributions;
  std::map<std::string, PaperVector> vectors;
  Hierarchy hierarchy;
  BuildReport report;
  CallLedger ledger;  // gateway ledger of the build alone
};

struct MockRunOptions {
  BuildMode mode = BuildMode::hybrid;
  ContributionKind kind = ContributionKind::problem;
  std::uint64_t seed = 0;
  std::size_t embed_dimension = 32;
  std::size_t max_in_flight = 8;
};

/// synthetic corpus -> mock extraction -> mock embedding -> build.
MockRun mock_pipeline(std::size_t papers, const std::vector<std::size_t>& plan, const MockRunOptions& options = {});

/// Build step alone, with fresh mock providers.
Hierarchy mock_build(const Corpus& corpus, const std::map<std::string, PaperVector>& vectors,
                     const BuildConfig& config, BuildReport* report = nullptr, CallLedger* ledger = nullptr,
                     std::size_t embed_dimension = 32);

/// Checks the partition and width invariants; returns "" when they hold,
/// otherwise a description of the first violation.
std::string check_partition_and_widths(const Hierarchy& h, const Corpus& corpus, const std::vector<std::size_t>& plan);

}  // namespace scihier::testing
