#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scihier/common.hpp"

namespace scihier {

struct PaperRecord {
  std::string id;
  std::string title;
  std::string abstract;
  std::string venue;
  int year = 0;
  std::int64_t citation_count = 0;
  std::vector<std::string> outbound_citations;

  bool operator==(const PaperRecord&) const = default;
};

nlohmann::ordered_json to_json(const PaperRecord& paper);
/// Throws ParseError on missing/ill-typed fields. A missing citation_count
/// reads as 0.
PaperRecord paper_from_json(const nlohmann::json& j);

/// Immutable-by-convention collection with unique ids, kept in insertion order.
class Corpus {
public:
  Corpus() = default;
  /// Throws DuplicateIdError.
  explicit Corpus(std::vector<PaperRecord> papers);

  /// Throws DuplicateIdError.
  void add(PaperRecord paper);

  std::size_t size() const noexcept { return papers_.size(); }
  bool empty() const noexcept { return papers_.empty(); }
  const std::vector<PaperRecord>& papers() const noexcept { return papers_; }
  const PaperRecord& operator[](std::size_t i) const { return papers_[i]; }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  /// Throws NotFound.
  const PaperRecord& at(const std::string& id) const;
  const PaperRecord* find(const std::string& id) const;

  auto begin() const { return papers_.begin(); }
  auto end() const { return papers_.end(); }

private:
  std::vector<PaperRecord> papers_;
  std::map<std::string, std::size_t> index_;
};

/// Line-delimited JSON, one record per line. Blank lines are skipped.
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::istream& in);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

struct FilterPolicy {
  int min_citation_base = 2;
  int min_citation_slope = 3;
  int reference_year = 2025;
  int min_abstract_tokens = 250;
  bool require_venue = true;

  /// base + slope * (reference_year - year); never below base for years
  /// after the reference year.
  std::int64_t min_citations(int year) const;
  void validate() const;
};

struct FilterVerdict {
  bool citations_ok = false;
  bool abstract_ok = false;
  bool venue_ok = false;
  bool kept() const { return citations_ok && abstract_ok && venue_ok; }
};

FilterVerdict judge_paper(const PaperRecord& paper, const FilterPolicy& policy,
                          const TokenCounter& tokenizer);

struct FilterReport {
  Corpus kept;
  std::size_t rejected_citations = 0;
  std::size_t rejected_abstract = 0;
  std::size_t rejected_venue = 0;
  std::size_t rejected_total = 0;
};

FilterReport filter_papers(const Corpus& corpus, const FilterPolicy& policy,
                           const TokenCounter& tokenizer = default_token_counter());

/// Keyword -> candidate records. Must be safe to call from several threads;
/// may throw TransientError.
class PaperSearchClient {
public:
  virtual ~PaperSearchClient() = default;
  virtual std::vector<PaperRecord> search(const std::string& keyword, std::size_t limit) = 0;
};

/// In-memory search client keyed by exact keyword.
class MockSearchClient : public PaperSearchClient {
public:
  void set_results(const std::string& keyword, std::vector<PaperRecord> results);
  void fail_on(const std::string& keyword);
  std::vector<PaperRecord> search(const std::string& keyword, std::size_t limit) override;
  std::size_t requests() const;

private:
  std::map<std::string, std::vector<PaperRecord>> results_;
  std::map<std::string, bool> failing_;
  std::size_t requests_ = 0;
  mutable std::mutex mutex_;
};

using KeywordProvider = std::function<std::vector<std::string>(const PaperRecord&)>;

struct ExpandOptions {
  std::size_t per_keyword_limit = 5;
  std::size_t request_limit = 20;
  std::size_t max_in_flight = 4;
  FilterPolicy policy;
  TokenCounter tokenizer = default_token_counter();
};

struct ExpandFailure {
  std::string seed_id;
  std::string keyword;
  std::string message;
};

struct ExpandReport {
  Corpus corpus;  // seed records followed by admitted records
  std::size_t admitted = 0;
  std::vector<ExpandFailure> failures;
};

/// Queries each seed paper's keywords and admits filtered, previously unseen
/// candidates (at most per_keyword_limit per keyword). Output order is
/// canonical: (seed order, keyword index, candidate rank).
ExpandReport expand_corpus(const Corpus& seed, PaperSearchClient& client,
                           const KeywordProvider& keywords, const ExpandOptions& options = {});

struct Query {
  std::string target_id;
  std::string title;
  std::string abstract;
};

/// n distinct papers; deterministic given seed. Throws InvalidArgument if
/// n > corpus size.
std::vector<Query> sample_queries(const Corpus& corpus, std::size_t n, std::uint64_t seed);

}  // namespace scihier
