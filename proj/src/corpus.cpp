#include "scihier/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace scihier {

using nlohmann::json;

nlohmann::ordered_json to_json(const PaperRecord& paper) {
  nlohmann::ordered_json j;
  j["id"] = paper.id;
  j["title"] = paper.title;
  j["abstract"] = paper.abstract;
  j["venue"] = paper.venue;
  j["year"] = paper.year;
  j["citation_count"] = paper.citation_count;
  j["outbound_citations"] = paper.outbound_citations;
  return j;
}

namespace {

std::string required_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(std::string("missing field \"") + key + "\"");
  if (!it->is_string()) throw ParseError(std::string("field \"") + key + "\" must be a string");
  return it->get<std::string>();
}

std::string optional_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_string()) throw ParseError(std::string("field \"") + key + "\" must be a string");
  return it->get<std::string>();
}

}  // namespace

PaperRecord paper_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("record must be a JSON object");
  PaperRecord p;
  p.id = required_string(j, "id");
  p.title = required_string(j, "title");
  p.abstract = optional_string(j, "abstract");
  p.venue = optional_string(j, "venue");
  auto year = j.find("year");
  if (year == j.end() || !year->is_number_integer()) throw ParseError("field \"year\" must be an integer");
  p.year = year->get<int>();
  auto cites = j.find("citation_count");
  if (cites != j.end() && !cites->is_null()) {
    if (!cites->is_number_integer() || cites->get<std::int64_t>() < 0)
      throw ParseError("field \"citation_count\" must be a non-negative integer");
    p.citation_count = cites->get<std::int64_t>();
  }
  auto out = j.find("outbound_citations");
  if (out != j.end() && !out->is_null()) {
    if (!out->is_array()) throw ParseError("field \"outbound_citations\" must be an array");
    for (const auto& c : *out) {
      if (!c.is_string()) throw ParseError("outbound_citations entries must be strings");
      p.outbound_citations.push_back(c.get<std::string>());
    }
  }
  if (p.id.empty()) throw ParseError("field \"id\" must be non-empty");
  if (trim(p.title).empty()) throw ParseError("field \"title\" must be non-empty");
  return p;
}

Corpus::Corpus(std::vector<PaperRecord> papers) {
  papers_.reserve(papers.size());
  for (auto& p : papers) add(std::move(p));
}

void Corpus::add(PaperRecord paper) {
  if (index_.count(paper.id)) throw DuplicateIdError(paper.id);
  index_.emplace(paper.id, papers_.size());
  papers_.push_back(std::move(paper));
}

const PaperRecord& Corpus::at(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw NotFound("unknown paper id \"" + id + "\"");
  return papers_[it->second];
}

const PaperRecord* Corpus::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &papers_[it->second];
}

Corpus parse_corpus(std::istream& in) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    PaperRecord p;
    try {
      p = paper_from_json(j);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
    corpus.add(std::move(p));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open corpus file " + path.string());
  return parse_corpus(in);
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& p : corpus) out << to_json(p).dump() << '\n';
}

std::int64_t FilterPolicy::min_citations(int year) const {
  const std::int64_t age = std::max(0, reference_year - year);
  return min_citation_base + static_cast<std::int64_t>(min_citation_slope) * age;
}

void FilterPolicy::validate() const {
  if (min_citation_base < 0 || min_citation_slope < 0 || reference_year < 0 || min_abstract_tokens < 0)
    throw InvalidArgument("filter policy integers must be >= 0");
}

FilterVerdict judge_paper(const PaperRecord& paper, const FilterPolicy& policy,
                          const TokenCounter& tokenizer) {
  FilterVerdict v;
  v.citations_ok = paper.citation_count >= policy.min_citations(paper.year);
  v.abstract_ok = tokenizer(paper.abstract) >= static_cast<std::size_t>(policy.min_abstract_tokens);
  v.venue_ok = !policy.require_venue || !trim(paper.venue).empty();
  return v;
}

FilterReport filter_papers(const Corpus& corpus, const FilterPolicy& policy,
                           const TokenCounter& tokenizer) {
  policy.validate();
  FilterReport report;
  for (const auto& p : corpus) {
    const auto v = judge_paper(p, policy, tokenizer);
    if (!v.citations_ok) ++report.rejected_citations;
    if (!v.abstract_ok) ++report.rejected_abstract;
    if (!v.venue_ok) ++report.rejected_venue;
    if (v.kept())
      report.kept.add(p);
    else
      ++report.rejected_total;
  }
  return report;
}

void MockSearchClient::set_results(const std::string& keyword, std::vector<PaperRecord> results) {
  results_[keyword] = std::move(results);
}

std::size_t MockSearchClient::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

void MockSearchClient::fail_on(const std::string& keyword) { failing_[keyword] = true; }

std::vector<PaperRecord> MockSearchClient::search(const std::string& keyword, std::size_t limit) {
  std::lock_guard lock(mutex_);
  ++requests_;
  if (failing_.count(keyword)) throw TransientError("search backend unavailable");
  auto it = results_.find(keyword);
  if (it == results_.end()) return {};
  std::vector<PaperRecord> out = it->second;
  if (out.size() > limit) out.resize(limit);
  return out;
}

ExpandReport expand_corpus(const Corpus& seed, PaperSearchClient& client,
                           const KeywordProvider& keywords, const ExpandOptions& options) {
  struct Request {
    std::size_t seed_index;
    std::size_t keyword_index;
    std::string keyword;
    std::vector<PaperRecord> results;
    std::optional<std::string> error;
  };
  std::vector<Request> requests;
  for (std::size_t i = 0; i < seed.size(); ++i) {
    const auto kws = keywords(seed[i]);
    for (std::size_t k = 0; k < kws.size(); ++k) requests.push_back({i, k, kws[k], {}, std::nullopt});
  }

  parallel_for(requests.size(), options.max_in_flight, [&](std::size_t r) {
    auto& req = requests[r];
    try {
      req.results = client.search(req.keyword, options.request_limit);
    } catch (const std::exception& e) {
      req.error = e.what();
    }
  });

  ExpandReport report;
  report.corpus = seed;
  for (const auto& req : requests) {
    if (req.error) {
      report.failures.push_back({seed[req.seed_index].id, req.keyword, *req.error});
      continue;
    }
    std::size_t admitted_here = 0;
    for (const auto& candidate : req.results) {
      if (admitted_here >= options.per_keyword_limit) break;
      if (report.corpus.contains(candidate.id)) continue;
      if (!judge_paper(candidate, options.policy, options.tokenizer).kept()) continue;
      report.corpus.add(candidate);
      ++admitted_here;
      ++report.admitted;
    }
  }
  return report;
}

std::vector<Query> sample_queries(const Corpus& corpus, std::size_t n, std::uint64_t seed) {
  if (n > corpus.size())
    throw InvalidArgument("cannot sample " + std::to_string(n) + " queries from " +
                          std::to_string(corpus.size()) + " papers");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
    std::swap(order[i], order[j]);
  }
  std::vector<Query> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = corpus[order[i]];
    out.push_back({p.id, p.title, p.abstract});
  }
  return out;
}

}  // namespace scihier
