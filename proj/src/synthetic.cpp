#include "scihier/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>

namespace scihier {

namespace {

constexpr std::array<const char*, 24> kOnsets = {"b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r",
                                                  "s", "t", "v", "z", "br", "cr", "pl", "st", "tr", "gr", "ph", "th"};
constexpr std::array<const char*, 8> kVowels = {"a", "e", "i", "o", "u", "ai", "eo", "ia"};
constexpr std::array<const char*, 10> kCodas = {"n", "r", "s", "l", "x", "m", "nd", "st", "th", "c"};

constexpr std::array<const char*, 40> kCommon = {
    "we",        "propose",    "a",          "novel",     "method",      "for",        "the",
    "analysis",  "of",         "and",        "results",   "show",        "that",       "model",
    "improves",  "on",         "existing",   "approaches", "in",         "this",       "study",
    "data",      "framework",  "experiments", "demonstrate", "significant", "performance", "with",
    "based",     "evaluation", "challenges", "problem",   "approach",    "across",     "several",
    "benchmark", "techniques", "compared",   "to",        "baseline"};

std::string make_word(Rng& rng) {
  std::string w;
  const auto syllables = 2 + rng.below(2);
  for (std::uint64_t s = 0; s < syllables; ++s) {
    w += kOnsets[rng.below(kOnsets.size())];
    w += kVowels[rng.below(kVowels.size())];
  }
  w += kCodas[rng.below(kCodas.size())];
  return w;
}

std::vector<std::vector<std::string>> vocabularies(std::uint64_t seed, std::size_t areas) {
  std::vector<std::vector<std::string>> out(areas);
  for (std::size_t a = 0; a < areas; ++a) {
    Rng rng(combine_seed(seed, 0xA5EA0000ULL + a));
    for (int i = 0; i < 48; ++i) out[a].push_back(make_word(rng));
  }
  return out;
}

std::string capitalize(std::string w) {
  if (!w.empty() && w[0] >= 'a' && w[0] <= 'z') w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

}  // namespace

std::size_t synthetic_area(std::size_t index, std::uint64_t seed, const SyntheticOptions& options) {
  return static_cast<std::size_t>(mix64(combine_seed(seed, index)) % std::max<std::size_t>(1, options.areas));
}

Corpus synthetic_corpus(std::size_t n, std::uint64_t seed, const SyntheticOptions& options) {
  const std::size_t areas = std::max<std::size_t>(1, options.areas);
  const auto vocab = vocabularies(seed, areas);
  std::vector<std::vector<std::size_t>> by_area(areas);
  Corpus corpus;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(combine_seed(seed, 0x5EED0000ULL + i));
    const std::size_t area = synthetic_area(i, seed, options);
    const auto& words = vocab[area];
    // A paper-specific focus keeps titles distinct within an area.
    const std::size_t focus = rng.below(words.size());
    auto area_word = [&] {
      return rng.uniform01() < 0.35 ? words[(focus + rng.below(4)) % words.size()] : words[rng.below(words.size())];
    };

    PaperRecord p;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%06zu", i + 1);
    p.id = id;
    const auto title_len = 5 + rng.below(5);
    std::vector<std::string> title;
    for (std::uint64_t t = 0; t < title_len; ++t) title.push_back(capitalize(area_word()));
    title.push_back(std::to_string(i + 1));  // guarantees unique titles
    p.title = join(title, " ");

    std::string abstract;
    std::size_t count = 0;
    while (count < options.min_abstract_words) {
      const auto sentence_len = 10 + rng.below(12);
      std::vector<std::string> s;
      for (std::uint64_t w = 0; w < sentence_len; ++w)
        s.push_back(rng.uniform01() < 0.55 ? area_word() : std::string(kCommon[rng.below(kCommon.size())]));
      s[0] = capitalize(s[0]);
      if (!abstract.empty()) abstract += ' ';
      abstract += join(s, " ") + ".";
      count += s.size();
    }
    p.abstract = std::move(abstract);
    p.venue = "Synthetic Venue " + std::to_string(area + 1);
    const int span = std::max(0, options.last_year - options.first_year);
    p.year = options.first_year + static_cast<int>(rng.below(static_cast<std::uint64_t>(span) + 1));
    FilterPolicy policy;
    policy.reference_year = options.reference_year;
    p.citation_count = policy.min_citations(p.year) + static_cast<std::int64_t>(rng.below(40));

    const auto cites = i == 0 ? 0 : rng.below(options.max_citations + 1);
    for (std::uint64_t c = 0; c < cites; ++c) {
      std::size_t target;
      if (rng.uniform01() < options.same_area_citation && !by_area[area].empty())
        target = by_area[area][rng.below(by_area[area].size())];
      else
        target = rng.below(i);
      const std::string& tid = corpus[target].id;
      if (std::find(p.outbound_citations.begin(), p.outbound_citations.end(), tid) == p.outbound_citations.end())
        p.outbound_citations.push_back(tid);
    }
    by_area[area].push_back(i);
    corpus.add(std::move(p));
  }
  return corpus;
}

}  // namespace scihier
