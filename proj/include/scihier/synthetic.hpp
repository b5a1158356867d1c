#pragma once

#include <cstdint>

#include "scihier/corpus.hpp"

namespace scihier {

struct SyntheticOptions {
  std::size_t areas = 8;           // latent research areas driving vocabulary and citations
  std::size_t min_abstract_words = 260;
  int first_year = 2015;
  int last_year = 2024;
  int reference_year = 2025;       // citation counts clear the default filter for this year
  std::size_t max_citations = 5;   // outbound citations per paper
  double same_area_citation = 0.85;
};

/// Deterministic offline corpus: ids "syn-000001", ..., titles and abstracts
/// drawn from area-specific vocabularies, every record passing the default
/// filter policy. Outbound citations point at earlier papers, mostly within
/// the same area.
Corpus synthetic_corpus(std::size_t n, std::uint64_t seed, const SyntheticOptions& options = {});

/// Latent area of a synthetic paper (by position), for tests.
std::size_t synthetic_area(std::size_t index, std::uint64_t seed, const SyntheticOptions& options = {});

}  // namespace scihier
