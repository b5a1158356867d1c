#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "scihier/corpus.hpp"
#include "scihier/gateway.hpp"

namespace scihier {

enum class ContributionKind { problem, solution, result, topic };
inline constexpr ContributionKind kAllKinds[] = {ContributionKind::problem, ContributionKind::solution,
                                                 ContributionKind::result, ContributionKind::topic};

std::string_view kind_name(ContributionKind kind);  // "problem", ...
std::string_view kind_label(ContributionKind kind); // "Problem", ... (summary wrapper key)
ContributionKind parse_kind(std::string_view name);

/// Canonical field names of a contribution type, in schema order.
/// Keys are compared after normalize_key(), so "challenges/difficulties",
/// "challenges difficulties" and "challenges_difficulties" are the same field.
const std::vector<std::string>& schema_fields(ContributionKind kind);
/// Total number of embeddable fields across all four types.
std::size_t schema_dimension_count();

/// Lowercase; runs of spaces, '/', '-' become a single '_'.
std::string normalize_key(std::string_view key);

struct ContributionSet {
  // Scalar fields keyed by canonical name; every schema field is present.
  std::map<std::string, std::string> problem;
  std::map<std::string, std::string> solution;
  std::map<std::string, std::string> result;
  std::vector<std::string> topics;
  std::string rationale;

  ContributionSet();
  const std::map<std::string, std::string>& section(ContributionKind kind) const;
  std::map<std::string, std::string>& section(ContributionKind kind);
  bool operator==(const ContributionSet&) const = default;
};

/// Appends a topic unless an equal one (after normalize_phrase) exists.
void add_topic(ContributionSet& set, std::string topic);

nlohmann::ordered_json to_json(const ContributionSet& set);

/// Which part of a contribution document is being validated.
enum class ContributionPart { all, problem, solution, result, topic };

/// Strict parse of raw model output. For `all`, the document must hold the
/// keys problem, solution, result, topics, rationale. For a single section
/// the document is that section's bare object (the shape the extraction
/// examples use). Unknown keys are rejected. Leading/trailing prose and code
/// fences around a single JSON object are tolerated.
/// Throws SchemaError (key() names the missing/unknown key) or ParseError.
ContributionSet validate_contribution_json(std::string_view text,
                                           ContributionPart part = ContributionPart::all);

/// A contribution type and its ordered selected dimensions C'.
class ContributionType {
public:
  /// All of the type's fields.
  explicit ContributionType(ContributionKind kind);
  /// Throws InvalidArgument if dims is empty, has duplicates, or names a
  /// field outside the type's schema.
  ContributionType(ContributionKind kind, std::vector<std::string> dims);

  ContributionKind kind() const noexcept { return kind_; }
  const std::vector<std::string>& dimensions() const noexcept { return dims_; }

private:
  ContributionKind kind_;
  std::vector<std::string> dims_;
};

/// The C' texts in declared order; blanks preserved as "". The topic type's
/// single field is the topic list joined with "; ".
std::vector<std::string> select_dimensions(const ContributionSet& set, const ContributionType& type);

enum class PromptVariant { detailed, simplified };
std::string_view variant_name(PromptVariant v);
PromptVariant parse_variant(std::string_view name);

struct ExtractionStats {
  int schema_retries = 0;
};

/// Decomposes one paper via the gateway (role extractor). One repair retry on
/// schema-invalid output; throws SchemaError/ParseError after that.
ContributionSet extract_contributions(const PaperRecord& paper, Gateway& gateway,
                                      PromptVariant variant = PromptVariant::detailed,
                                      ExtractionStats* stats = nullptr);

struct ExtractionFailure {
  std::string paper_id;
  std::string message;
};

struct ExtractionBatch {
  std::map<std::string, ContributionSet> sets;  // keyed (and so ordered) by paper id
  std::vector<ExtractionFailure> failures;
  int schema_retries = 0;
};

ExtractionBatch extract_all(const Corpus& corpus, Gateway& gateway, PromptVariant variant,
                            std::size_t max_in_flight);

/// Line-delimited {"paper_id": ..., "contributions": {...}}.
void save_contributions(const std::map<std::string, ContributionSet>& sets,
                        const std::filesystem::path& path);
std::map<std::string, ContributionSet> load_contributions(const std::filesystem::path& path);

/// LLM keyword extraction used for corpus expansion (role extractor).
KeywordProvider llm_keyword_provider(Gateway& gateway, std::size_t count = 5);

}  // namespace scihier
