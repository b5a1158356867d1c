#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "scihier/clustering.hpp"
#include "scihier/corpus.hpp"
#include "scihier/embedding.hpp"
#include "scihier/extraction.hpp"
#include "scihier/gateway.hpp"
#include "scihier/hierarchy.hpp"

namespace scihier {

enum class BuildMode { hybrid, topdown, bottomup };
std::string_view mode_name(BuildMode mode);
BuildMode parse_mode(std::string_view name);

struct BuildConfig {
  BuildMode mode = BuildMode::hybrid;
  ContributionType type{ContributionKind::problem};
  std::vector<std::size_t> layers;  // k_1 < k_2 < ... < k_L
  std::uint64_t seed = 0;
  PromptVariant variant = PromptVariant::detailed;

  std::size_t depth() const noexcept { return layers.size(); }
  /// Number of layers built top-down: floor(L/2) for hybrid, L for topdown,
  /// 0 for bottomup.
  std::size_t top_down_layers() const noexcept;
  /// Throws InvalidArgument on an empty or non-increasing plan, a zero layer
  /// size, or k_L > corpus_size.
  void validate(std::size_t corpus_size) const;
  nlohmann::ordered_json to_json() const;
};

/// Parses "6,40,276". Throws InvalidArgument.
std::vector<std::size_t> parse_layer_plan(std::string_view text);

struct ClusterSummary {
  std::string cluster_name;
  /// Canonical schema field -> text, in schema order.
  std::vector<std::pair<std::string, std::string>> body;

  /// Name followed by the body texts, one per line; this is what gets
  /// embedded when summaries are clustered.
  std::string embedding_text() const;
  /// Payload shown to the summarizer when this summary is a member of a
  /// higher-level cluster.
  std::string member_text(ContributionKind kind) const;
  nlohmann::ordered_json body_json() const;
};

inline constexpr std::size_t kMinClusterNameWords = 5;

/// Strict parse of {"Cluster Name": ..., "<Label>": {fields}}. Field keys are
/// matched after normalize_key(); unknown or missing keys, a missing wrapper
/// and a name shorter than five words are SchemaErrors.
ClusterSummary parse_cluster_summary(std::string_view text, ContributionKind kind);

struct SummaryCallStats {
  int schema_retries = 0;
};

/// One summarizer call (plus one repair retry on invalid output).
ClusterSummary summarize_cluster(const std::vector<std::string>& member_payloads, const ContributionType& type,
                                 int layer, Gateway& gateway, PromptVariant variant,
                                 SummaryCallStats* stats = nullptr);

/// Text shown to the summarizer for a paper.
std::string paper_payload(const PaperRecord& paper);

/// Summaries already obtained, keyed by a hash of the rendered prompt. Lets an
/// interrupted build resume without repeating summarizer calls. Thread-safe.
class SummaryStore {
public:
  std::optional<ClusterSummary> get(const std::string& key) const;
  void put(const std::string& key, ClusterSummary summary);
  std::size_t size() const;
  /// Line-delimited {"key", "cluster_name", "body"}; save() rewrites the file.
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

private:
  mutable std::mutex mutex_;
  std::map<std::string, ClusterSummary> entries_;
};

struct BuildContext {
  Gateway& gateway;
  EmbedderClient& embedder;
  VectorCache& cache;
  Clusterer& clusterer;
  std::size_t max_in_flight = 8;
  /// Members shown to the summarizer per cluster (those nearest the cluster
  /// centroid); 0 shows all members.
  std::size_t max_prompt_members = 10;
  /// When set, summaries are persisted here after every layer and reused on
  /// the next run.
  std::optional<std::filesystem::path> checkpoint;
  EmbedOptions embed_options;
};

struct BuildReport {
  std::size_t summarizer_calls = 0;   // gateway calls made by this build
  std::size_t summaries_reused = 0;   // taken from the checkpoint instead
  int schema_retries = 0;
};

/// Builds the hierarchy. Every corpus paper needs a vector. Internal nodes
/// are named "L{layer}-{ordinal}" (breadth-first), the root is "L0-0" and
/// leaf-layer nodes hold the paper ids. Throws InvalidArgument,
/// ClusteringError, or whatever the gateway throws (the checkpoint keeps the
/// summaries of completed layers).
Hierarchy build(const Corpus& corpus, const std::map<std::string, PaperVector>& vectors,
                const BuildConfig& config, BuildContext& context, BuildReport* report = nullptr);

}  // namespace scihier
