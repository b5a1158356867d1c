#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "scihier/extraction.hpp"

namespace scihier {

using Vector = std::vector<double>;

class EmbeddingError : public Error {
public:
  using Error::Error;
};

/// Text -> d-dimensional vector. embed_batch must return one vector per input.
class EmbedderClient {
public:
  virtual ~EmbedderClient() = default;
  virtual std::string name() const = 0;
  /// Distinguishes models/configurations sharing a client name.
  virtual std::string model_tag() const { return std::to_string(dimension()); }
  virtual std::size_t dimension() const = 0;
  /// May throw TransientError.
  virtual std::vector<Vector> embed_batch(std::span<const std::string> texts) = 0;
};

/// Seeded hash of the whole text expanded to d values in [-1, 1), then
/// L2-normalized. Distinct texts give unrelated vectors.
class MockEmbedder : public EmbedderClient {
public:
  explicit MockEmbedder(std::size_t dimension = 64, std::uint64_t seed = 0);
  std::string name() const override { return "mock-hash"; }
  std::string model_tag() const override;
  std::size_t dimension() const override { return dimension_; }
  std::vector<Vector> embed_batch(std::span<const std::string> texts) override;
  std::size_t batches() const noexcept { return batches_; }
  std::size_t texts_embedded() const noexcept { return texts_; }

private:
  std::size_t dimension_;
  std::uint64_t seed_;
  std::atomic<std::size_t> batches_{0};
  std::atomic<std::size_t> texts_{0};
};

/// Offline embedder with lexical similarity: the sum of per-word hashed
/// random vectors over lowercase alphanumeric tokens, L2-normalized. Texts
/// sharing vocabulary land near each other.
class LexicalEmbedder : public EmbedderClient {
public:
  explicit LexicalEmbedder(std::size_t dimension = 64, std::uint64_t seed = 0);
  std::string name() const override { return "mock-lexical"; }
  std::string model_tag() const override;
  std::size_t dimension() const override { return dimension_; }
  std::vector<Vector> embed_batch(std::span<const std::string> texts) override;

private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

/// Content-addressed vector store keyed by sha256(client name, model tag,
/// text). Safe for concurrent readers and writers.
///
/// On disk: a directory holding vectors.bin (raw native-endian doubles) and
/// index.json ({"entries": {key: {offset, dimension}}}). save() appends
/// entries the directory does not have yet.
class VectorCache {
public:
  VectorCache() = default;

  static std::string key_for(const EmbedderClient& client, std::string_view text);

  std::optional<Vector> get(const std::string& key) const;
  void put(const std::string& key, Vector value);
  std::size_t size() const;
  void clear_memory();

  /// Persists entries not yet on disk and rewrites the index.
  void save(const std::filesystem::path& dir);
  /// Merges the on-disk entries into memory.
  void load(const std::filesystem::path& dir);

private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, Vector> entries_;
};

struct EmbedOptions {
  std::size_t batch_size = 64;
  int max_retries = 3;
  std::size_t max_in_flight = 4;
};

/// Cache hits bypass the client; misses are deduplicated and batched; ""
/// maps to the zero vector without touching client or cache.
/// Throws EmbeddingError on a dimension mismatch and RetriesExhausted when a
/// batch keeps failing.
std::vector<Vector> embed_texts(EmbedderClient& client, std::span<const std::string> texts, VectorCache& cache,
                                const EmbedOptions& options = {});

struct PaperVector {
  std::string paper_id;
  std::size_t per_text_dimension = 0;
  Vector values;  // per_text_dimension * |C'| entries, blocks in C' order
};

void l2_normalize(Vector& v);

/// Embeds the C' texts, L2-normalizes each block and concatenates them.
PaperVector embed_paper(const std::string& paper_id, const ContributionSet& set, const ContributionType& type,
                        EmbedderClient& client, VectorCache& cache, const EmbedOptions& options = {});

/// Batched version over many papers; one embed_texts call for all texts.
std::map<std::string, PaperVector> embed_papers(const std::map<std::string, ContributionSet>& sets,
                                                const ContributionType& type, EmbedderClient& client,
                                                VectorCache& cache, const EmbedOptions& options = {});

/// Line-delimited {"paper_id", "kind", "dimensions", "per_text_dimension", "values"}.
void save_vectors(const std::map<std::string, PaperVector>& vectors, const ContributionType& type,
                  const std::filesystem::path& path);
std::map<std::string, PaperVector> load_vectors(const std::filesystem::path& path);

}  // namespace scihier
