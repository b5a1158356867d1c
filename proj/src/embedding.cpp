#include "scihier/embedding.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <set>

namespace scihier {

using nlohmann::json;
using nlohmann::ordered_json;

void l2_normalize(Vector& v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  if (sum <= 0.0) return;
  const double inv = 1.0 / std::sqrt(sum);
  for (double& x : v) x *= inv;
}

namespace {

Vector hashed_unit_vector(std::uint64_t seed, std::size_t dimension) {
  Rng rng(seed);
  Vector v(dimension);
  for (double& x : v) x = 2.0 * rng.uniform01() - 1.0;
  l2_normalize(v);
  return v;
}

}  // namespace

MockEmbedder::MockEmbedder(std::size_t dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {
  if (dimension == 0) throw InvalidArgument("embedding dimension must be positive");
}

std::string MockEmbedder::model_tag() const {
  return "d" + std::to_string(dimension_) + "-s" + std::to_string(seed_);
}

std::vector<Vector> MockEmbedder::embed_batch(std::span<const std::string> texts) {
  ++batches_;
  texts_ += texts.size();
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(hashed_unit_vector(combine_seed(seed_, fnv1a64(t)), dimension_));
  return out;
}

LexicalEmbedder::LexicalEmbedder(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
  if (dimension == 0) throw InvalidArgument("embedding dimension must be positive");
}

std::string LexicalEmbedder::model_tag() const {
  return "d" + std::to_string(dimension_) + "-s" + std::to_string(seed_);
}

std::vector<Vector> LexicalEmbedder::embed_batch(std::span<const std::string> texts) {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    Vector acc(dimension_, 0.0);
    std::string word;
    auto flush = [&] {
      if (word.size() >= 3) {
        const auto w = hashed_unit_vector(combine_seed(seed_, fnv1a64(word)), dimension_);
        for (std::size_t i = 0; i < dimension_; ++i) acc[i] += w[i];
      }
      word.clear();
    };
    for (char c : text) {
      if (std::isalnum(static_cast<unsigned char>(c)))
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      else
        flush();
    }
    flush();
    l2_normalize(acc);
    out.push_back(std::move(acc));
  }
  return out;
}

std::string VectorCache::key_for(const EmbedderClient& client, std::string_view text) {
  std::string material = client.name();
  material += '\x1f';
  material += client.model_tag();
  material += '\x1f';
  material += text;
  return sha256_hex(material);
}

std::optional<Vector> VectorCache::get(const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void VectorCache::put(const std::string& key, Vector value) {
  std::unique_lock lock(mutex_);
  entries_.insert_or_assign(key, std::move(value));
}

std::size_t VectorCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

void VectorCache::clear_memory() {
  std::unique_lock lock(mutex_);
  entries_.clear();
}

namespace {

json read_index(const std::filesystem::path& dir) {
  const auto path = dir / "index.json";
  if (!std::filesystem::exists(path)) return json{{"entries", json::object()}};
  std::ifstream in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("vector cache index: " + std::string(e.what()));
  }
}

}  // namespace

void VectorCache::save(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json index = read_index(dir);
  auto& on_disk = index["entries"];
  const auto bin = dir / "vectors.bin";
  std::uint64_t offset = std::filesystem::exists(bin) ? std::filesystem::file_size(bin) : 0;

  std::shared_lock lock(mutex_);
  std::set<std::string> pending;
  for (const auto& [key, _] : entries_)
    if (!on_disk.contains(key)) pending.insert(key);
  std::ofstream out(bin, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot write " + bin.string());
  for (const auto& key : pending) {
    const auto& v = entries_.at(key);
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    on_disk[key] = {{"offset", offset}, {"dimension", v.size()}};
    offset += v.size() * sizeof(double);
  }
  out.close();
  std::ofstream idx(dir / "index.json", std::ios::binary);
  idx << index.dump() << '\n';
}

void VectorCache::load(const std::filesystem::path& dir) {
  const json index = read_index(dir);
  const auto bin = dir / "vectors.bin";
  if (index.at("entries").empty()) return;
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw NotFound("missing " + bin.string());
  std::unique_lock lock(mutex_);
  for (auto it = index.at("entries").begin(); it != index.at("entries").end(); ++it) {
    const auto offset = it.value().at("offset").get<std::uint64_t>();
    const auto dim = it.value().at("dimension").get<std::size_t>();
    Vector v(dim);
    in.seekg(static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(dim * sizeof(double)));
    if (!in) throw ParseError("truncated vector cache entry " + it.key());
    entries_.insert_or_assign(it.key(), std::move(v));
  }
}

std::vector<Vector> embed_texts(EmbedderClient& client, std::span<const std::string> texts, VectorCache& cache,
                                const EmbedOptions& options) {
  const std::size_t d = client.dimension();
  std::vector<Vector> out(texts.size());
  // Unique misses, in first-occurrence order.
  std::vector<std::string> miss_texts;
  std::vector<std::string> miss_keys;
  std::map<std::string, std::size_t> miss_slot;
  std::vector<std::string> keys(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (texts[i].empty()) {
      out[i] = Vector(d, 0.0);
      continue;
    }
    keys[i] = VectorCache::key_for(client, texts[i]);
    if (auto hit = cache.get(keys[i])) {
      out[i] = std::move(*hit);
      continue;
    }
    if (miss_slot.emplace(keys[i], miss_texts.size()).second) {
      miss_texts.push_back(texts[i]);
      miss_keys.push_back(keys[i]);
    }
  }

  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  const std::size_t batches = (miss_texts.size() + batch - 1) / batch;
  parallel_for(batches, options.max_in_flight, [&](std::size_t b) {
    const std::size_t begin = b * batch;
    const std::size_t count = std::min(batch, miss_texts.size() - begin);
    std::span<const std::string> slice(miss_texts.data() + begin, count);
    std::vector<Vector> vectors;
    for (int attempt = 0;; ++attempt) {
      try {
        vectors = client.embed_batch(slice);
        break;
      } catch (const TransientError& e) {
        if (attempt >= options.max_retries)
          throw RetriesExhausted(std::string("embedding batch failed: ") + e.what(), attempt + 1);
      }
    }
    if (vectors.size() != count)
      throw EmbeddingError(client.name() + " returned " + std::to_string(vectors.size()) + " vectors for " +
                           std::to_string(count) + " texts");
    for (std::size_t i = 0; i < count; ++i) {
      if (vectors[i].size() != d)
        throw EmbeddingError(client.name() + " returned a vector of dimension " +
                             std::to_string(vectors[i].size()) + ", expected " + std::to_string(d));
      for (double x : vectors[i])
        if (!std::isfinite(x)) throw EmbeddingError(client.name() + " returned a non-finite value");
      cache.put(miss_keys[begin + i], vectors[i]);
    }
  });

  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (texts[i].empty() || !out[i].empty()) continue;
    out[i] = *cache.get(keys[i]);
  }
  return out;
}

namespace {

PaperVector assemble(const std::string& id, std::span<const Vector> blocks, std::size_t d) {
  PaperVector pv;
  pv.paper_id = id;
  pv.per_text_dimension = d;
  pv.values.reserve(d * blocks.size());
  for (auto block : blocks) {
    l2_normalize(block);
    pv.values.insert(pv.values.end(), block.begin(), block.end());
  }
  return pv;
}

}  // namespace

PaperVector embed_paper(const std::string& paper_id, const ContributionSet& set, const ContributionType& type,
                        EmbedderClient& client, VectorCache& cache, const EmbedOptions& options) {
  const auto texts = select_dimensions(set, type);
  const auto vectors = embed_texts(client, texts, cache, options);
  return assemble(paper_id, vectors, client.dimension());
}

std::map<std::string, PaperVector> embed_papers(const std::map<std::string, ContributionSet>& sets,
                                                const ContributionType& type, EmbedderClient& client,
                                                VectorCache& cache, const EmbedOptions& options) {
  std::vector<std::string> texts;
  std::size_t per_paper = 0;
  for (const auto& [id, set] : sets) {
    auto t = select_dimensions(set, type);
    per_paper = t.size();
    texts.insert(texts.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
  }
  const auto vectors = embed_texts(client, texts, cache, options);
  std::map<std::string, PaperVector> out;
  std::size_t i = 0;
  for (const auto& [id, set] : sets) {
    out.emplace(id, assemble(id, std::span<const Vector>(vectors.data() + i, per_paper), client.dimension()));
    i += per_paper;
  }
  return out;
}

void save_vectors(const std::map<std::string, PaperVector>& vectors, const ContributionType& type,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& [id, pv] : vectors) {
    ordered_json j;
    j["paper_id"] = id;
    j["kind"] = kind_name(type.kind());
    j["dimensions"] = type.dimensions();
    j["per_text_dimension"] = pv.per_text_dimension;
    j["values"] = pv.values;
    out << j.dump() << '\n';
  }
}

std::map<std::string, PaperVector> load_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open vectors file " + path.string());
  std::map<std::string, PaperVector> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      PaperVector pv;
      pv.paper_id = j.at("paper_id").get<std::string>();
      pv.per_text_dimension = j.at("per_text_dimension").get<std::size_t>();
      pv.values = j.at("values").get<Vector>();
      const std::string id = pv.paper_id;
      if (!out.emplace(id, std::move(pv)).second) throw DuplicateIdError(id);
    } catch (const json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

}  // namespace scihier
