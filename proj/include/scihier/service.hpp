#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scihier/corpus.hpp"
#include "scihier/hierarchy.hpp"

namespace scihier {

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

struct ServiceBuild {
  std::string id;  // URL-safe build name, e.g. "problem-2k"
  Hierarchy hierarchy;
};

/// Read-only JSON API over immutable hierarchy files. All handlers are pure
/// functions of (builds, corpus, request), so concurrent use is safe.
///
///   GET /hierarchies                     builds and their contribution types
///   GET /node/{build}/{id}               NodeView ("root" aliases the root id)
///   GET /search/{build}?q=...[&limit=N]  case-insensitive title substring hits
///   GET /search?q=...[&build=...]        same, default build when omitted
///   GET /paper/{id}                      record and its path in every build
///   GET /api/schema.json                 the endpoint schema
///   GET /ui, /ui/...                     explorer static assets
class HierarchyService {
public:
  HierarchyService(std::vector<ServiceBuild> builds, std::optional<Corpus> corpus = std::nullopt,
                   std::optional<std::filesystem::path> ui_dir = std::nullopt);

  HttpResponse handle(const std::string& method, const std::string& path,
                      const std::multimap<std::string, std::string>& query = {}) const;

  nlohmann::ordered_json hierarchies() const;
  /// Throws NotFound.
  nlohmann::ordered_json node_view(const std::string& build, const std::string& id) const;
  /// Throws NotFound (build) or InvalidArgument (empty query).
  nlohmann::ordered_json search(const std::string& build, const std::string& q, std::size_t limit = 50) const;
  /// Throws NotFound.
  nlohmann::ordered_json paper(const std::string& id) const;

  const std::vector<ServiceBuild>& builds() const noexcept { return builds_; }

private:
  const ServiceBuild& build(const std::string& id) const;
  nlohmann::ordered_json breadcrumb(const Hierarchy& h, const std::string& id) const;
  HttpResponse static_file(const std::string& rel) const;

  std::vector<ServiceBuild> builds_;
  std::optional<Corpus> corpus_;
  std::optional<std::filesystem::path> ui_dir_;
  // Per build: node id -> distinct papers in its subtree.
  std::vector<std::map<std::string, std::size_t>> paper_counts_;
};

/// Build id from a hierarchy file name ("out/problem.json" -> "problem").
std::string build_id_from_path(const std::filesystem::path& path);

/// Blocks serving the API on host:port until stop() is called from another
/// thread (or the process ends).
class HttpServer {
public:
  explicit HttpServer(const HierarchyService& service);
  ~HttpServer();
  /// Returns false if the address could not be bound.
  bool listen(const std::string& host, int port);
  /// Binds to an ephemeral port; returns it (or -1).
  int bind_any(const std::string& host);
  bool listen_after_bind();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace scihier
