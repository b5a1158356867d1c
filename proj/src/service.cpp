#include "scihier/service.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <httplib.h>

#include "scihier/prompts.hpp"

namespace scihier {

using nlohmann::ordered_json;

namespace {

HttpResponse json_response(int status, const ordered_json& body) { return {status, body.dump(2) + "\n", "application/json"}; }

HttpResponse error_response(int status, const std::string& message) {
  ordered_json j;
  j["error"] = message;
  j["status"] = status;
  return json_response(status, j);
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(httplib::detail::decode_url(cur, false));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) parts.push_back(httplib::detail::decode_url(cur, false));
  return parts;
}

std::optional<std::string> query_value(const std::multimap<std::string, std::string>& q, const std::string& key) {
  auto it = q.find(key);
  if (it == q.end()) return std::nullopt;
  return it->second;
}

std::string content_type_for(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

}  // namespace

std::string build_id_from_path(const std::filesystem::path& path) {
  std::string stem = path.stem().string();
  std::string out;
  for (char c : stem) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' ? c : '-');
  return out.empty() ? "build" : out;
}

HierarchyService::HierarchyService(std::vector<ServiceBuild> builds, std::optional<Corpus> corpus,
                                   std::optional<std::filesystem::path> ui_dir)
    : builds_(std::move(builds)), corpus_(std::move(corpus)), ui_dir_(std::move(ui_dir)) {
  if (builds_.empty()) throw InvalidArgument("the service needs at least one hierarchy");
  for (std::size_t i = 0; i < builds_.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (builds_[i].id == builds_[j].id) throw InvalidArgument("duplicate build id \"" + builds_[i].id + "\"");
  for (const auto& b : builds_) {
    b.hierarchy.validate();
    // Subtree paper counts, deepest nodes first.
    std::map<std::string, std::set<std::string>> papers;
    auto order = b.hierarchy.bfs_order();
    std::map<std::string, std::size_t> counts;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const auto& n = b.hierarchy.node(*it);
      auto& mine = papers[n.id];
      mine.insert(n.paper_ids.begin(), n.paper_ids.end());
      for (const auto& c : n.children) {
        auto& theirs = papers[c];
        mine.insert(theirs.begin(), theirs.end());
        theirs.clear();
      }
      counts[n.id] = mine.size();
    }
    paper_counts_.push_back(std::move(counts));
  }
}

const ServiceBuild& HierarchyService::build(const std::string& id) const {
  for (const auto& b : builds_)
    if (b.id == id) return b;
  throw NotFound("unknown build \"" + id + "\"");
}

ordered_json HierarchyService::hierarchies() const {
  ordered_json list = ordered_json::array();
  for (std::size_t i = 0; i < builds_.size(); ++i) {
    const auto& h = builds_[i].hierarchy;
    const auto stats = tree_stats(h);
    ordered_json b;
    b["id"] = builds_[i].id;
    b["kind"] = h.meta.value("kind", "hierarchy");
    std::string type = "topic";
    if (h.meta.contains("config") && h.meta.at("config").contains("contribution_type"))
      type = h.meta.at("config").at("contribution_type").get<std::string>();
    else if (h.meta.contains("contribution_type"))
      type = h.meta.at("contribution_type").get<std::string>();
    b["contribution_type"] = type;
    b["root"] = h.root().id;
    b["depth"] = stats.depth;
    b["node_count"] = stats.node_count;
    b["paper_count"] = stats.paper_count;
    b["layer_widths"] = stats.layer_widths;
    list.push_back(b);
  }
  ordered_json j;
  j["builds"] = list;
  return j;
}

ordered_json HierarchyService::breadcrumb(const Hierarchy& h, const std::string& id) const {
  ordered_json crumbs = ordered_json::array();
  for (const auto& step : h.path_to(id)) {
    const auto& n = h.node(step);
    crumbs.push_back({{"id", n.id}, {"name", n.cluster_name}, {"layer", n.layer}});
  }
  return crumbs;
}

ordered_json HierarchyService::node_view(const std::string& build_id, const std::string& id) const {
  const auto& b = build(build_id);
  const auto index = static_cast<std::size_t>(&b - builds_.data());
  const auto& h = b.hierarchy;
  const auto& n = h.node(id);
  const auto& counts = paper_counts_[index];
  ordered_json v;
  v["build"] = b.id;
  v["id"] = n.id;
  v["name"] = n.cluster_name;
  v["layer"] = n.layer;
  v["summary"] = n.summary;
  v["paper_count"] = counts.at(n.id);
  v["breadcrumb"] = breadcrumb(h, n.id);
  std::vector<std::pair<std::size_t, std::size_t>> order;  // (count, position)
  for (std::size_t i = 0; i < n.children.size(); ++i) order.emplace_back(counts.at(n.children[i]), i);
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& c) { return a.first > c.first; });
  ordered_json children = ordered_json::array();
  for (const auto& [count, i] : order) {
    const auto& c = h.node(n.children[i]);
    children.push_back({{"id", c.id}, {"name", c.cluster_name}, {"paper_count", count}, {"has_children", !c.children.empty()}});
  }
  v["children"] = children;
  ordered_json papers = ordered_json::array();
  for (const auto& pid : n.paper_ids) {
    ordered_json p;
    p["id"] = pid;
    const auto* rec = corpus_ ? corpus_->find(pid) : nullptr;
    p["title"] = rec ? rec->title : pid;
    p["year"] = rec ? ordered_json(rec->year) : ordered_json(nullptr);
    papers.push_back(p);
  }
  v["papers"] = papers;
  return v;
}

ordered_json HierarchyService::search(const std::string& build_id, const std::string& q, std::size_t limit) const {
  const auto& b = build(build_id);
  const std::string needle = to_lower(trim(q));
  if (needle.empty()) throw InvalidArgument("query parameter q must be non-empty");
  ordered_json hits = ordered_json::array();
  std::size_t total = 0;
  for (const auto& id : b.hierarchy.bfs_order()) {
    const auto& n = b.hierarchy.node(id);
    for (const auto& pid : n.paper_ids) {
      const auto* rec = corpus_ ? corpus_->find(pid) : nullptr;
      const std::string title = rec ? rec->title : pid;
      if (to_lower(title).find(needle) == std::string::npos) continue;
      ++total;
      if (hits.size() >= limit) continue;
      ordered_json hit;
      hit["paper_id"] = pid;
      hit["title"] = title;
      hit["year"] = rec ? ordered_json(rec->year) : ordered_json(nullptr);
      hit["node_id"] = n.id;
      hit["breadcrumb"] = breadcrumb(b.hierarchy, n.id);
      hits.push_back(hit);
    }
  }
  ordered_json j;
  j["build"] = b.id;
  j["query"] = q;
  j["total"] = total;
  j["hits"] = hits;
  return j;
}

ordered_json HierarchyService::paper(const std::string& id) const {
  const auto* rec = corpus_ ? corpus_->find(id) : nullptr;
  ordered_json paths = ordered_json::object();
  for (const auto& b : builds_) {
    ordered_json locations = ordered_json::array();
    for (const auto& n : b.hierarchy.nodes())
      if (std::find(n.paper_ids.begin(), n.paper_ids.end(), id) != n.paper_ids.end())
        locations.push_back(breadcrumb(b.hierarchy, n.id));
    if (!locations.empty()) paths[b.id] = locations;
  }
  if (!rec && paths.empty()) throw NotFound("unknown paper \"" + id + "\"");
  ordered_json j;
  j["id"] = id;
  j["record"] = rec ? to_json(*rec) : ordered_json(nullptr);
  j["paths"] = paths;
  return j;
}

HttpResponse HierarchyService::static_file(const std::string& rel) const {
  if (!ui_dir_) {
    return {404, "<!doctype html><title>Explorer not installed</title><p>The explorer assets are not installed. "
                 "The JSON API is available at <a href=\"/hierarchies\">/hierarchies</a>.</p>\n",
            "text/html; charset=utf-8"};
  }
  if (rel.find("..") != std::string::npos) return error_response(400, "invalid asset path");
  auto path = *ui_dir_ / (rel.empty() ? "index.html" : rel);
  if (std::filesystem::is_directory(path)) path /= "index.html";
  std::ifstream in(path, std::ios::binary);
  if (!in) return error_response(404, "no such asset " + rel);
  std::ostringstream ss;
  ss << in.rdbuf();
  return {200, ss.str(), content_type_for(path)};
}

HttpResponse HierarchyService::handle(const std::string& method, const std::string& path,
                                      const std::multimap<std::string, std::string>& query) const {
  if (method != "GET" && method != "HEAD") return error_response(405, "the API is read-only");
  const auto parts = split_path(path);
  try {
    if (!parts.empty() && parts[0] == "ui") {
      std::string rel;
      for (std::size_t i = 1; i < parts.size(); ++i) rel += (i > 1 ? "/" : "") + parts[i];
      return static_file(rel);
    }
    if (parts.size() == 1 && parts[0] == "hierarchies") return json_response(200, hierarchies());
    if (parts.size() == 2 && parts[0] == "api" && parts[1] == "schema.json")
      return {200, std::string(embedded_asset("api/schema.json")), "application/json"};
    if (parts.size() == 3 && parts[0] == "node") return json_response(200, node_view(parts[1], parts[2]));
    if (parts[0] == "search" && parts.size() <= 2) {
      const auto q = query_value(query, "q");
      if (!q || trim(*q).empty()) return error_response(400, "missing or empty query parameter q");
      std::size_t limit = 50;
      if (auto l = query_value(query, "limit")) {
        auto [ptr, ec] = std::from_chars(l->data(), l->data() + l->size(), limit);
        if (ec != std::errc() || ptr != l->data() + l->size() || limit == 0 || limit > 1000)
          return error_response(400, "limit must be an integer in [1, 1000]");
      }
      const std::string b = parts.size() == 2 ? parts[1] : query_value(query, "build").value_or(builds_.front().id);
      return json_response(200, search(b, *q, limit));
    }
    if (parts.size() == 2 && parts[0] == "paper") return json_response(200, paper(parts[1]));
  } catch (const NotFound& e) {
    return error_response(404, e.what());
  } catch (const InvalidArgument& e) {
    return error_response(400, e.what());
  }
  return error_response(404, "no route for " + path);
}

struct HttpServer::Impl {
  const HierarchyService& service;
  httplib::Server server;
};

HttpServer::HttpServer(const HierarchyService& service) : impl_(new Impl{service, {}}) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    std::multimap<std::string, std::string> query(req.params.begin(), req.params.end());
    const auto r = impl_->service.handle(req.method, req.path, query);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  impl_->server.Get(".*", handler);
  auto deny = [](const httplib::Request&, httplib::Response& res) {
    res.status = 405;
    res.set_content("{\"error\": \"the API is read-only\", \"status\": 405}\n", "application/json");
  };
  impl_->server.Post(".*", deny);
  impl_->server.Put(".*", deny);
  impl_->server.Delete(".*", deny);
  impl_->server.Patch(".*", deny);
}

HttpServer::~HttpServer() { stop(); }

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int HttpServer::bind_any(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool HttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace scihier
