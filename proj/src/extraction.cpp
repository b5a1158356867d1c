#include "scihier/extraction.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <set>

#include "scihier/json_text.hpp"
#include "scihier/prompts.hpp"

namespace scihier {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view kind_name(ContributionKind kind) {
  switch (kind) {
    case ContributionKind::problem: return "problem";
    case ContributionKind::solution: return "solution";
    case ContributionKind::result: return "result";
    case ContributionKind::topic: return "topic";
  }
  return "problem";
}

std::string_view kind_label(ContributionKind kind) {
  switch (kind) {
    case ContributionKind::problem: return "Problem";
    case ContributionKind::solution: return "Solution";
    case ContributionKind::result: return "Result";
    case ContributionKind::topic: return "Topic";
  }
  return "Problem";
}

ContributionKind parse_kind(std::string_view name) {
  const std::string n = to_lower(name);
  for (auto k : kAllKinds)
    if (kind_name(k) == n) return k;
  if (n == "topics") return ContributionKind::topic;
  if (n == "results") return ContributionKind::result;
  throw InvalidArgument("unknown contribution type \"" + std::string(name) + "\"");
}

const std::vector<std::string>& schema_fields(ContributionKind kind) {
  static const std::vector<std::string> problem = {"overarching_problem_domain", "challenges_difficulties",
                                                   "research_question_goal"};
  static const std::vector<std::string> solution = {"overarching_solution_domain", "solution_approach",
                                                    "novelty_of_the_solution"};
  static const std::vector<std::string> result = {"findings_results", "potential_impact_of_the_results"};
  static const std::vector<std::string> topic = {"topics"};
  switch (kind) {
    case ContributionKind::problem: return problem;
    case ContributionKind::solution: return solution;
    case ContributionKind::result: return result;
    case ContributionKind::topic: return topic;
  }
  return problem;
}

std::size_t schema_dimension_count() {
  std::size_t n = 0;
  for (auto k : kAllKinds) n += schema_fields(k).size();
  return n;
}

std::string normalize_key(std::string_view key) {
  std::string out;
  bool pending = false;
  for (char c : trim(key)) {
    if (c == ' ' || c == '/' || c == '-' || c == '_' || c == '\t') {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back('_');
    pending = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

ContributionSet::ContributionSet() {
  for (const auto& f : schema_fields(ContributionKind::problem)) problem[f];
  for (const auto& f : schema_fields(ContributionKind::solution)) solution[f];
  for (const auto& f : schema_fields(ContributionKind::result)) result[f];
}

const std::map<std::string, std::string>& ContributionSet::section(ContributionKind kind) const {
  switch (kind) {
    case ContributionKind::solution: return solution;
    case ContributionKind::result: return result;
    default: return problem;
  }
}

std::map<std::string, std::string>& ContributionSet::section(ContributionKind kind) {
  return const_cast<std::map<std::string, std::string>&>(std::as_const(*this).section(kind));
}

void add_topic(ContributionSet& set, std::string topic) {
  topic = join(split_whitespace(topic), " ");
  if (topic.empty()) return;
  const auto norm = normalize_phrase(topic);
  for (const auto& t : set.topics)
    if (normalize_phrase(t) == norm) return;
  set.topics.push_back(std::move(topic));
}

ordered_json to_json(const ContributionSet& set) {
  ordered_json j;
  for (auto kind : {ContributionKind::problem, ContributionKind::solution, ContributionKind::result}) {
    ordered_json body = ordered_json::object();
    for (const auto& f : schema_fields(kind)) body[f] = set.section(kind).at(f);
    j[std::string(kind_name(kind))] = body;
  }
  j["topics"] = set.topics;
  j["rationale"] = set.rationale;
  return j;
}

namespace {

std::string scalar_text(const json& v, const std::string& key) {
  if (v.is_null()) return {};
  if (!v.is_string()) throw SchemaError("field \"" + key + "\" must be a string", key);
  return trim(v.get<std::string>());
}

// Normalized key -> original key; rejects collisions.
std::map<std::string, std::string> normalized_keys(const json& obj, const std::string& where) {
  if (!obj.is_object()) throw SchemaError(where + " must be a JSON object", where);
  std::map<std::string, std::string> out;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    auto norm = normalize_key(it.key());
    if (!out.emplace(norm, it.key()).second)
      throw SchemaError("duplicate key \"" + it.key() + "\" in " + where, it.key());
  }
  return out;
}

void read_section(const json& obj, ContributionKind kind, ContributionSet& set) {
  const std::string where(kind_name(kind));
  const auto keys = normalized_keys(obj, where);
  const auto& fields = schema_fields(kind);
  for (const auto& [norm, original] : keys)
    if (std::find(fields.begin(), fields.end(), norm) == fields.end())
      throw SchemaError("unknown key \"" + original + "\" in " + where, original);
  for (const auto& f : fields) {
    auto it = keys.find(f);
    if (it == keys.end()) throw SchemaError("missing key \"" + f + "\" in " + where, f);
    set.section(kind)[f] = scalar_text(obj.at(it->second), f);
  }
}

void read_topics(const json& v, ContributionSet& set) {
  if (!v.is_array()) throw SchemaError("\"topics\" must be an array of strings", "topics");
  for (const auto& t : v) {
    if (!t.is_string()) throw SchemaError("\"topics\" must be an array of strings", "topics");
    add_topic(set, t.get<std::string>());
  }
}

}  // namespace

ContributionSet validate_contribution_json(std::string_view text, ContributionPart part) {
  const json doc = parse_json_payload(text);
  ContributionSet set;
  switch (part) {
    case ContributionPart::problem: read_section(doc, ContributionKind::problem, set); return set;
    case ContributionPart::solution: read_section(doc, ContributionKind::solution, set); return set;
    case ContributionPart::result: read_section(doc, ContributionKind::result, set); return set;
    case ContributionPart::topic:
      if (doc.is_array()) {
        read_topics(doc, set);
        return set;
      }
      {
        const auto keys = normalized_keys(doc, "topic");
        for (const auto& [norm, original] : keys)
          if (norm != "topics" && norm != "rationale")
            throw SchemaError("unknown key \"" + original + "\" in topic", original);
        if (!keys.count("topics")) throw SchemaError("missing key \"topics\"", "topics");
        read_topics(doc.at(keys.at("topics")), set);
        if (keys.count("rationale")) set.rationale = scalar_text(doc.at(keys.at("rationale")), "rationale");
      }
      return set;
    case ContributionPart::all: break;
  }

  const auto keys = normalized_keys(doc, "contribution document");
  static const std::set<std::string> allowed = {"problem", "solution", "result", "topics", "rationale"};
  for (const auto& [norm, original] : keys)
    if (!allowed.count(norm)) throw SchemaError("unknown key \"" + original + "\"", original);
  for (const auto& k : allowed)
    if (!keys.count(k)) throw SchemaError("missing key \"" + k + "\"", k);
  read_section(doc.at(keys.at("problem")), ContributionKind::problem, set);
  read_section(doc.at(keys.at("solution")), ContributionKind::solution, set);
  read_section(doc.at(keys.at("result")), ContributionKind::result, set);
  read_topics(doc.at(keys.at("topics")), set);
  set.rationale = scalar_text(doc.at(keys.at("rationale")), "rationale");
  return set;
}

ContributionType::ContributionType(ContributionKind kind) : kind_(kind), dims_(schema_fields(kind)) {}

ContributionType::ContributionType(ContributionKind kind, std::vector<std::string> dims) : kind_(kind) {
  if (dims.empty()) throw InvalidArgument("selected dimensions must be non-empty");
  const auto& fields = schema_fields(kind);
  std::set<std::string> seen;
  for (auto& d : dims) {
    auto norm = normalize_key(d);
    if (std::find(fields.begin(), fields.end(), norm) == fields.end())
      throw InvalidArgument("\"" + d + "\" is not a " + std::string(kind_name(kind)) + " field");
    if (!seen.insert(norm).second) throw InvalidArgument("duplicate dimension \"" + d + "\"");
    dims_.push_back(std::move(norm));
  }
}

std::vector<std::string> select_dimensions(const ContributionSet& set, const ContributionType& type) {
  std::vector<std::string> out;
  if (type.kind() == ContributionKind::topic) {
    out.push_back(join(set.topics, "; "));
    return out;
  }
  const auto& section = set.section(type.kind());
  for (const auto& d : type.dimensions()) out.push_back(section.at(d));
  return out;
}

std::string_view variant_name(PromptVariant v) {
  return v == PromptVariant::detailed ? "detailed" : "simplified";
}

PromptVariant parse_variant(std::string_view name) {
  if (name == "detailed") return PromptVariant::detailed;
  if (name == "simplified") return PromptVariant::simplified;
  throw InvalidArgument("unknown prompt variant \"" + std::string(name) + "\"");
}

ContributionSet extract_contributions(const PaperRecord& paper, Gateway& gateway, PromptVariant variant,
                                      ExtractionStats* stats) {
  if (trim(paper.title).empty()) throw InvalidArgument("paper " + paper.id + " has an empty title");
  const auto tmpl = embedded_asset(variant == PromptVariant::detailed ? "prompts/extract_detailed.txt"
                                                                      : "prompts/extract_simplified.txt");
  const std::string prompt = render_template(tmpl, {{"title", paper.title}, {"abstract", paper.abstract}});
  json meta = {{"kind", "contributions"}, {"paper_id", paper.id}, {"title", paper.title},
               {"abstract", paper.abstract}};
  for (auto kind : {ContributionKind::problem, ContributionKind::solution, ContributionKind::result})
    meta["schema"][std::string(kind_name(kind))] = schema_fields(kind);

  std::string response = gateway.chat(Role::extractor, prompt, {}, meta);
  try {
    return validate_contribution_json(response);
  } catch (const Error& first) {
    if (stats) ++stats->schema_retries;
    const std::string repair =
        prompt + "\n\n" + render_template(embedded_asset("prompts/json_reminder.txt"), {{"error", first.what()}});
    response = gateway.chat(Role::extractor, repair, {}, meta);
    try {
      return validate_contribution_json(response);
    } catch (const SchemaError& e) {
      throw SchemaError("paper " + paper.id + ": schema-invalid response after 1 retry: " + e.what(), e.key());
    } catch (const ParseError& e) {
      throw ParseError("paper " + paper.id + ": unparsable response after 1 retry: " + e.what());
    }
  }
}

ExtractionBatch extract_all(const Corpus& corpus, Gateway& gateway, PromptVariant variant,
                            std::size_t max_in_flight) {
  std::vector<std::optional<ContributionSet>> results(corpus.size());
  std::vector<std::string> errors(corpus.size());
  std::vector<int> retries(corpus.size(), 0);
  parallel_for(corpus.size(), max_in_flight, [&](std::size_t i) {
    ExtractionStats stats;
    try {
      results[i] = extract_contributions(corpus[i], gateway, variant, &stats);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
    retries[i] = stats.schema_retries;
  });
  ExtractionBatch batch;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    batch.schema_retries += retries[i];
    if (results[i])
      batch.sets.emplace(corpus[i].id, std::move(*results[i]));
    else
      batch.failures.push_back({corpus[i].id, errors[i]});
  }
  return batch;
}

void save_contributions(const std::map<std::string, ContributionSet>& sets,
                        const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& [id, set] : sets) {
    ordered_json line;
    line["paper_id"] = id;
    line["contributions"] = to_json(set);
    out << line.dump() << '\n';
  }
}

std::map<std::string, ContributionSet> load_contributions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open contributions file " + path.string());
  std::map<std::string, ContributionSet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      const auto id = j.at("paper_id").get<std::string>();
      if (!out.emplace(id, validate_contribution_json(j.at("contributions").dump())).second)
        throw DuplicateIdError(id);
    } catch (const json::exception& e) {
      throw ParseError(e.what(), line_no);
    } catch (const SchemaError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

KeywordProvider llm_keyword_provider(Gateway& gateway, std::size_t count) {
  return [&gateway, count](const PaperRecord& paper) {
    const std::string prompt =
        render_template(embedded_asset("prompts/keywords.txt"),
                        {{"count", std::to_string(count)}, {"title", paper.title}, {"abstract", paper.abstract}});
    json meta = {{"kind", "keywords"}, {"title", paper.title}, {"count", count}};
    const json doc = parse_json_payload(gateway.chat(Role::extractor, prompt, {}, meta));
    if (!doc.is_array()) throw SchemaError("keyword response must be a JSON array");
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& k : doc) {
      if (!k.is_string()) continue;
      auto t = trim(k.get<std::string>());
      if (!t.empty() && seen.insert(normalize_phrase(t)).second) out.push_back(t);
      if (out.size() == count) break;
    }
    return out;
  };
}

}  // namespace scihier
