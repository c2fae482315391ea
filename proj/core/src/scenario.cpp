#include "sou/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include "sou/error.hpp"

namespace sou {
namespace {

using Json = nlohmann::ordered_json;

// nlohmann/json keeps no source positions, so errors about well-formed JSON
// are located by finding the offending key in the raw text.
struct SourceText {
  std::string_view text;

  std::pair<std::size_t, std::size_t> line_col(std::size_t offset) const {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    return {line, col};
  }

  [[noreturn]] void fail_at_key(const std::string& key, const std::string& msg) const {
    const std::string needle = "\"" + key + "\"";
    const auto pos = text.find(needle);
    if (pos == std::string_view::npos) throw ParseError(msg);
    const auto [line, col] = line_col(pos);
    throw ParseError(msg, line, col);
  }
};

void check_keys(const Json& obj, const std::set<std::string>& allowed, const std::string& where,
                const SourceText& src) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) {
      src.fail_at_key(key, "unknown key '" + key + "' in " + where);
    }
  }
}

std::string get_text(const Json& obj, const std::string& key, const std::string& where,
                     const SourceText& src) {
  if (!obj.contains(key)) return {};
  const auto& v = obj.at(key);
  if (!v.is_string()) src.fail_at_key(key, where + "." + key + " must be a string");
  return v.get<std::string>();
}

std::vector<std::string> get_text_list(const Json& obj, const std::string& key,
                                       const std::string& where, const SourceText& src) {
  std::vector<std::string> out;
  if (!obj.contains(key)) return out;
  const auto& v = obj.at(key);
  if (!v.is_array()) src.fail_at_key(key, where + "." + key + " must be an array of strings");
  for (const auto& item : v) {
    if (!item.is_string()) {
      src.fail_at_key(key, where + "." + key + " must be an array of strings");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::vector<ResourceDecl> get_resources(const Json& obj, const std::string& key,
                                        const std::string& where, const SourceText& src) {
  std::vector<ResourceDecl> out;
  if (!obj.contains(key)) return out;
  const auto& v = obj.at(key);
  const std::string path = where + "." + key;
  if (!v.is_array()) src.fail_at_key(key, path + " must be an array");
  for (const auto& item : v) {
    if (!item.is_object()) src.fail_at_key(key, path + " entries must be objects");
    check_keys(item, {"resource_id", "kind", "description", "declared_empty"}, path, src);
    ResourceDecl r;
    r.resource_id = get_text(item, "resource_id", path, src);
    const auto kind = get_text(item, "kind", path, src);
    const auto parsed = parse_resource_kind(kind);
    if (!parsed) src.fail_at_key("kind", "invalid resource kind '" + kind + "' in " + path);
    r.kind = *parsed;
    r.description = get_text(item, "description", path, src);
    if (item.contains("declared_empty")) {
      if (!item.at("declared_empty").is_boolean()) {
        src.fail_at_key("declared_empty", path + ".declared_empty must be a boolean");
      }
      r.declared_empty = item.at("declared_empty").get<bool>();
    }
    out.push_back(std::move(r));
  }
  return out;
}

Json resources_json(const std::vector<ResourceDecl>& rs) {
  Json arr = Json::array();
  for (const auto& r : rs) {
    Json o = Json::object();
    o["resource_id"] = r.resource_id;
    o["kind"] = std::string(to_string(r.kind));
    o["description"] = r.description;
    o["declared_empty"] = r.declared_empty;
    arr.push_back(std::move(o));
  }
  return arr;
}

void error(ValidationReport& r, std::string dim, std::string msg) {
  r.findings.push_back({Severity::error, std::move(dim), std::move(msg)});
}

void warning(ValidationReport& r, std::string dim, std::string msg) {
  r.findings.push_back({Severity::warning, std::move(dim), std::move(msg)});
}

void finish(ValidationReport& r) { r.complete = r.error_count() == 0; }

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

void validate_resources(ValidationReport& rep, const std::vector<ResourceDecl>& rs,
                        const std::string& dim) {
  if (rs.empty()) {
    error(rep, dim, "dimension omitted; list resources or declare the cell empty");
    return;
  }
  const auto n_empty =
      std::count_if(rs.begin(), rs.end(), [](const auto& r) { return r.declared_empty; });
  for (const auto& r : rs) {
    if (blank(r.resource_id)) error(rep, dim, "resource without resource_id");
    if (r.declared_empty && !r.description.empty()) {
      error(rep, dim, "resource '" + r.resource_id + "' is declared empty but has a description");
    }
    if (!r.declared_empty && blank(r.description)) {
      warning(rep, dim, "resource '" + r.resource_id + "' has no description");
    }
  }
  if (n_empty > 0 && static_cast<std::size_t>(n_empty) < rs.size()) {
    error(rep, dim, "declared-empty entry mixed with real resources");
  } else if (n_empty > 0) {
    warning(rep, dim, "resources declared empty");
  }
}

void validate_access(ValidationReport& rep, const std::vector<ResourceDecl>& access,
                     const std::string& dim) {
  std::set<std::string> seen;
  for (const auto& a : access) {
    if (blank(a.resource_id)) error(rep, dim, "access entry without resource_id");
    if (a.declared_empty) {
      error(rep, dim, "access entry '" + a.resource_id + "' cannot be declared empty");
    }
    if (!seen.insert(a.resource_id).second) {
      error(rep, dim, "duplicate access entry '" + a.resource_id + "'");
    }
  }
}

struct Grants {
  // resource_id -> declared empty?
  std::map<std::string, bool> attacker, protector;
  std::set<std::string> known;
};

Grants grants_of(const ScenarioOfUse& s) {
  Grants g;
  auto add = [&g](std::map<std::string, bool>& m, const std::vector<ResourceDecl>& rs) {
    for (const auto& r : rs) {
      m.emplace(r.resource_id, r.declared_empty);
      g.known.insert(r.resource_id);
    }
  };
  add(g.attacker, s.attacker.resources);
  add(g.attacker, s.attacker.access);
  add(g.protector, s.protector.resources);
  add(g.protector, s.protector.access);
  return g;
}

}  // namespace

std::string_view to_string(ResourceKind k) {
  switch (k) {
    case ResourceKind::data: return "data";
    case ResourceKind::model: return "model";
    case ResourceKind::compute: return "compute";
    case ResourceKind::knowledge: return "knowledge";
  }
  return "data";
}

std::optional<ResourceKind> parse_resource_kind(std::string_view s) {
  if (s == "data") return ResourceKind::data;
  if (s == "model") return ResourceKind::model;
  if (s == "compute") return ResourceKind::compute;
  if (s == "knowledge") return ResourceKind::knowledge;
  return std::nullopt;
}

std::string_view to_string(Party p) { return p == Party::attacker ? "attacker" : "protector"; }

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::train: return "train";
    case Phase::attack: return "attack";
    case Phase::protect: return "protect";
    case Phase::evaluate: return "evaluate";
  }
  return "train";
}

std::optional<Party> parse_party(std::string_view s) {
  if (s == "attacker") return Party::attacker;
  if (s == "protector") return Party::protector;
  return std::nullopt;
}

std::optional<Phase> parse_phase(std::string_view s) {
  if (s == "train") return Phase::train;
  if (s == "attack") return Phase::attack;
  if (s == "protect") return Phase::protect;
  if (s == "evaluate") return Phase::evaluate;
  return std::nullopt;
}

std::size_t ValidationReport::error_count() const {
  return static_cast<std::size_t>(std::count_if(
      findings.begin(), findings.end(), [](const auto& f) { return f.severity == Severity::error; }));
}

std::size_t ValidationReport::warning_count() const { return findings.size() - error_count(); }

ScenarioOfUse parse_scenario(std::string_view document) {
  const SourceText src{document};
  Json doc;
  try {
    doc = Json::parse(document.begin(), document.end());
  } catch (const Json::parse_error& e) {
    const auto [line, col] = src.line_col(e.byte == 0 ? 0 : e.byte - 1);
    throw ParseError("malformed scenario document: " + std::string(e.what()), line, col);
  }
  if (!doc.is_object()) throw ParseError("scenario document must be a JSON object", 1, 1);
  check_keys(doc, {"id", "attacker", "protector", "notes"}, "scenario", src);

  ScenarioOfUse s;
  s.id = get_text(doc, "id", "scenario", src);
  if (doc.contains("notes")) s.notes = get_text(doc, "notes", "scenario", src);

  if (doc.contains("attacker")) {
    const auto& a = doc.at("attacker");
    if (!a.is_object()) src.fail_at_key("attacker", "attacker must be an object");
    check_keys(a, {"objective", "opportunity", "resources", "access"}, "attacker", src);
    s.attacker.objective = get_text(a, "objective", "attacker", src);
    s.attacker.opportunity = get_text(a, "opportunity", "attacker", src);
    s.attacker.resources = get_resources(a, "resources", "attacker", src);
    s.attacker.access = get_resources(a, "access", "attacker", src);
  }
  if (doc.contains("protector")) {
    const auto& p = doc.at("protector");
    if (!p.is_object()) src.fail_at_key("protector", "protector must be an object");
    check_keys(p,
               {"defense_objectives", "utility_objectives", "opportunity", "resources", "access"},
               "protector", src);
    s.protector.defense_objectives = get_text_list(p, "defense_objectives", "protector", src);
    s.protector.utility_objectives = get_text_list(p, "utility_objectives", "protector", src);
    s.protector.opportunity = get_text(p, "opportunity", "protector", src);
    s.protector.resources = get_resources(p, "resources", "protector", src);
    s.protector.access = get_resources(p, "access", "protector", src);
  }
  return s;
}

std::string serialize_scenario(const ScenarioOfUse& s) {
  Json doc = Json::object();
  doc["id"] = s.id;

  Json a = Json::object();
  a["objective"] = s.attacker.objective;
  a["opportunity"] = s.attacker.opportunity;
  a["resources"] = resources_json(s.attacker.resources);
  if (!s.attacker.access.empty()) a["access"] = resources_json(s.attacker.access);
  doc["attacker"] = std::move(a);

  Json p = Json::object();
  p["defense_objectives"] = s.protector.defense_objectives;
  p["utility_objectives"] = s.protector.utility_objectives;
  p["opportunity"] = s.protector.opportunity;
  p["resources"] = resources_json(s.protector.resources);
  if (!s.protector.access.empty()) p["access"] = resources_json(s.protector.access);
  doc["protector"] = std::move(p);

  if (s.notes) doc["notes"] = *s.notes;
  return doc.dump(2) + "\n";
}

ValidationReport validate_scenario(const ScenarioOfUse& s) {
  ValidationReport rep;
  if (blank(s.id)) error(rep, "id", "scenario id is empty");

  if (blank(s.attacker.objective)) error(rep, "attacker.objective", "objective is empty");
  if (blank(s.attacker.opportunity)) error(rep, "attacker.opportunity", "opportunity is empty");
  validate_resources(rep, s.attacker.resources, "attacker.resources");
  validate_access(rep, s.attacker.access, "attacker.opportunity");

  const auto& pr = s.protector;
  if (pr.defense_objectives.empty()) {
    error(rep, "protector.objective", "missing defense objective");
  }
  if (pr.utility_objectives.empty()) {
    error(rep, "protector.objective", "missing utility objective");
  }
  for (const auto& d : pr.defense_objectives) {
    if (blank(d)) error(rep, "protector.objective", "blank defense objective");
    if (std::find(pr.utility_objectives.begin(), pr.utility_objectives.end(), d) !=
        pr.utility_objectives.end()) {
      error(rep, "protector.objective",
            "objective '" + d + "' is listed as both defense and utility objective");
    }
  }
  for (const auto& u : pr.utility_objectives) {
    if (blank(u)) error(rep, "protector.objective", "blank utility objective");
  }
  if (blank(pr.opportunity)) error(rep, "protector.opportunity", "opportunity is empty");
  validate_resources(rep, pr.resources, "protector.resources");
  validate_access(rep, pr.access, "protector.opportunity");

  // Resource ids are unique across both resource cells; access entries may
  // repeat an id but must agree on its kind.
  std::map<std::string, const ResourceDecl*> declared;
  for (const auto* list : {&s.attacker.resources, &pr.resources}) {
    for (const auto& r : *list) {
      if (!declared.emplace(r.resource_id, &r).second) {
        error(rep, "resources", "duplicate resource_id '" + r.resource_id + "'");
      }
    }
  }
  std::map<std::string, ResourceKind> access_kind;
  for (const auto* list : {&s.attacker.access, &pr.access}) {
    for (const auto& a : *list) {
      if (auto it = declared.find(a.resource_id); it != declared.end()) {
        if (it->second->declared_empty) {
          error(rep, "resources", "access to '" + a.resource_id + "', which is declared empty");
        } else if (it->second->kind != a.kind) {
          error(rep, "resources", "conflicting kinds for resource '" + a.resource_id + "'");
        }
      }
      auto [it, inserted] = access_kind.emplace(a.resource_id, a.kind);
      if (!inserted && it->second != a.kind) {
        error(rep, "resources", "conflicting kinds for resource '" + a.resource_id + "'");
      }
    }
  }
  finish(rep);
  return rep;
}

ValidationReport check_ledger(const ScenarioOfUse& s, const RunLedger& ledger) {
  ValidationReport rep;
  const Grants g = grants_of(s);
  for (std::size_t i = 0; i < ledger.entries.size(); ++i) {
    const auto& e = ledger.entries[i];
    const std::string dim = "ledger[" + std::to_string(i) + "]";
    const std::string who = std::string(to_string(e.party));
    const auto& mine = e.party == Party::attacker ? g.attacker : g.protector;

    if (e.party == Party::attacker && e.phase == Phase::protect) {
      error(rep, dim, "attacker cannot act in the protect phase");
    }
    if (e.party == Party::protector && e.phase == Phase::attack) {
      error(rep, dim, "protector cannot act in the attack phase");
    }

    if (!g.known.contains(e.resource_id)) {
      error(rep, dim, "unknown resource '" + e.resource_id + "' used by " + who);
      continue;
    }
    const auto it = mine.find(e.resource_id);
    if (it == mine.end()) {
      error(rep, dim, "resource '" + e.resource_id + "' is not granted to " + who);
    } else if (it->second) {
      error(rep, dim, who + " uses '" + e.resource_id + "', which the scenario declares empty");
    }
  }
  finish(rep);
  return rep;
}

RunLedger parse_ledger(std::string_view document) {
  const SourceText src{document};
  Json doc;
  try {
    doc = Json::parse(document.begin(), document.end());
  } catch (const Json::parse_error& e) {
    const auto [line, col] = src.line_col(e.byte == 0 ? 0 : e.byte - 1);
    throw ParseError("malformed ledger document: " + std::string(e.what()), line, col);
  }
  if (!doc.is_object()) throw ParseError("ledger document must be a JSON object", 1, 1);
  check_keys(doc, {"entries"}, "ledger", src);
  RunLedger ledger;
  if (!doc.contains("entries")) return ledger;
  if (!doc.at("entries").is_array()) src.fail_at_key("entries", "entries must be an array");
  for (const auto& item : doc.at("entries")) {
    if (!item.is_object()) src.fail_at_key("entries", "ledger entries must be objects");
    check_keys(item, {"party", "resource_id", "phase"}, "ledger entry", src);
    const auto party = parse_party(get_text(item, "party", "ledger entry", src));
    const auto phase = parse_phase(get_text(item, "phase", "ledger entry", src));
    if (!party) src.fail_at_key("party", "ledger party must be attacker or protector");
    if (!phase) src.fail_at_key("phase", "ledger phase must be train, attack, protect or evaluate");
    ledger.entries.push_back({*party, get_text(item, "resource_id", "ledger entry", src), *phase});
  }
  return ledger;
}

std::string serialize_ledger(const RunLedger& ledger) {
  Json arr = Json::array();
  for (const auto& e : ledger.entries) {
    Json o = Json::object();
    o["party"] = std::string(to_string(e.party));
    o["resource_id"] = e.resource_id;
    o["phase"] = std::string(to_string(e.phase));
    arr.push_back(std::move(o));
  }
  Json doc = Json::object();
  doc["entries"] = std::move(arr);
  return doc.dump(2) + "\n";
}

std::string to_string(const ValidationReport& r) {
  std::ostringstream os;
  os << (r.complete ? "complete" : "incomplete") << " (" << r.error_count() << " error(s), "
     << r.warning_count() << " warning(s))\n";
  for (const auto& f : r.findings) {
    os << "  " << (f.severity == Severity::error ? "error" : "warning") << " [" << f.dimension
       << "] " << f.message << "\n";
  }
  return os.str();
}

ScenarioOfUse load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scenario file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

}  // namespace sou
