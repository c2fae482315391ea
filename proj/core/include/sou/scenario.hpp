#pragma once

// Scenario of Use threat models: an attacker model and a protector model,
// each described along objective / opportunity / additional-resources
// dimensions, plus the run ledger that records which party touched which
// declared resource.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sou {

enum class ResourceKind { data, model, compute, knowledge };

std::string_view to_string(ResourceKind k);
std::optional<ResourceKind> parse_resource_kind(std::string_view s);

/// One "Additional Resources" (or opportunity access) item. A declared-empty
/// entry states explicitly that the party has nothing in that cell.
struct ResourceDecl {
  std::string resource_id;
  ResourceKind kind = ResourceKind::data;
  std::string description;
  bool declared_empty = false;

  bool operator==(const ResourceDecl&) const = default;
};

struct AttackerModel {
  std::string objective;
  std::string opportunity;
  std::vector<ResourceDecl> resources;
  // Resources the opportunity cell gives access to (target audio, a copy of
  // the protection, ...). Ids may also appear under the other party.
  std::vector<ResourceDecl> access;

  bool operator==(const AttackerModel&) const = default;
};

struct ProtectorModel {
  std::vector<std::string> defense_objectives;
  std::vector<std::string> utility_objectives;
  std::string opportunity;
  std::vector<ResourceDecl> resources;
  std::vector<ResourceDecl> access;

  bool operator==(const ProtectorModel&) const = default;
};

struct ScenarioOfUse {
  std::string id;
  AttackerModel attacker;
  ProtectorModel protector;
  std::optional<std::string> notes;

  bool operator==(const ScenarioOfUse&) const = default;
};

enum class Party { attacker, protector };
enum class Phase { train, attack, protect, evaluate };

std::string_view to_string(Party p);
std::string_view to_string(Phase p);
std::optional<Party> parse_party(std::string_view s);
std::optional<Phase> parse_phase(std::string_view s);

struct LedgerEntry {
  Party party = Party::attacker;
  std::string resource_id;
  Phase phase = Phase::train;

  bool operator==(const LedgerEntry&) const = default;
};

struct RunLedger {
  std::vector<LedgerEntry> entries;

  void record(Party party, std::string resource_id, Phase phase) {
    entries.push_back({party, std::move(resource_id), phase});
  }
  bool operator==(const RunLedger&) const = default;
};

enum class Severity { error, warning };

struct Finding {
  Severity severity = Severity::error;
  std::string dimension;
  std::string message;

  bool operator==(const Finding&) const = default;
};

struct ValidationReport {
  bool complete = true;
  std::vector<Finding> findings;

  std::size_t error_count() const;
  std::size_t warning_count() const;
  bool operator==(const ValidationReport&) const = default;
};

/// Parses the JSON scenario format. Throws ParseError with line/column on
/// malformed JSON, unknown keys, or wrongly typed values.
ScenarioOfUse parse_scenario(std::string_view document);

/// Canonical form: fixed key order, 2-space indent, trailing newline.
/// Empty `access` lists and absent notes are omitted.
std::string serialize_scenario(const ScenarioOfUse& s);

ValidationReport validate_scenario(const ScenarioOfUse& s);

/// Checks every ledger entry against the grants of the scenario. Problems are
/// reported as findings; this never throws.
ValidationReport check_ledger(const ScenarioOfUse& s, const RunLedger& ledger);

RunLedger parse_ledger(std::string_view document);
std::string serialize_ledger(const RunLedger& ledger);

std::string to_string(const ValidationReport& r);

ScenarioOfUse load_scenario(const std::string& path);

}  // namespace sou
