// JSON forms of the experiment config and the run report, plus the text
// tables.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include "sou/error.hpp"
#include "sou/harness.hpp"

namespace sou {
namespace {

using Json = nlohmann::ordered_json;

void allow_keys(const Json& obj, const std::set<std::string>& keys, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, _] : obj.items()) {
    if (!keys.contains(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <typename T>
void read_opt(const Json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

Json train_json(const nn::TrainConfig& t) {
  Json j = Json::object();
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs;
  j["lr"] = t.lr;
  j["shuffle"] = t.shuffle;
  return j;
}

void train_from(const Json& j, nn::TrainConfig& t, const std::string& where) {
  allow_keys(j, {"batch_size", "epochs", "lr", "shuffle"}, where);
  read_opt(j, "batch_size", t.batch_size, where);
  read_opt(j, "epochs", t.epochs, where);
  read_opt(j, "lr", t.lr, where);
  read_opt(j, "shuffle", t.shuffle, where);
  if (t.batch_size == 0) throw ConfigError(where + ".batch_size must be >= 1");
}

Json row_json(const MetricRow& r) {
  Json j = Json::object();
  j["n"] = r.n;
  j["positive_class"] = r.positive_class;
  j["acc"] = r.acc;
  j["auc"] = r.auc;
  j["macro_f1"] = r.macro_f1;
  j["weighted_f1"] = r.weighted_f1;
  if (r.per_class.size() != r.classes.size()) {
    throw ShapeError("report: metric row has " + std::to_string(r.per_class.size()) +
                     " per-class entries for " + std::to_string(r.classes.size()) + " classes");
  }
  Json pc = Json::object();
  for (std::size_t i = 0; i < r.classes.size(); ++i) {
    Json c = Json::object();
    c["precision"] = r.per_class[i].precision;
    c["recall"] = r.per_class[i].recall;
    c["f1"] = r.per_class[i].f1;
    pc[r.classes[i]] = std::move(c);
  }
  j["per_class"] = std::move(pc);
  return j;
}

MetricRow row_from(const Json& j) {
  MetricRow r;
  r.n = j.at("n").get<std::size_t>();
  r.positive_class = j.at("positive_class").get<std::string>();
  r.acc = j.at("acc").get<double>();
  r.auc = j.at("auc").get<double>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.weighted_f1 = j.at("weighted_f1").get<double>();
  for (const auto& [label, c] : j.at("per_class").items()) {
    r.classes.push_back(label);
    r.per_class.push_back(
        {c.at("precision").get<double>(), c.at("recall").get<double>(), c.at("f1").get<double>()});
  }
  return r;
}

Json classifier_json(const ClassifierReport& c) {
  Json j = Json::object();
  for (const auto& [name, rows] : {std::pair{"chunk", &c.chunk}, std::pair{"recording", &c.recording}}) {
    Json t = Json::object();
    t["original"] = row_json(rows->original);
    t["perturbed"] = row_json(rows->perturbed);
    j[name] = std::move(t);
  }
  return j;
}

ClassifierReport classifier_from(const Json& j) {
  ClassifierReport c;
  c.chunk = {row_from(j.at("chunk").at("original")), row_from(j.at("chunk").at("perturbed"))};
  c.recording = {row_from(j.at("recording").at("original")),
                 row_from(j.at("recording").at("perturbed"))};
  return c;
}

Json config_json(const ExperimentConfig& cfg) {
  Json j = Json::object();
  j["scenario"] = cfg.scenario_path;
  j["manifest"] = cfg.manifest_path;
  j["output_dir"] = cfg.output_dir;
  j["seed"] = cfg.seed;
  j["segment"] = Json{{"chunk_seconds", cfg.chunk_seconds}, {"overlap", cfg.overlap}};
  if (cfg.stft) {
    j["stft"] = Json{{"window_len", cfg.stft->window_len},
                     {"hop", cfg.stft->hop},
                     {"fft_size", cfg.stft->fft_size}};
  }
  Json mel = Json::object();
  mel["n_mels"] = cfg.mel.n_mels;
  mel["f_min"] = cfg.mel.f_min;
  mel["f_max"] = cfg.mel.f_max ? Json(*cfg.mel.f_max) : Json(nullptr);
  j["mel"] = std::move(mel);
  j["gender_train"] = train_json(cfg.gender_train);
  j["diagnosis_train"] = train_json(cfg.diagnosis_train);
  j["gender_arch"] = Json{{"c1", cfg.gender_arch.c1},
                          {"c2", cfg.gender_arch.c2},
                          {"hidden", cfg.gender_arch.hidden},
                          {"dropout", cfg.gender_arch.dropout}};
  j["diagnosis_arch"] = Json{{"c1", cfg.diagnosis_arch.c1},
                             {"c2", cfg.diagnosis_arch.c2},
                             {"c3", cfg.diagnosis_arch.c3},
                             {"hidden", cfg.diagnosis_arch.hidden},
                             {"dropout", cfg.diagnosis_arch.dropout}};
  Json atk = Json::object();
  atk["epsilon"] = cfg.attack.epsilon;
  atk["alpha"] = cfg.attack.alpha;
  atk["iterations"] = cfg.attack.iterations;
  atk["method"] = to_string(cfg.attack.method);
  atk["random_start"] = cfg.attack.random_start;
  j["attack"] = std::move(atk);
  j["resources"] = Json{{"training_data", cfg.resources.training_data},
                        {"gender_classifier", cfg.resources.gender_classifier},
                        {"target_data", cfg.resources.target_data},
                        {"diagnosis_classifier", cfg.resources.diagnosis_classifier}};
  return j;
}

ExperimentConfig config_from(const Json& j, const std::filesystem::path& base_dir) {
  allow_keys(j,
             {"scenario", "manifest", "output_dir", "seed", "segment", "stft", "mel", "gender_train",
              "diagnosis_train", "gender_arch", "diagnosis_arch", "attack", "resources"},
             "experiment config");
  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  for (const char* k : {"scenario", "manifest", "output_dir"}) {
    if (!j.contains(k) || !j.at(k).is_string()) {
      throw ConfigError(std::string("experiment config: '") + k + "' (string) is required");
    }
  }
  cfg.scenario_path = j.at("scenario").get<std::string>();
  cfg.manifest_path = j.at("manifest").get<std::string>();
  cfg.output_dir = j.at("output_dir").get<std::string>();
  read_opt(j, "seed", cfg.seed, "config");

  if (j.contains("segment")) {
    const auto& s = j.at("segment");
    allow_keys(s, {"chunk_seconds", "overlap"}, "segment");
    read_opt(s, "chunk_seconds", cfg.chunk_seconds, "segment");
    read_opt(s, "overlap", cfg.overlap, "segment");
  }
  if (j.contains("stft")) {
    const auto& s = j.at("stft");
    allow_keys(s, {"window_len", "hop", "fft_size"}, "stft");
    StftConfig st;
    read_opt(s, "window_len", st.window_len, "stft");
    read_opt(s, "hop", st.hop, "stft");
    read_opt(s, "fft_size", st.fft_size, "stft");
    st.validate();
    cfg.stft = st;
  }
  if (j.contains("mel")) {
    const auto& m = j.at("mel");
    allow_keys(m, {"n_mels", "f_min", "f_max"}, "mel");
    read_opt(m, "n_mels", cfg.mel.n_mels, "mel");
    read_opt(m, "f_min", cfg.mel.f_min, "mel");
    if (m.contains("f_max") && !m.at("f_max").is_null()) {
      double f = 0.0;
      read_opt(m, "f_max", f, "mel");
      cfg.mel.f_max = f;
    }
  }
  if (j.contains("gender_train")) train_from(j.at("gender_train"), cfg.gender_train, "gender_train");
  if (j.contains("diagnosis_train")) {
    train_from(j.at("diagnosis_train"), cfg.diagnosis_train, "diagnosis_train");
  }
  if (j.contains("gender_arch")) {
    const auto& a = j.at("gender_arch");
    allow_keys(a, {"c1", "c2", "hidden", "dropout"}, "gender_arch");
    read_opt(a, "c1", cfg.gender_arch.c1, "gender_arch");
    read_opt(a, "c2", cfg.gender_arch.c2, "gender_arch");
    read_opt(a, "hidden", cfg.gender_arch.hidden, "gender_arch");
    read_opt(a, "dropout", cfg.gender_arch.dropout, "gender_arch");
  }
  if (j.contains("diagnosis_arch")) {
    const auto& a = j.at("diagnosis_arch");
    allow_keys(a, {"c1", "c2", "c3", "hidden", "dropout"}, "diagnosis_arch");
    read_opt(a, "c1", cfg.diagnosis_arch.c1, "diagnosis_arch");
    read_opt(a, "c2", cfg.diagnosis_arch.c2, "diagnosis_arch");
    read_opt(a, "c3", cfg.diagnosis_arch.c3, "diagnosis_arch");
    read_opt(a, "hidden", cfg.diagnosis_arch.hidden, "diagnosis_arch");
    read_opt(a, "dropout", cfg.diagnosis_arch.dropout, "diagnosis_arch");
  }
  if (j.contains("attack")) {
    const auto& a = j.at("attack");
    allow_keys(a, {"epsilon", "alpha", "iterations", "method", "random_start"}, "attack");
    read_opt(a, "epsilon", cfg.attack.epsilon, "attack");
    read_opt(a, "alpha", cfg.attack.alpha, "attack");
    read_opt(a, "iterations", cfg.attack.iterations, "attack");
    read_opt(a, "random_start", cfg.attack.random_start, "attack");
    std::string method = to_string(cfg.attack.method);
    read_opt(a, "method", method, "attack");
    if (method == "pgd") cfg.attack.method = AttackMethod::pgd;
    else if (method == "fgsm") cfg.attack.method = AttackMethod::fgsm;
    else throw ConfigError("attack.method must be 'pgd' or 'fgsm'");
    cfg.attack.validate();
  }
  if (j.contains("resources")) {
    const auto& r = j.at("resources");
    allow_keys(r, {"training_data", "gender_classifier", "target_data", "diagnosis_classifier"},
               "resources");
    read_opt(r, "training_data", cfg.resources.training_data, "resources");
    read_opt(r, "gender_classifier", cfg.resources.gender_classifier, "resources");
    read_opt(r, "target_data", cfg.resources.target_data, "resources");
    read_opt(r, "diagnosis_classifier", cfg.resources.diagnosis_classifier, "resources");
  }
  return cfg;
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string cell(const std::string& v, int width = 8) {
  std::string s = v;
  s.resize(std::max<std::size_t>(s.size() + 1, static_cast<std::size_t>(width)), ' ');
  return s;
}

void end_line(std::ostringstream& os, std::string line) {
  while (!line.empty() && line.back() == ' ') line.pop_back();
  os << line << "\n";
}

void table(std::ostringstream& os, const std::string& title, const TableRows& rows) {
  os << title << "\n";
  std::string head = cell("", 16) + cell("ACC") + cell("AUC") + cell("F1");
  for (const auto& c : rows.original.classes) {
    for (const char* m : {"R", "P", "F1"}) head += cell(std::string(m) + "(" + c + ")");
  }
  end_line(os, head);
  for (const auto& [name, row] :
       {std::pair{"Original data", &rows.original}, std::pair{"Perturbed data", &rows.perturbed}}) {
    std::string line = cell(name, 16) + cell(fmt2(row->acc)) + cell(fmt2(row->auc)) + cell(fmt2(row->macro_f1));
    for (const auto& m : row->per_class) {
      for (double v : {m.recall, m.precision, m.f1}) line += cell(fmt2(v));
    }
    end_line(os, line);
  }
  os << "weighted F1: original " << fmt2(rows.original.weighted_f1) << ", perturbed "
     << fmt2(rows.perturbed.weighted_f1) << "; n = " << rows.original.n << "\n\n";
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) { return config_json(cfg).dump(2) + "\n"; }

ExperimentConfig parse_experiment_config(const std::string& text,
                                         const std::filesystem::path& base_dir) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("experiment config is not valid JSON: ") + e.what());
  }
  return config_from(j, base_dir);
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str(), path.parent_path());
}

std::string emit_report(const RunReport& r, ReportFormat format) {
  if (format == ReportFormat::json) {
    Json j = Json::object();
    j["toolkit_version"] = r.toolkit_version;
    j["scenario_id"] = r.scenario_id;
    j["seed"] = r.seed;
    Json findings = Json::array();
    for (const auto& f : r.ledger.findings) {
      findings.push_back(Json{{"severity", f.severity == Severity::error ? "error" : "warning"},
                              {"dimension", f.dimension},
                              {"message", f.message}});
    }
    j["ledger"] = Json{{"complete", r.ledger.complete}, {"findings", std::move(findings)}};
    j["config"] = config_json(r.config);
    j["gender"] = classifier_json(r.gender);
    j["diagnosis"] = classifier_json(r.diagnosis);
    j["utility_drop"] = r.utility_drop;
    j["utility_drop_recording"] = r.utility_drop_recording;
    return j.dump(2) + "\n";
  }

  std::ostringstream os;
  os << "Scenario: " << r.scenario_id << "\n";
  os << "Seed: " << r.seed << "   toolkit " << r.toolkit_version << "\n";
  os << "Ledger: " << (r.ledger.complete ? "complete" : "VIOLATED") << " ("
     << r.ledger.error_count() << " error(s))\n";
  const auto& a = r.config.attack;
  os << "Attack: " << to_string(a.method) << " epsilon=" << a.epsilon << " alpha=" << a.alpha
     << " iterations=" << a.iterations << (a.random_start ? " random_start" : "") << "\n\n";
  table(os, "Gender classifier, chunk level", r.gender.chunk);
  table(os, "Diagnosis classifier, chunk level", r.diagnosis.chunk);
  table(os, "Gender classifier, recording level", r.gender.recording);
  table(os, "Diagnosis classifier, recording level", r.diagnosis.recording);
  os << "Utility drop (diagnosis ACC, original - perturbed): chunk " << fmt2(r.utility_drop)
     << ", recording " << fmt2(r.utility_drop_recording) << "\n";
  return os.str();
}

RunReport parse_report_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
    RunReport r;
    r.toolkit_version = j.at("toolkit_version").get<std::string>();
    r.scenario_id = j.at("scenario_id").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.ledger.complete = j.at("ledger").at("complete").get<bool>();
    for (const auto& f : j.at("ledger").at("findings")) {
      r.ledger.findings.push_back(
          {f.at("severity").get<std::string>() == "error" ? Severity::error : Severity::warning,
           f.at("dimension").get<std::string>(), f.at("message").get<std::string>()});
    }
    r.config = config_from(j.at("config"), {});
    r.gender = classifier_from(j.at("gender"));
    r.diagnosis = classifier_from(j.at("diagnosis"));
    r.utility_drop = j.at("utility_drop").get<double>();
    r.utility_drop_recording = j.at("utility_drop_recording").get<double>();
    return r;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed report JSON: ") + e.what());
  }
}

}  // namespace sou
