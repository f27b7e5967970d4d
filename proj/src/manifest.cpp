#include "udaseg/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"

namespace udaseg {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Domain d) {
  switch (d) {
    case Domain::ceT1: return "ceT1";
    case Domain::hrT2_real: return "hrT2_real";
    case Domain::hrT2_synth: return "hrT2_synth";
  }
  return "?";
}

std::string to_string(LabelKind k) {
  switch (k) {
    case LabelKind::truth: return "true";
    case LabelKind::pseudo: return "pseudo";
    case LabelKind::none: return "none";
  }
  return "?";
}

Domain domain_from_string(const std::string& s) {
  if (s == "ceT1") return Domain::ceT1;
  if (s == "hrT2_real") return Domain::hrT2_real;
  if (s == "hrT2_synth") return Domain::hrT2_synth;
  throw DataError("unknown domain tag '" + s + "'");
}

LabelKind label_kind_from_string(const std::string& s) {
  if (s == "true") return LabelKind::truth;
  if (s == "pseudo") return LabelKind::pseudo;
  if (s == "none") return LabelKind::none;
  throw DataError("unknown label_kind '" + s + "'");
}

const CaseManifest* Dataset::find(const std::string& case_id) const {
  for (const auto& c : cases)
    if (c.case_id == case_id) return &c;
  return nullptr;
}

void validate_dataset(const Dataset& d) {
  std::set<std::string> ids;
  for (const auto& c : d.cases) {
    if (!ids.insert(c.case_id).second)
      throw DataError("dataset '" + d.name + "': duplicate case_id '" + c.case_id + "'");
    bool has_label = c.label_path.has_value();
    if (has_label != (c.label_kind != LabelKind::none))
      throw DataError("dataset '" + d.name + "', case '" + c.case_id +
                      "': label_path must be present iff label_kind != none");
    if (c.domain == Domain::hrT2_real && c.label_kind == LabelKind::truth &&
        d.purpose != DatasetPurpose::evaluation)
      throw DataError("dataset '" + d.name + "', case '" + c.case_id +
                      "': real hrT2 cases cannot carry true labels in a training dataset");
  }
}

Dataset load_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest '" + manifest_path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("manifest '" + manifest_path + "' is not valid JSON: " + e.what());
  }
  Dataset d;
  fs::path base = fs::path(manifest_path).parent_path();
  try {
    d.name = j.at("name").get<std::string>();
    d.purpose = j.value("purpose", std::string("training")) == "evaluation"
                    ? DatasetPurpose::evaluation
                    : DatasetPurpose::training;
    for (const auto& jc : j.at("cases")) {
      CaseManifest c;
      c.case_id = jc.at("case_id").get<std::string>();
      c.domain = domain_from_string(jc.at("domain").get<std::string>());
      c.volume_path = (base / jc.at("volume").get<std::string>()).string();
      c.label_kind = label_kind_from_string(jc.value("label_kind", std::string("none")));
      if (jc.contains("label")) c.label_path = (base / jc.at("label").get<std::string>()).string();
      if (jc.contains("fold") && !jc.at("fold").is_null()) c.fold = jc.at("fold").get<int>();
      d.cases.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw DataError("manifest '" + manifest_path + "': " + e.what());
  }
  validate_dataset(d);
  return d;
}

void save_dataset(const Dataset& d, const std::string& manifest_path) {
  validate_dataset(d);
  fs::path base = fs::path(manifest_path).parent_path();
  json j;
  j["name"] = d.name;
  j["purpose"] = d.purpose == DatasetPurpose::evaluation ? "evaluation" : "training";
  j["cases"] = json::array();
  for (const auto& c : d.cases) {
    json jc;
    jc["case_id"] = c.case_id;
    jc["domain"] = to_string(c.domain);
    jc["volume"] = fs::relative(c.volume_path, base).generic_string();
    jc["label_kind"] = to_string(c.label_kind);
    if (c.label_path) jc["label"] = fs::relative(*c.label_path, base).generic_string();
    if (c.fold) jc["fold"] = *c.fold;
    j["cases"].push_back(jc);
  }
  std::ofstream out(manifest_path);
  if (!out) throw DataError("cannot write manifest '" + manifest_path + "'");
  out << j.dump(2) << "\n";
}

}  // namespace udaseg
