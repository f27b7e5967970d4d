#pragma once

#include <optional>
#include <string>
#include <vector>

#include "udaseg/common.hpp"

namespace udaseg {

enum class Domain { ceT1, hrT2_real, hrT2_synth };
enum class LabelKind { truth, pseudo, none };

std::string to_string(Domain d);
std::string to_string(LabelKind k);
Domain domain_from_string(const std::string& s);
LabelKind label_kind_from_string(const std::string& s);

// One case record. Paths are stored relative to the manifest file and
// resolved on load.
struct CaseManifest {
  std::string case_id;
  Domain domain = Domain::ceT1;
  std::string volume_path;
  std::optional<std::string> label_path;
  LabelKind label_kind = LabelKind::none;
  std::optional<int> fold;
};

enum class DatasetPurpose { training, evaluation };

struct Dataset {
  std::string name;
  DatasetPurpose purpose = DatasetPurpose::training;
  std::vector<CaseManifest> cases;

  const CaseManifest* find(const std::string& case_id) const;
};

// Enforces per-case invariants. Real hrT2 cases may carry true labels only in
// evaluation-only datasets (hidden ground truth never enters training).
void validate_dataset(const Dataset& d);

Dataset load_dataset(const std::string& manifest_path);
void save_dataset(const Dataset& d, const std::string& manifest_path);

}  // namespace udaseg
