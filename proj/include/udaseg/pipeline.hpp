#pragma once

#include <string>
#include <vector>

#include "udaseg/config.hpp"
#include "udaseg/metrics.hpp"
#include "udaseg/selftrain.hpp"

namespace udaseg {

// A run directory is complete once run_manifest.json exists; reruns into a
// completed directory require force (or a fresh directory).
void ensure_fresh_run_dir(const std::string& dir, bool force);

// Collects artifacts while a command runs, then writes run_manifest.json with
// relative paths and CRC-32 checksums.
class RunManifestWriter {
 public:
  RunManifestWriter(std::string run_dir, std::string command, const PipelineConfig& cfg);
  void add(const std::string& path);
  void add_note(const std::string& key, const std::string& value);
  void write();

 private:
  std::string run_dir_, command_;
  uint32_t cfg_hash_;
  uint64_t seed_;
  std::vector<std::string> artifacts_;
  std::vector<std::pair<std::string, std::string>> notes_;
};

uint32_t file_crc32(const std::string& path);

// Cases for segmentation training/inference: resampled to the configured
// spacing (when set) and min-max normalised to the configured range.
std::vector<SegCase> load_seg_cases(const Dataset& ds, const PipelineConfig::DataCfg& data,
                                    bool need_labels);

void cmd_phantom_generate(const PipelineConfig& cfg, const std::string& out_dir, bool force);

void cmd_convert_train(const PipelineConfig& cfg, const std::string& manifest_a,
                       const std::string& manifest_b, const std::string& out_dir, bool force);

void cmd_convert_apply(const PipelineConfig& cfg, const std::string& checkpoint_path,
                       const std::string& manifest, ConvertDirection dir,
                       const std::string& out_dir, bool force);

// fold < 0 trains every fold of the assignment.
void cmd_seg_train(const PipelineConfig& cfg, const std::string& manifest, int dim, int fold,
                   int k_folds, const std::string& out_dir, bool dry_run, bool force);

void cmd_seg_infer(const PipelineConfig& cfg, const std::vector<std::string>& checkpoint_paths,
                   const std::string& manifest, const std::string& out_dir, bool save_probs,
                   bool force);

EnsembleSpec cmd_selftrain_run(const PipelineConfig& cfg, const std::string& synth_manifest,
                               const std::string& real_manifest, const std::string& stage2_dir,
                               const std::string& out_dir, bool force);

void cmd_ensemble_predict(const PipelineConfig& cfg, const std::string& spec_path,
                          const std::string& manifest, const std::string& out_dir, bool force);

MetricsReport cmd_eval_report(const PipelineConfig& cfg, const std::string& pred_manifest,
                              const std::string& gt_manifest, const std::string& out_dir,
                              bool force);

// One-command quickstart: all four stages on a generated phantom cohort plus
// the stage-2 vs self-trained comparison report.
void cmd_pipeline_run(const PipelineConfig& cfg, const std::string& out_dir, bool force);

// Checkpoints of every trained fold under dir/folds/{2d,3d}/fold_k.
std::vector<std::string> list_fold_checkpoints(const std::string& dir, int dim);

}  // namespace udaseg
