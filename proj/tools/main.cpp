#include <Eigen/Core>
#include <iostream>

#include "CLI11.hpp"
#include "udaseg/pipeline.hpp"

namespace {

udaseg::PipelineConfig resolve_config(const std::string& config_path, int64_t seed_override,
                                      int jobs_override) {
  udaseg::PipelineConfig cfg =
      config_path.empty() ? udaseg::PipelineConfig{} : udaseg::load_config(config_path);
  if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
  if (jobs_override >= 0) cfg.jobs = jobs_override;
  Eigen::setNbThreads(cfg.jobs > 0 ? cfg.jobs : 0);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unsupervised cross-modality domain-adaptation segmentation pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  int64_t seed_override = -1;
  int jobs_override = -1;
  bool force = false;
  app.add_option("--config", config_path, "pipeline config file (JSON)");
  app.add_option("--seed", seed_override, "override the config seed");
  app.add_option("--jobs", jobs_override, "GEMM backend threads (0 = all cores)");
  app.add_flag("--force", force, "allow rerunning into a completed run directory");

  auto* phantom = app.add_subcommand("phantom", "procedural phantom cohorts");
  auto* phantom_gen = phantom->add_subcommand("generate", "generate a two-contrast cohort");
  phantom_gen->add_option("--out", out_dir, "output directory")->required();

  auto* convert = app.add_subcommand("convert", "stage 1: contrast conversion");
  auto* convert_train = convert->add_subcommand("train", "train the conversion model");
  std::string data_a, data_b;
  convert_train->add_option("--data-a", data_a, "annotated domain-A manifest")->required();
  convert_train->add_option("--data-b", data_b, "unannotated domain-B manifest")->required();
  convert_train->add_option("--out", out_dir)->required();
  auto* convert_apply = convert->add_subcommand("apply", "convert a dataset");
  std::string checkpoint, data, direction = "a2b";
  convert_apply->add_option("--checkpoint", checkpoint)->required();
  convert_apply->add_option("--data", data)->required();
  convert_apply->add_option("--direction", direction)->check(CLI::IsMember({"a2b", "b2a"}));
  convert_apply->add_option("--out", out_dir)->required();

  auto* seg = app.add_subcommand("seg", "stages 2-3: segmentation");
  auto* seg_train = seg->add_subcommand("train", "train fold-wise segmentation");
  std::string dim = "3d";
  int fold = -1, k_folds = 0;
  bool dry_run = false;
  seg_train->add_option("--data", data)->required();
  seg_train->add_option("--dim", dim)->check(CLI::IsMember({"2d", "3d"}));
  seg_train->add_option("--fold", fold, "fold index (default: all folds)");
  seg_train->add_option("--folds", k_folds, "fold count (default: config stage2_folds)");
  seg_train->add_flag("--dry-run", dry_run, "print the resolved architecture and exit");
  seg_train->add_option("--out", out_dir);
  auto* seg_infer = seg->add_subcommand("infer", "sliding-window inference");
  std::vector<std::string> checkpoints;
  bool save_probs = false;
  seg_infer->add_option("--checkpoint", checkpoints, "checkpoint file(s); several are ensembled")
      ->required();
  seg_infer->add_option("--data", data)->required();
  seg_infer->add_flag("--save-probs", save_probs, "also write soft predictions");
  seg_infer->add_option("--out", out_dir)->required();

  auto* selftrain = app.add_subcommand("selftrain", "stages 3-4: self-training");
  auto* selftrain_run = selftrain->add_subcommand("run", "pseudo-labels + combined retraining");
  std::string synth, real, stage2;
  selftrain_run->add_option("--synth", synth, "synthetic domain-B manifest (true labels)")
      ->required();
  selftrain_run->add_option("--real", real, "real domain-B manifest (unlabelled)")->required();
  selftrain_run->add_option("--stage2", stage2, "stage-2 run directory")->required();
  selftrain_run->add_option("--out", out_dir)->required();

  auto* ensemble = app.add_subcommand("ensemble", "fold ensembling");
  auto* ensemble_predict = ensemble->add_subcommand("predict", "predict with an ensemble spec");
  std::string spec;
  ensemble_predict->add_option("--spec", spec)->required();
  ensemble_predict->add_option("--data", data)->required();
  ensemble_predict->add_option("--out", out_dir)->required();

  auto* eval = app.add_subcommand("eval", "Dice/ASSD evaluation");
  auto* eval_report = eval->add_subcommand("report", "per-case and aggregate metrics");
  std::string pred, gt;
  eval_report->add_option("--pred", pred)->required();
  eval_report->add_option("--gt", gt)->required();
  eval_report->add_option("--out", out_dir)->required();

  auto* pipeline = app.add_subcommand("pipeline", "end-to-end orchestration");
  auto* pipeline_run = pipeline->add_subcommand("run", "all four stages on a phantom cohort");
  pipeline_run->add_option("--out", out_dir)->required();

  auto* config_cmd = app.add_subcommand("config", "configuration tools");
  auto* config_dump = config_cmd->add_subcommand("dump", "print the effective config as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    udaseg::PipelineConfig cfg = resolve_config(config_path, seed_override, jobs_override);
    if (phantom_gen->parsed())
      udaseg::cmd_phantom_generate(cfg, out_dir, force);
    else if (convert_train->parsed())
      udaseg::cmd_convert_train(cfg, data_a, data_b, out_dir, force);
    else if (convert_apply->parsed())
      udaseg::cmd_convert_apply(cfg, checkpoint, data,
                                direction == "a2b" ? udaseg::ConvertDirection::AtoB
                                                   : udaseg::ConvertDirection::BtoA,
                                out_dir, force);
    else if (seg_train->parsed()) {
      if (!dry_run && out_dir.empty())
        throw udaseg::ConfigError("seg train requires --out (or --dry-run)");
      udaseg::cmd_seg_train(cfg, data, dim == "2d" ? 2 : 3, fold,
                            k_folds > 0 ? k_folds : cfg.segmentation.stage2_folds, out_dir,
                            dry_run, force);
    } else if (seg_infer->parsed())
      udaseg::cmd_seg_infer(cfg, checkpoints, data, out_dir, save_probs, force);
    else if (selftrain_run->parsed())
      udaseg::cmd_selftrain_run(cfg, synth, real, stage2, out_dir, force);
    else if (ensemble_predict->parsed())
      udaseg::cmd_ensemble_predict(cfg, spec, data, out_dir, force);
    else if (eval_report->parsed())
      udaseg::cmd_eval_report(cfg, pred, gt, out_dir, force);
    else if (pipeline_run->parsed())
      udaseg::cmd_pipeline_run(cfg, out_dir, force);
    else if (config_dump->parsed())
      std::cout << udaseg::dump_config(cfg).dump(2) << "\n";
    else {
      std::cerr << "no command selected\n";
      return 2;
    }
  } catch (const udaseg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const udaseg::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const udaseg::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
