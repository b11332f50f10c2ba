// Command-line driver for the restoration experiments: dataset synthesis,
// missing-voxel simulation, model training, method comparison, inference.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mrsir/experiment.hpp"
#include "mrsir/threading.hpp"

int main(int argc, char** argv) {
  mrsir::init_threads();

  CLI::App app{"mrsi_restore: mask-free restoration of metabolic maps"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  auto* o_config =
      app.add_option("--config", config_path, "JSON experiment config");
  std::uint64_t seed = 0;
  auto* o_seed = app.add_option("--seed", seed, "master seed");
  std::string data_dir;
  auto* o_data = app.add_option("--data", data_dir, "dataset directory");
  std::string out_dir;
  auto* o_out = app.add_option("--out", out_dir, "output directory");
  std::string format;
  auto* o_format = app.add_option("--format", format, "report format")
                       ->check(CLI::IsMember({"csv", "json"}));
  int dim = 0;
  auto* o_dim = app.add_option("--dim", dim, "experiment dimensionality")
                    ->check(CLI::IsMember({2, 3}));
  std::vector<double> etas;
  auto* o_etas = app.add_option("--eta", etas, "missing fractions");
  std::vector<std::string> methods;
  auto* o_methods = app.add_option("--method", methods, "evaluation methods");
  std::size_t n_volumes = 0;
  auto* o_n = app.add_option("--n", n_volumes, "phantom count");
  int epochs = -1;
  auto* o_epochs = app.add_option("--epochs", epochs, "training epoch cap");
  std::size_t batch = 0;
  auto* o_batch = app.add_option("--batch", batch, "batch size");

  auto* c_phantom =
      app.add_subcommand("phantom", "generate the synthetic dataset");
  auto* c_corrupt =
      app.add_subcommand("corrupt", "write missing-voxel sweeps");
  auto* c_train = app.add_subcommand("train", "train a restoration model");
  std::string mode = "progressive";
  c_train->add_option("--mode", mode, "training strategy")
      ->check(CLI::IsMember({"progressive", "direct"}));
  auto* c_eval =
      app.add_subcommand("eval", "evaluate methods and write the report");
  auto* c_infer = app.add_subcommand("infer", "restore a single volume");
  std::string ckpt_path, input_path, output_path;
  c_infer->add_option("--checkpoint", ckpt_path, "model checkpoint")
      ->required();
  c_infer->add_option("--input", input_path, "corrupted volume (.mrsv/.nii)")
      ->required();
  c_infer->add_option("--output", output_path, "restored volume path")
      ->required();
  auto* c_report =
      app.add_subcommand("report", "convert or print a stored report");
  std::string report_in, report_out;
  c_report->add_option("--in", report_in, "report.json produced by eval")
      ->required();
  c_report->add_option("--to", report_out, "output path (prints when absent)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    mrsir::ExperimentConfig cfg = o_config->count()
                                      ? mrsir::load_config(config_path)
                                      : mrsir::ExperimentConfig{};
    // Flags override the config file.
    if (o_seed->count()) cfg.seed = seed;
    if (o_data->count()) cfg.data_dir = data_dir;
    if (o_out->count()) cfg.out_dir = out_dir;
    if (o_format->count())
      cfg.format = format == "json" ? mrsir::ReportFormat::json
                                    : mrsir::ReportFormat::csv;
    if (o_dim->count()) cfg.dimensionality = dim;
    if (o_etas->count()) {
      cfg.etas = etas;
      if (etas.size() == 1) cfg.eval_eta = etas.front();
    }
    if (o_methods->count()) cfg.methods = methods;
    if (o_n->count()) cfg.n_volumes = n_volumes;
    if (o_epochs->count() && epochs >= 0) cfg.train.max_epochs = epochs;
    if (o_batch->count()) cfg.train.batch_size = batch;

    if (*c_phantom) {
      const mrsir::Manifest m = mrsir::cmd_phantom(cfg);
      std::printf("wrote %zu volumes and manifest.json under %s\n",
                  m.items.size(), cfg.data_dir.c_str());
    } else if (*c_corrupt) {
      const std::size_t files = mrsir::cmd_corrupt(cfg);
      std::printf("wrote %zu corrupted/mask files under %s\n", files,
                  cfg.data_dir.c_str());
    } else if (*c_train) {
      const mrsir::TrainOutcome out = mrsir::cmd_train(cfg, mode);
      std::printf("trained %s %dD model: %zu epochs, best val loss %.6g\n",
                  mode.c_str(), cfg.dimensionality, out.log.epochs.size(),
                  out.log.best_val);
      std::printf("checkpoint: %s\nlog: %s\n", out.checkpoint_file.c_str(),
                  out.log_file.c_str());
    } else if (*c_eval) {
      const mrsir::EvalReport report = mrsir::cmd_eval(cfg);
      std::fputs(mrsir::report_csv(report).c_str(), stdout);
    } else if (*c_infer) {
      mrsir::cmd_infer(ckpt_path, input_path, output_path);
      std::printf("restored volume written to %s\n", output_path.c_str());
    } else if (*c_report) {
      const mrsir::EvalReport report = mrsir::read_report_json(report_in);
      if (report_out.empty()) {
        std::fputs(mrsir::report_csv(report).c_str(), stdout);
      } else {
        write_report(report, report_out, cfg.format);
        std::printf("report written to %s\n", report_out.c_str());
      }
    }
  } catch (const mrsir::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return mrsir::exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
