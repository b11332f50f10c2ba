#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrsir/checkpoint.hpp"
#include "mrsir/corruption.hpp"
#include "mrsir/errors.hpp"
#include "mrsir/interp.hpp"
#include "mrsir/metrics.hpp"
#include "mrsir/montage.hpp"
#include "mrsir/phantom.hpp"
#include "mrsir/report.hpp"
#include "mrsir/train.hpp"
#include "mrsir/volume_io.hpp"

namespace mrsir {

// Experiment protocol shared by the CLI and the acceptance harness:
// phantom dataset -> corruption sweeps -> model training -> comparative
// evaluation against the interpolation baselines.
struct ExperimentConfig {
  std::uint64_t seed = 7240;
  std::size_t n_volumes = 75;
  Dims hr_dims{128, 128, 128};
  Dims out_dims{64, 64, 64};
  int dimensionality = 2;
  std::vector<double> etas{0.05, 0.10, 0.15, 0.20};
  std::vector<std::string> methods{"ours-progressive", "ours-direct", "linear",
                                   "cubic", "copy"};
  double eval_eta = 0.0; // 0 selects the per-dimensionality headline
  std::string data_dir = "data";
  std::string out_dir = "out";
  ReportFormat format = ReportFormat::csv;
  double min_brain_fraction = 0.05;
  double val_fraction = 0.2;
  std::vector<double> stages_2d{0.05, 0.10, 0.15, 0.20};
  std::vector<double> stages_3d{0.05, 0.10, 0.15};
  PhantomSpec phantom;
  TrainConfig train;
  UNetConfig model;

  double headline_eta() const {
    if (eval_eta != 0.0) return eval_eta;
    return dimensionality == 2 ? 0.20 : 0.15;
  }
  const std::vector<double>& stages() const {
    return dimensionality == 2 ? stages_2d : stages_3d;
  }

  void validate() const {
    if (n_volumes < 2) throw InvalidConfig("config: n_volumes must be >= 2");
    if (dimensionality != 2 && dimensionality != 3)
      throw InvalidConfig("config: dimensionality must be 2 or 3");
    for (double e : etas)
      if (!(e > 0.0 && e < 1.0))
        throw InvalidConfig("config: etas must lie in (0, 1)");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
      throw InvalidConfig("config: val_fraction must be in (0, 1)");
  }
};

namespace detail {

constexpr std::uint64_t kEvalCorrupt = 0x6576;
constexpr std::uint64_t kValSplit = 0x767370;
constexpr std::uint64_t kInitStream = 0x696e6974;
constexpr std::uint64_t kTrainStream = 0x747261696e;
constexpr std::uint64_t kCorruptCmd = 0x636f72;

inline std::string join_path(const std::string& a, const std::string& b) {
  return (std::filesystem::path(a) / b).string();
}

} // namespace detail

struct ManifestItem {
  std::size_t id = 0;
  std::string file;
  std::uint64_t seed = 0;
  double tau = 0.0;
  std::string split; // train | test
};

struct Manifest {
  std::uint64_t seed = 0;
  std::size_t n = 0;
  Dims dims{};
  std::vector<ManifestItem> items;
};

inline void write_manifest(const Manifest& m, const std::string& path) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : m.items)
    items.push_back({{"id", it.id},
                     {"file", it.file},
                     {"seed", it.seed},
                     {"tau", it.tau},
                     {"split", it.split}});
  const nlohmann::json j = {
      {"seed", m.seed},
      {"n", m.n},
      {"dims", {m.dims.depth, m.dims.height, m.dims.width}},
      {"items", items}};
  const std::string payload = j.dump(2) + "\n";
  detail::write_file_bytes(
      path, std::vector<std::uint8_t>(payload.begin(), payload.end()));
}

inline Manifest read_manifest(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw MalformedHeader(std::string("manifest: bad JSON: ") + e.what());
  }
  Manifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.n = j.at("n").get<std::size_t>();
  const auto dims = j.at("dims");
  m.dims = Dims{dims.at(0).get<std::size_t>(), dims.at(1).get<std::size_t>(),
                dims.at(2).get<std::size_t>()};
  for (const auto& it : j.at("items")) {
    ManifestItem item;
    item.id = it.at("id").get<std::size_t>();
    item.file = it.at("file").get<std::string>();
    item.seed = it.at("seed").get<std::uint64_t>();
    item.tau = it.at("tau").get<double>();
    item.split = it.at("split").get<std::string>();
    m.items.push_back(std::move(item));
  }
  return m;
}

// Builds the phantom dataset on disk: volumes plus a split manifest.
inline Manifest cmd_phantom(const ExperimentConfig& cfg) {
  cfg.validate();
  PhantomSpec spec = cfg.phantom;
  spec.hr_dims = cfg.hr_dims;
  spec.out_dims = cfg.out_dims;
  const PhantomDataset ds = build_dataset(cfg.n_volumes, spec, cfg.seed);
  if (ds.train.size() < 2 || ds.test.size() < 2)
    std::fprintf(stderr,
                 "warning: tiny dataset split (%zu train / %zu test)\n",
                 ds.train.size(), ds.test.size());

  Manifest m;
  m.seed = cfg.seed;
  m.n = cfg.n_volumes;
  m.dims = cfg.out_dims;
  const std::string vol_dir = detail::join_path(cfg.data_dir, "volumes");
  std::size_t id = 0;
  char name[64];
  for (const auto* part : {&ds.train, &ds.test}) {
    const bool is_train = part == &ds.train;
    for (const auto& item : *part) {
      std::snprintf(name, sizeof name, "vol_%03zu.mrsv", id);
      write_volume(item.volume, detail::join_path(vol_dir, name));
      m.items.push_back(
          {id, std::string("volumes/") + name, item.seed, item.tau,
           is_train ? "train" : "test"});
      ++id;
    }
  }
  write_manifest(m, detail::join_path(cfg.data_dir, "manifest.json"));
  return m;
}

inline Manifest load_manifest(const ExperimentConfig& cfg) {
  return read_manifest(detail::join_path(cfg.data_dir, "manifest.json"));
}

inline Volume load_item_volume(const ExperimentConfig& cfg,
                               const ManifestItem& item) {
  return read_volume(detail::join_path(cfg.data_dir, item.file));
}

// Corruption sweep: per-eta directories of (corrupted, mask) volume pairs.
// Masks exist for evaluation; the restoration model never reads them.
inline std::size_t cmd_corrupt(const ExperimentConfig& cfg) {
  cfg.validate();
  const Manifest m = load_manifest(cfg);
  std::size_t written = 0;
  char name[96];
  for (std::size_t ei = 0; ei < cfg.etas.size(); ++ei) {
    const double eta = cfg.etas[ei];
    std::snprintf(name, sizeof name, "eta_%.2f", eta);
    const std::string dir = detail::join_path(cfg.data_dir, name);
    for (const auto& item : m.items) {
      const Volume clean = load_item_volume(cfg, item);
      CorruptionSpec spec;
      spec.eta = eta;
      spec.seed = derive_seed(cfg.seed, detail::kCorruptCmd + ei, item.id);
      const CorruptionOutcome out = corrupt(clean, spec);
      std::snprintf(name, sizeof name, "vol_%03zu.corrupt.mrsv", item.id);
      write_volume(out.corrupted, detail::join_path(dir, name));
      Volume mask(clean.dims());
      for (std::size_t i = 0; i < mask.size(); ++i)
        mask[i] = out.missing[i] ? 1.0 : 0.0;
      std::snprintf(name, sizeof name, "vol_%03zu.mask.mrsv", item.id);
      write_volume(mask, detail::join_path(dir, name), VolumeDtype::f32);
      written += 2;
    }
  }
  return written;
}

namespace detail {

// Deterministic carve-out of validation volumes from the train split.
inline void train_val_indices(std::size_t n_train, std::uint64_t seed,
                              double val_fraction,
                              std::vector<std::size_t>& core,
                              std::vector<std::size_t>& val) {
  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
  Rng rng(derive_seed(seed, kValSplit));
  for (std::size_t i = n_train - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(order[i], order[j]);
  }
  std::size_t n_val = static_cast<std::size_t>(
      std::floor(val_fraction * static_cast<double>(n_train)));
  n_val = std::clamp<std::size_t>(n_val, 1, n_train - 1);
  core.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
  val.assign(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(core.begin(), core.end());
  std::sort(val.begin(), val.end());
}

struct SplitVolumes {
  std::vector<Volume> core;  // gradient updates
  std::vector<Volume> val;   // held-out validation
  std::vector<Volume> train; // full train split, for reporting
  std::vector<Volume> test;
};

inline SplitVolumes load_split(const ExperimentConfig& cfg,
                               const Manifest& m) {
  SplitVolumes sv;
  std::vector<const ManifestItem*> train_items;
  for (const auto& item : m.items) {
    if (item.split == "train")
      train_items.push_back(&item);
    else
      sv.test.push_back(load_item_volume(cfg, item));
  }
  if (train_items.empty() || sv.test.empty())
    throw MissingArtifacts("experiment: dataset lacks a train or test split");

  std::vector<std::size_t> core_idx, val_idx;
  train_val_indices(train_items.size(), cfg.seed, cfg.val_fraction, core_idx,
                    val_idx);
  for (const auto* item : train_items)
    sv.train.push_back(load_item_volume(cfg, *item));
  for (auto i : core_idx) sv.core.push_back(sv.train[i]);
  for (auto i : val_idx) sv.val.push_back(sv.train[i]);
  return sv;
}

// Items actually fed to models/baselines: axial slices in 2D, whole
// volumes in 3D.
inline std::vector<Volume> eval_items(const ExperimentConfig& cfg,
                                      const std::vector<Volume>& volumes) {
  if (cfg.dimensionality == 3) return volumes;
  std::vector<Volume> slices;
  for (const auto& v : volumes) {
    auto s = extract_slices(v, cfg.min_brain_fraction);
    for (auto& sl : s) slices.push_back(std::move(sl));
  }
  return slices;
}

inline std::string checkpoint_path(const ExperimentConfig& cfg,
                                   const std::string& mode) {
  return join_path(cfg.out_dir, "model_" + mode + "_" +
                                    std::to_string(cfg.dimensionality) +
                                    "d.ckpt");
}

} // namespace detail

struct TrainOutcome {
  TrainLog log;
  std::string checkpoint_file;
  std::string resume_file;
  std::string log_file;
};

// Trains one model (mode: "progressive" or "direct") on the staged
// curriculum or the headline fraction and stores both the best-validation
// checkpoint and a resumable last-state checkpoint.
inline TrainOutcome cmd_train(const ExperimentConfig& cfg,
                              const std::string& mode) {
  cfg.validate();
  if (mode != "progressive" && mode != "direct")
    throw InvalidConfig("train: mode must be progressive or direct");
  const Manifest m = load_manifest(cfg);
  detail::SplitVolumes sv = detail::load_split(cfg, m);

  const std::vector<Volume> train_items = detail::eval_items(cfg, sv.core);
  const std::vector<Volume> val_items = detail::eval_items(cfg, sv.val);

  UNetConfig mc = cfg.model;
  mc.dimensionality = cfg.dimensionality;
  UNet model(mc);
  const std::uint64_t mode_salt = mode == "progressive" ? 1 : 2;
  model.init(derive_seed(cfg.seed, detail::kInitStream, mode_salt));

  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, detail::kTrainStream, mode_salt);

  TrainOutcome out;
  CheckpointRecord last;
  if (mode == "progressive")
    out.log = train_progressive(model, train_items, val_items, cfg.stages(),
                                tc, nullptr, &last);
  else
    out.log = train_direct(model, train_items, val_items, cfg.headline_eta(),
                           tc, nullptr, &last);

  out.checkpoint_file = detail::checkpoint_path(cfg, mode);
  const CheckpointRecord best =
      make_checkpoint(model, nullptr, last.epoch, last.stage_index, tc.seed);
  save_checkpoint(best, out.checkpoint_file);

  out.resume_file = out.checkpoint_file + ".last";
  save_checkpoint(last, out.resume_file);

  out.log_file = detail::join_path(
      cfg.out_dir, "trainlog_" + mode + "_" +
                       std::to_string(cfg.dimensionality) + "d.csv");
  const std::string csv = train_log_csv(out.log);
  detail::write_file_bytes(out.log_file,
                           std::vector<std::uint8_t>(csv.begin(), csv.end()));
  return out;
}

namespace detail {

struct MethodModel {
  bool is_model = false;
  InterpConfig interp;
  bool is_copy = false;
  bool is_oracle = false;
  UNet* model = nullptr;
};

} // namespace detail

// Runs every requested method on the train/val/test splits at the headline
// missing fraction and writes the report (plus a brain-support variant and
// per-method comparison montages).
inline EvalReport cmd_eval(const ExperimentConfig& cfg) {
  cfg.validate();
  const Manifest m = load_manifest(cfg);
  detail::SplitVolumes sv = detail::load_split(cfg, m);
  const double eta = cfg.headline_eta();

  // Models are loaded once per method.
  std::vector<std::pair<std::string, UNet>> models;
  for (const auto& method : cfg.methods) {
    if (method.rfind("ours-", 0) != 0) continue;
    const std::string mode = method.substr(5);
    const std::string path = detail::checkpoint_path(cfg, mode);
    if (!std::filesystem::exists(path))
      throw MissingArtifacts("eval: missing checkpoint " + path);
    models.emplace_back(method, model_from_checkpoint(load_checkpoint(path)));
  }

  struct SplitSet {
    std::string name;
    std::vector<Volume> clean;
  };
  std::vector<SplitSet> splits;
  splits.push_back({"train", detail::eval_items(cfg, sv.train)});
  splits.push_back({"val", detail::eval_items(cfg, sv.val)});
  splits.push_back({"test", detail::eval_items(cfg, sv.test)});

  // Deterministic per-item corruption, fixed across methods so every method
  // sees the same inputs.
  struct CorruptedSet {
    std::vector<Volume> input;
    std::vector<std::vector<std::uint8_t>> missing;
  };
  std::vector<CorruptedSet> corrupted(splits.size());
  for (std::size_t s = 0; s < splits.size(); ++s) {
    for (std::size_t i = 0; i < splits[s].clean.size(); ++i) {
      CorruptionSpec spec;
      spec.eta = eta;
      spec.seed = derive_seed(cfg.seed, detail::kEvalCorrupt + s, i);
      CorruptionOutcome out = corrupt(splits[s].clean[i], spec);
      corrupted[s].input.push_back(std::move(out.corrupted));
      corrupted[s].missing.push_back(std::move(out.missing));
    }
  }

  EvalReport report;
  EvalReport brain_report;
  for (const auto& method : cfg.methods) {
    UNet* model = nullptr;
    for (auto& [name, net] : models)
      if (name == method) model = &net;

    for (std::size_t s = 0; s < splits.size(); ++s) {
      const auto& clean = splits[s].clean;
      if (clean.empty()) throw DataEmpty("eval: empty split " + splits[s].name);
      double mse_sum = 0.0, ssim_sum = 0.0;
      double mse_brain_sum = 0.0, ssim_brain_sum = 0.0;
      for (std::size_t i = 0; i < clean.size(); ++i) {
        const Volume& input = corrupted[s].input[i];
        Volume pred;
        if (method == "copy") {
          pred = input;
        } else if (method == "oracle") {
          pred = clean[i];
        } else if (method == "linear" || method == "cubic") {
          InterpConfig ic;
          ic.order = method == "linear" ? InterpConfig::Order::linear
                                        : InterpConfig::Order::cubic;
          pred = fill(input, corrupted[s].missing[i], ic);
        } else if (model) {
          pred = model->predict(input);
        } else {
          throw InvalidConfig("eval: unknown method " + method);
        }
        mse_sum += mse(pred, clean[i]);
        ssim_sum += ssim(pred, clean[i]);
        const BrainMask bm = brain_mask(clean[i]);
        mse_brain_sum += mse_masked(pred, clean[i], bm.bits);
        ssim_brain_sum += ssim_masked(pred, clean[i], bm.bits);

        if (splits[s].name == "test" && i == 0) {
          write_montage({input, pred, clean[i]},
                        cfg.dimensionality == 3 ? MontageLayout::three_view
                                                : MontageLayout::axial,
                        detail::join_path(cfg.out_dir,
                                          "montage_" + method + ".png"));
        }
      }
      const double inv = 1.0 / static_cast<double>(clean.size());
      report.rows.push_back(
          {method, splits[s].name, eta, mse_sum * inv, ssim_sum * inv});
      brain_report.rows.push_back({method, splits[s].name, eta,
                                   mse_brain_sum * inv, ssim_brain_sum * inv});
    }
  }

  const std::string ext = cfg.format == ReportFormat::csv ? ".csv" : ".json";
  write_report(report, detail::join_path(cfg.out_dir, "report" + ext),
               cfg.format);
  write_report(brain_report,
               detail::join_path(cfg.out_dir, "report_brain" + ext),
               cfg.format);
  return report;
}

// Mask-free restoration of one stored volume. There is deliberately no way
// to pass a missing mask here.
inline void cmd_infer(const std::string& checkpoint_file,
                      const std::string& input_file,
                      const std::string& output_file) {
  if (!std::filesystem::exists(checkpoint_file))
    throw MissingArtifacts("infer: missing checkpoint " + checkpoint_file);
  const CheckpointRecord rec = load_checkpoint(checkpoint_file);
  UNet model = model_from_checkpoint(rec);
  const Volume input = read_any_volume(input_file);
  if ((rec.config.dimensionality == 2) != input.is_2d())
    throw CheckpointMismatch("infer: checkpoint dimensionality " +
                             std::to_string(rec.config.dimensionality) +
                             "D does not match the input volume");
  const Volume restored = model.predict(input);
  write_any_volume(restored, output_file);
}

// ---- configuration file ----

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  auto dims = [](const nlohmann::json& a) {
    return Dims{a.at(0).get<std::size_t>(), a.at(1).get<std::size_t>(),
                a.at(2).get<std::size_t>()};
  };
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("n_volumes")) cfg.n_volumes = j["n_volumes"].get<std::size_t>();
  if (j.contains("hr_dims")) cfg.hr_dims = dims(j["hr_dims"]);
  if (j.contains("out_dims")) cfg.out_dims = dims(j["out_dims"]);
  if (j.contains("dimensionality"))
    cfg.dimensionality = j["dimensionality"].get<int>();
  if (j.contains("etas")) cfg.etas = j["etas"].get<std::vector<double>>();
  if (j.contains("methods"))
    cfg.methods = j["methods"].get<std::vector<std::string>>();
  if (j.contains("eval_eta")) cfg.eval_eta = j["eval_eta"].get<double>();
  if (j.contains("data_dir")) cfg.data_dir = j["data_dir"].get<std::string>();
  if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("format"))
    cfg.format = j["format"].get<std::string>() == "json" ? ReportFormat::json
                                                          : ReportFormat::csv;
  if (j.contains("min_brain_fraction"))
    cfg.min_brain_fraction = j["min_brain_fraction"].get<double>();
  if (j.contains("val_fraction"))
    cfg.val_fraction = j["val_fraction"].get<double>();
  if (j.contains("stages_2d"))
    cfg.stages_2d = j["stages_2d"].get<std::vector<double>>();
  if (j.contains("stages_3d"))
    cfg.stages_3d = j["stages_3d"].get<std::vector<double>>();
  if (j.contains("train")) {
    const auto& t = j["train"];
    if (t.contains("lr0")) cfg.train.lr0 = t["lr0"].get<double>();
    if (t.contains("weight_decay"))
      cfg.train.adam.weight_decay = t["weight_decay"].get<double>();
    if (t.contains("max_epochs"))
      cfg.train.max_epochs = t["max_epochs"].get<int>();
    if (t.contains("batch_size"))
      cfg.train.batch_size = t["batch_size"].get<std::size_t>();
    if (t.contains("early_stop_patience"))
      cfg.train.early_stop_patience = t["early_stop_patience"].get<int>();
    if (t.contains("lr_patience"))
      cfg.train.lr_patience = t["lr_patience"].get<int>();
    if (t.contains("lr_factor")) cfg.train.lr_factor = t["lr_factor"].get<double>();
    if (t.contains("loss_alpha"))
      cfg.train.loss_alpha = t["loss_alpha"].get<double>();
    if (t.contains("promotion_patience"))
      cfg.train.promotion_patience = t["promotion_patience"].get<int>();
    if (t.contains("cluster_min"))
      cfg.train.cluster_min = t["cluster_min"].get<int>();
    if (t.contains("cluster_max"))
      cfg.train.cluster_max = t["cluster_max"].get<int>();
  }
  if (j.contains("model")) {
    const auto& mj = j["model"];
    if (mj.contains("encoder_channels"))
      cfg.model.encoder_channels =
          mj["encoder_channels"].get<std::vector<std::size_t>>();
    if (mj.contains("bottleneck_channels"))
      cfg.model.bottleneck_channels =
          mj["bottleneck_channels"].get<std::size_t>();
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("config: bad JSON: ") + e.what());
  }
  return config_from_json(j);
}

} // namespace mrsir
