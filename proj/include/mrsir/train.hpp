#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mrsir/checkpoint.hpp"
#include "mrsir/corruption.hpp"
#include "mrsir/errors.hpp"
#include "mrsir/metrics.hpp"
#include "mrsir/optim.hpp"
#include "mrsir/rng.hpp"
#include "mrsir/tensor.hpp"
#include "mrsir/unet.hpp"
#include "mrsir/volume.hpp"

namespace mrsir {

struct TrainConfig {
  double lr0 = 1e-3;
  AdamParams adam; // weight decay 1e-5, standard betas/eps
  double lr_factor = 0.5;
  int lr_patience = 10;
  int max_epochs = 500;
  int early_stop_patience = 10;
  std::size_t batch_size = 32;
  double loss_alpha = 0.5;
  std::uint64_t seed = 0;
  double plateau_rel_tol = 1e-4;
  // Stage promotion: advance the curriculum once the stage validation loss
  // has improved by < promotion_rel_tol for this many consecutive epochs.
  int promotion_patience = 5;
  double promotion_rel_tol = 1e-4;
  int cluster_min = 1; // corruption cluster sizes during training
  int cluster_max = 3;

  void validate() const {
    if (!(lr0 > 0.0)) throw InvalidConfig("train: lr0 must be positive");
    if (!(lr_factor > 0.0 && lr_factor < 1.0))
      throw InvalidConfig("train: lr_factor must be in (0, 1)");
    if (lr_patience < 1 || early_stop_patience < 1 || promotion_patience < 1)
      throw InvalidConfig("train: patience values must be >= 1");
    if (batch_size == 0) throw InvalidConfig("train: batch_size");
    if (!(loss_alpha >= 0.0 && loss_alpha <= 1.0))
      throw InvalidConfig("train: loss alpha must be in [0, 1]");
    if (max_epochs < 0) throw InvalidConfig("train: max_epochs");
  }
};

struct CurriculumStage {
  double eta = 0.0;
};

struct EpochRecord {
  int epoch = 0; // 1-based, global across stages
  double eta = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  bool early_stopped = false;
};

// The only shape the optimizer ever sees: corrupted input and clean target.
// The missing mask is dropped right here, which is what makes the trained
// model mask-free.
struct TrainingPair {
  Volume input;
  Volume target;
};

inline TrainingPair make_training_pair(const Volume& clean,
                                       const CorruptionSpec& spec) {
  return {corrupt(clean, spec).corrupted, clean};
}

inline std::string train_log_csv(const TrainLog& log) {
  std::string out = "epoch,eta,train_loss,val_loss,lr,seconds\n";
  char line[192];
  for (const auto& e : log.epochs) {
    std::snprintf(line, sizeof line, "%d,%.2f,%.10g,%.10g,%.10g,%.3f\n",
                  e.epoch, e.eta, e.train_loss, e.val_loss, e.lr, e.seconds);
    out += line;
  }
  return out;
}

namespace detail {

constexpr std::uint64_t kTrainCorrupt = 0x7472; // per-epoch, per-item
constexpr std::uint64_t kValCorrupt = 0x76616c;  // per-stage, per-item
constexpr std::uint64_t kShuffle = 0x736866;     // per-epoch batch order

inline std::vector<std::vector<double>> snapshot_params(UNet& model) {
  std::vector<std::vector<double>> snap;
  for (auto& p : model.params()) snap.push_back(*p.value);
  return snap;
}

inline void restore_params(UNet& model,
                           const std::vector<std::vector<double>>& snap) {
  auto refs = model.params();
  for (std::size_t i = 0; i < refs.size(); ++i) *refs[i].value = snap[i];
}

// Mean composite loss over a batch plus the per-item gradients assembled
// into one tensor (each item weighted 1/B).
inline double batch_loss_and_grad(const Tensor& pred, const Tensor& target,
                                  const LossParams& lp, const SsimParams& sp,
                                  Tensor& grad) {
  grad = Tensor(pred.n, pred.c, pred.d, pred.h, pred.w);
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(pred.n);
  for (std::size_t i = 0; i < pred.n; ++i) {
    const LossResult r =
        composite_loss(volume_from_tensor(pred, i),
                       volume_from_tensor(target, i), lp, sp);
    total += r.value;
    double* g = grad.plane(i, 0);
    for (std::size_t k = 0; k < r.grad.size(); ++k)
      g[k] = r.grad[k] * inv_b;
  }
  return total * inv_b;
}

inline double batch_loss_value(const Tensor& pred, const Tensor& target,
                               const LossParams& lp, const SsimParams& sp) {
  double total = 0.0;
  for (std::size_t i = 0; i < pred.n; ++i)
    total += composite_loss_value(volume_from_tensor(pred, i),
                                  volume_from_tensor(target, i), lp, sp)
                 .value;
  return total / static_cast<double>(pred.n);
}

inline TrainLog run_curriculum(UNet& model, const std::vector<Volume>& train,
                               const std::vector<Volume>& val,
                               const std::vector<CurriculumStage>& stages,
                               const TrainConfig& cfg,
                               const CheckpointRecord* resume = nullptr,
                               CheckpointRecord* last_state = nullptr) {
  cfg.validate();
  if (train.empty() || val.empty())
    throw DataEmpty("train: need non-empty train and validation sets");
  if (stages.empty()) throw InvalidConfig("train: no curriculum stages");
  for (std::size_t i = 1; i < stages.size(); ++i)
    if (!(stages[i].eta > stages[i - 1].eta))
      throw InvalidConfig("train: stage etas must be strictly increasing");

  TrainLog log;
  if (cfg.max_epochs == 0) return log;

  Adam optimizer(model.params(), cfg.adam);
  const LossParams lp{cfg.loss_alpha};
  const SsimParams sp{};
  double lr = cfg.lr0;

  const int stage_cap = std::max(
      1, cfg.max_epochs / static_cast<int>(stages.size()));
  int global_epoch = 0;
  std::size_t first_stage = 0;
  if (resume) {
    // Epoch-derived corruption and shuffle streams make the continued run
    // follow the exact trajectory of an uninterrupted one, provided no
    // plateau/promotion event preceded the snapshot.
    apply_to_optimizer(*resume, optimizer);
    global_epoch = static_cast<int>(resume->epoch);
    first_stage = resume->stage_index;
    if (first_stage >= stages.size())
      throw CheckpointMismatch("train: resume stage beyond schedule");
  }
  bool stop_all = false;
  std::vector<std::vector<double>> best_snapshot;
  std::size_t active_stage = first_stage;

  for (std::size_t stage_idx = first_stage;
       stage_idx < stages.size() && !stop_all; ++stage_idx) {
    active_stage = stage_idx;
    const double eta = stages[stage_idx].eta;
    const bool final_stage = stage_idx + 1 == stages.size();

    // Validation corruptions are fixed per stage so the plateau, promotion
    // and early-stop rules observe a stable objective.
    std::vector<TrainingPair> val_pairs;
    val_pairs.reserve(val.size());
    for (std::size_t i = 0; i < val.size(); ++i) {
      CorruptionSpec spec;
      spec.eta = eta;
      spec.s_min = cfg.cluster_min;
      spec.s_max = cfg.cluster_max;
      spec.seed = derive_seed(cfg.seed, detail::kValCorrupt + stage_idx, i);
      val_pairs.push_back(make_training_pair(val[i], spec));
    }

    PlateauScheduler plateau(cfg.lr_factor, cfg.lr_patience,
                             cfg.plateau_rel_tol);
    EarlyStopping stopper(cfg.early_stop_patience, cfg.plateau_rel_tol);
    EarlyStopping promoter(cfg.promotion_patience, cfg.promotion_rel_tol);

    for (int stage_epoch = 0;
         stage_epoch < stage_cap && global_epoch < cfg.max_epochs;
         ++stage_epoch) {
      ++global_epoch;
      const auto t0 = std::chrono::steady_clock::now();

      // Fixed seeded order; corruption resampled every epoch as natural
      // augmentation of a small dataset.
      std::vector<std::size_t> order(train.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng shuffle_rng(derive_seed(cfg.seed, detail::kShuffle,
                                  static_cast<std::uint64_t>(global_epoch)));
      for (std::size_t i = order.size() - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(
            shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i)));
        std::swap(order[i], order[j]);
      }

      double loss_sum = 0.0;
      std::size_t item_count = 0;
      for (std::size_t start = 0; start < order.size();
           start += cfg.batch_size) {
        const std::size_t stop =
            std::min(order.size(), start + cfg.batch_size);
        std::vector<Volume> inputs, targets;
        inputs.reserve(stop - start);
        targets.reserve(stop - start);
        for (std::size_t k = start; k < stop; ++k) {
          const std::size_t item = order[k];
          CorruptionSpec spec;
          spec.eta = eta;
          spec.s_min = cfg.cluster_min;
          spec.s_max = cfg.cluster_max;
          spec.seed = derive_seed(
              cfg.seed,
              detail::kTrainCorrupt + static_cast<std::uint64_t>(global_epoch),
              item);
          TrainingPair pair = make_training_pair(train[item], spec);
          inputs.push_back(std::move(pair.input));
          targets.push_back(std::move(pair.target));
        }
        const Tensor x = tensor_from_volumes(inputs);
        const Tensor t = tensor_from_volumes(targets);
        const Tensor y = model.forward(x, true);
        Tensor gy;
        const double batch_loss = batch_loss_and_grad(y, t, lp, sp, gy);
        if (!std::isfinite(batch_loss))
          throw DivergedLoss("train: non-finite training loss");
        model.zero_grads();
        model.backward(gy);
        optimizer.step(lr);
        loss_sum += batch_loss * static_cast<double>(stop - start);
        item_count += stop - start;
      }
      const double train_loss = loss_sum / static_cast<double>(item_count);

      double val_loss = 0.0;
      for (const auto& pair : val_pairs) {
        const Tensor y =
            model.forward(tensor_from_volumes({pair.input}), false);
        val_loss += composite_loss_value(volume_from_tensor(y, 0),
                                         pair.target, lp, sp)
                        .value;
      }
      val_loss /= static_cast<double>(val_pairs.size());
      if (!std::isfinite(val_loss))
        throw DivergedLoss("train: non-finite validation loss");

      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      log.epochs.push_back(
          {global_epoch, eta, train_loss, val_loss, lr, seconds});

      // The returned model is the best state of the final stage; earlier
      // stages exist to shape it, not to compete on a different objective.
      if (final_stage && val_loss < log.best_val) {
        log.best_val = val_loss;
        log.best_epoch = global_epoch;
        best_snapshot = snapshot_params(model);
      }

      lr = plateau.observe(val_loss, lr);
      if (stopper.observe(val_loss)) {
        log.early_stopped = true;
        stop_all = true;
        break;
      }
      if (!final_stage && promoter.observe(val_loss)) break;
    }
  }

  if (last_state)
    *last_state = make_checkpoint(model, &optimizer,
                                  static_cast<std::uint32_t>(global_epoch),
                                  static_cast<std::uint32_t>(active_stage),
                                  cfg.seed);
  if (!best_snapshot.empty()) restore_params(model, best_snapshot);
  return log;
}

} // namespace detail

// Curriculum training over increasing missing fractions; parameters carry
// forward across stages and the best final-stage state is returned.
inline TrainLog train_progressive(UNet& model,
                                  const std::vector<Volume>& train,
                                  const std::vector<Volume>& val,
                                  const std::vector<double>& stage_etas,
                                  const TrainConfig& cfg,
                                  const CheckpointRecord* resume = nullptr,
                                  CheckpointRecord* last_state = nullptr) {
  std::vector<CurriculumStage> stages;
  for (double eta : stage_etas) stages.push_back({eta});
  return detail::run_curriculum(model, train, val, stages, cfg, resume,
                                last_state);
}

// Single-stage training at a fixed missing fraction.
inline TrainLog train_direct(UNet& model, const std::vector<Volume>& train,
                             const std::vector<Volume>& val, double eta,
                             const TrainConfig& cfg,
                             const CheckpointRecord* resume = nullptr,
                             CheckpointRecord* last_state = nullptr) {
  return detail::run_curriculum(model, train, val, {{eta}}, cfg, resume,
                                last_state);
}

} // namespace mrsir
