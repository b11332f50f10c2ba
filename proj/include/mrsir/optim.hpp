#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mrsir/errors.hpp"
#include "mrsir/layers.hpp"

namespace mrsir {

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5; // decoupled: applied as lr * wd * theta
};

// One bias-corrected Adam update on a flat tensor.
inline void adam_step(std::vector<double>& value,
                      const std::vector<double>& grad, std::vector<double>& m,
                      std::vector<double>& v, const AdamParams& cfg,
                      std::uint64_t t, double lr) {
  if (grad.size() != value.size() || m.size() != value.size() ||
      v.size() != value.size())
    throw ShapeMismatch("adam_step: tensor sizes differ");
  if (t < 1) throw InvalidConfig("adam_step: t starts at 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < value.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    value[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                      cfg.weight_decay * value[i]);
  }
}

// Optimizer state for a parameter set; moments are exposed by name so
// checkpoints can persist and restore the exact trajectory.
class Adam {
public:
  Adam() = default;
  Adam(const std::vector<ParamRef>& refs, AdamParams params)
      : params_(params) {
    for (const auto& r : refs) {
      if (!r.trainable) continue;
      slots_.push_back({r.name, r.value, r.grad,
                        std::vector<double>(r.value->size(), 0.0),
                        std::vector<double>(r.value->size(), 0.0)});
    }
  }

  void step(double lr) {
    ++t_;
    for (auto& s : slots_) adam_step(*s.value, *s.grad, s.m, s.v, params_, t_, lr);
  }

  std::uint64_t steps() const { return t_; }
  void set_steps(std::uint64_t t) { t_ = t; }

  struct Slot {
    std::string name;
    std::vector<double>* value;
    std::vector<double>* grad;
    std::vector<double> m, v;
  };
  std::vector<Slot>& slots() { return slots_; }

private:
  AdamParams params_;
  std::vector<Slot> slots_;
  std::uint64_t t_ = 0;
};

// Halves the step size when the best validation loss has not improved by
// rel_tol within `patience` epochs, with an equal cooldown between
// consecutive reductions.
class PlateauScheduler {
public:
  PlateauScheduler() = default;
  PlateauScheduler(double factor, int patience, double rel_tol)
      : factor_(factor), patience_(patience), rel_tol_(rel_tol) {}

  double observe(double val_loss, double lr) {
    if (val_loss < best_ * (1.0 - rel_tol_)) {
      best_ = val_loss;
      since_improve_ = 0;
    } else {
      ++since_improve_;
    }
    ++since_reduce_;
    if (since_improve_ >= patience_ && since_reduce_ >= patience_) {
      lr *= factor_;
      since_reduce_ = 0;
    }
    return lr;
  }

private:
  double factor_ = 0.5;
  int patience_ = 10;
  double rel_tol_ = 1e-4;
  double best_ = std::numeric_limits<double>::infinity();
  int since_improve_ = 0;
  int since_reduce_ = 0;
};

// Replays a validation-loss history through the plateau rule and returns the
// step size after the final epoch.
inline double reduce_lr_on_plateau(const std::vector<double>& val_history,
                                   double lr0, double factor = 0.5,
                                   int patience = 10, double rel_tol = 1e-4) {
  if (val_history.empty())
    throw InvalidConfig("reduce_lr_on_plateau: history must be non-empty");
  PlateauScheduler sched(factor, patience, rel_tol);
  double lr = lr0;
  for (double v : val_history) lr = sched.observe(v, lr);
  return lr;
}

class EarlyStopping {
public:
  EarlyStopping() = default;
  EarlyStopping(int patience, double rel_tol)
      : patience_(patience), rel_tol_(rel_tol) {}

  // True once `patience` consecutive epochs have passed without improvement.
  bool observe(double val_loss) {
    if (val_loss < best_ * (1.0 - rel_tol_)) {
      best_ = val_loss;
      since_ = 0;
    } else {
      ++since_;
    }
    return since_ >= patience_;
  }

private:
  int patience_ = 10;
  double rel_tol_ = 1e-4;
  double best_ = std::numeric_limits<double>::infinity();
  int since_ = 0;
};

} // namespace mrsir
