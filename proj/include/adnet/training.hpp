#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adnet/data.hpp"
#include "adnet/losses.hpp"
#include "adnet/model.hpp"

namespace adnet::training {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over the learnable entries of a ParamStore.
class Adam {
 public:
  Adam(ParamStore& store, AdamConfig cfg = {});
  // theta <- theta - lr * m_hat / (sqrt(v_hat) + eps); requires populated grads.
  void step(double lr);
  std::int64_t step_count() const { return step_; }

 private:
  ParamStore& store_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t step_ = 0;
};

// Reduce-on-plateau with early stop: lr *= factor after `patience` consecutive
// non-improving epochs; stop after `es_patience` of them.
struct ScheduleState {
  double lr = 1e-3;
  double factor = 0.25;
  int patience = 4;
  int es_patience = 10;
  double min_lr = 1e-6;
  double improve_delta = 1e-6;

  double best_val = 0.0;
  bool has_best = false;
  int stagnant_epochs = 0;
  int stagnant_for_stop = 0;
  bool stop_flag = false;

  void observe(double epoch_val_loss);
};

struct TrainRunConfig {
  int batch_size = 8;
  int max_epochs = 200;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  double initial_lr = 1e-3;
  double plateau_factor = 0.25;
  int plateau_patience = 4;
  int es_patience = 10;
  double min_lr = 1e-6;
  double improve_delta = 1e-6;
  std::string checkpoint_path;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  losses::LossBreakdown train;  // means over the epoch's batches
  double val_total = 0.0;
  double val_jaccard = 0.0;  // mean hard Jaccard at 0.5 on the validation split
  double wall_ms = 0.0;
};

// Deterministic seeded shuffle, then partition; disjoint and exhaustive.
std::pair<std::vector<data::Sample>, std::vector<data::Sample>> split_train_val(
    const std::vector<data::Sample>& dataset, double fraction, std::uint64_t seed);

class Trainer {
 public:
  Trainer(model::AdNet& net, std::vector<data::Sample> dataset, TrainRunConfig run_cfg,
          losses::LossConfig loss_cfg);

  EpochLog run_epoch();
  bool stopped() const { return schedule_.stop_flag; }
  double best_val_loss() const { return best_val_; }
  const std::vector<EpochLog>& log() const { return log_; }
  const ScheduleState& schedule() const { return schedule_; }

  // Full protocol: epochs until early stop or the max_epochs cap, keeping the
  // best-validation checkpoint when a path is configured.
  std::vector<EpochLog> train();

  void write_log_csv(const std::string& path) const;

 private:
  model::AdNet& net_;
  std::vector<data::Sample> train_set_, val_set_;
  TrainRunConfig cfg_;
  losses::LossConfig loss_cfg_;
  Adam adam_;
  ScheduleState schedule_;
  SplitMix64 shuffle_rng_;
  std::vector<EpochLog> log_;
  double best_val_ = 0.0;
  bool has_best_ = false;
  int epoch_ = 0;
};

}  // namespace adnet::training
