#include "adnet/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "adnet/checkpoint.hpp"
#include "adnet/evaluation.hpp"

namespace adnet::training {

Adam::Adam(ParamStore& store, AdamConfig cfg) : store_(store), cfg_(cfg) {
  for (const Param& p : store_.all()) {
    if (!p.learnable) continue;
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  std::size_t k = 0;
  for (Param& p : store_.all()) {
    if (!p.learnable) continue;
    std::vector<double>& m = m_[k];
    std::vector<double>& v = v_[k];
    ++k;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.data[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p.value.data[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
    }
  }
}

void ScheduleState::observe(double epoch_val_loss) {
  if (!has_best || epoch_val_loss < best_val - improve_delta) {
    best_val = epoch_val_loss;
    has_best = true;
    stagnant_epochs = 0;
    stagnant_for_stop = 0;
    return;
  }
  ++stagnant_epochs;
  ++stagnant_for_stop;
  if (stagnant_epochs >= patience) {
    lr = std::max(lr * factor, min_lr);
    stagnant_epochs = 0;
  }
  if (stagnant_for_stop >= es_patience) stop_flag = true;
}

void TrainRunConfig::validate() const {
  if (batch_size < 1) throw ParameterError("train: batch_size must be >= 1");
  if (max_epochs < 1) throw ParameterError("train: max_epochs must be >= 1");
  if (val_fraction <= 0.0 || val_fraction >= 1.0)
    throw ParameterError("train: val_fraction must be in (0,1)");
  if (initial_lr <= 0.0 || min_lr <= 0.0) throw ParameterError("train: learning rates must be > 0");
  if (plateau_factor <= 0.0 || plateau_factor >= 1.0)
    throw ParameterError("train: plateau_factor must be in (0,1)");
}

std::pair<std::vector<data::Sample>, std::vector<data::Sample>> split_train_val(
    const std::vector<data::Sample>& dataset, double fraction, std::uint64_t seed) {
  if (dataset.size() < 2)
    throw ContractViolation("split_train_val: need at least 2 samples, have " +
                            std::to_string(dataset.size()));
  std::vector<std::size_t> idx(dataset.size());
  std::iota(idx.begin(), idx.end(), 0);
  SplitMix64 rng(seed ^ 0x51717ULL);
  for (std::size_t i = idx.size() - 1; i > 0; --i)
    std::swap(idx[i], idx[rng.below(i + 1)]);
  std::size_t val_n = static_cast<std::size_t>(std::llround(fraction * dataset.size()));
  if (val_n < 1) val_n = 1;
  if (val_n >= dataset.size()) val_n = dataset.size() - 1;
  std::vector<data::Sample> train, val;
  for (std::size_t i = 0; i < idx.size(); ++i)
    (i < val_n ? val : train).push_back(dataset[idx[i]]);
  return {std::move(train), std::move(val)};
}

Trainer::Trainer(model::AdNet& net, std::vector<data::Sample> dataset, TrainRunConfig run_cfg,
                 losses::LossConfig loss_cfg)
    : net_(net),
      cfg_(std::move(run_cfg)),
      loss_cfg_(loss_cfg),
      adam_(net.params()),
      shuffle_rng_(cfg_.seed ^ 0x7ea1ULL) {
  cfg_.validate();
  loss_cfg_.validate();
  auto [train, val] = split_train_val(dataset, cfg_.val_fraction, cfg_.seed);
  train_set_ = std::move(train);
  val_set_ = std::move(val);
  if (static_cast<std::size_t>(cfg_.batch_size) > train_set_.size())
    throw ContractViolation("train: batch_size exceeds the training split size");
  schedule_.lr = cfg_.initial_lr;
  schedule_.factor = cfg_.plateau_factor;
  schedule_.patience = cfg_.plateau_patience;
  schedule_.es_patience = cfg_.es_patience;
  schedule_.min_lr = cfg_.min_lr;
  schedule_.improve_delta = cfg_.improve_delta;
}

EpochLog Trainer::run_epoch() {
  const auto t0 = std::chrono::steady_clock::now();
  ++epoch_;
  EpochLog row;
  row.epoch = epoch_;
  row.lr = schedule_.lr;

  std::vector<std::size_t> order(train_set_.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[shuffle_rng_.below(i + 1)]);

  int batches = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
    std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
    auto [images, masks] = data::make_batch(train_set_, idx);

    Tape tape;
    net_.params().zero_grad();
    NodeId x = tape.constant(std::move(images), "input");
    model::ForwardResult fwd = net_.forward(tape, x, model::Mode::Train);
    if (net_.config().guided && fwd.guided.size() != 4)
      throw ContractViolation("train: guided decoder enabled but heads are missing");
    losses::LossBreakdown bd;
    NodeId loss = losses::total_loss(tape, fwd.final_out, fwd.guided, masks, loss_cfg_, &bd);
    if (!std::isfinite(bd.total)) {
      const std::string op = tape.first_non_finite();
      throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch_) +
                         "; first non-finite tensor from op '" + (op.empty() ? "loss" : op) + "'");
    }
    tape.backward(loss);
    adam_.step(schedule_.lr);

    row.train.bce += bd.bce;
    row.train.region += bd.region;
    for (std::size_t h = 0; h < bd.jaccard_head.size(); ++h)
      row.train.jaccard_head[h] += bd.jaccard_head[h];
    row.train.total += bd.total;
    ++batches;
  }
  row.train.bce /= batches;
  row.train.region /= batches;
  for (double& h : row.train.jaccard_head) h /= batches;
  row.train.total /= batches;

  // validation pass, inference mode, frozen statistics
  double val_total = 0.0, val_jaccard = 0.0;
  for (const data::Sample& s : val_set_) {
    auto [images, masks] = data::make_batch(val_set_, {static_cast<std::size_t>(&s - val_set_.data())});
    Tape tape;
    NodeId x = tape.constant(std::move(images), "input");
    model::ForwardResult fwd = net_.forward(tape, x, model::Mode::Infer);
    losses::LossBreakdown bd;
    losses::total_loss(tape, fwd.final_out, fwd.guided, masks, loss_cfg_, &bd);
    val_total += bd.total;
    const auto counts = evaluation::confusion(tape.value(fwd.final_out), masks, 0.5);
    val_jaccard += evaluation::metrics_from_counts(counts).jaccard;
  }
  row.val_total = val_total / static_cast<double>(val_set_.size());
  row.val_jaccard = val_jaccard / static_cast<double>(val_set_.size());

  if (!has_best_ || row.val_total < best_val_) {
    best_val_ = row.val_total;
    has_best_ = true;
    if (!cfg_.checkpoint_path.empty()) save_checkpoint(cfg_.checkpoint_path, net_.params());
  }
  schedule_.observe(row.val_total);

  row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  log_.push_back(row);
  return row;
}

std::vector<EpochLog> Trainer::train() {
  while (!stopped() && epoch_ < cfg_.max_epochs) run_epoch();
  return log_;
}

void Trainer::write_log_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("train: cannot write log " + path);
  os.precision(17);
  os << "epoch,lr,train_bce,train_region,train_jaccard_head_1,train_jaccard_head_2,"
        "train_jaccard_head_3,train_jaccard_head_4,train_total,val_total,val_jaccard,wall_ms\n";
  for (const EpochLog& r : log_) {
    os << r.epoch << ',' << r.lr << ',' << r.train.bce << ',' << r.train.region;
    for (double h : r.train.jaccard_head) os << ',' << h;
    os << ',' << r.train.total << ',' << r.val_total << ',' << r.val_jaccard << ',' << r.wall_ms
       << '\n';
  }
}

}  // namespace adnet::training
