#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mvhet/errors.hpp"
#include "mvhet/evalkit.hpp"
#include "mvhet/ingest.hpp"
#include "mvhet/model.hpp"
#include "mvhet/optim.hpp"

namespace mvhet {

enum class TaskKind { NodeClassification, LinkPrediction };

struct TrainConfig {
  int epochs = 500;
  int patience = 30;
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  int neg_ratio = 1;          // |Ω⁻| = neg_ratio · |Ω| per epoch
  double probe_c = 1.0;       // validation-probe SVM settings
  int probe_iterations = 200;
  bool restore_best = true;   // false: keep the final-epoch parameters

  void validate() const {
    if (epochs < 1) throw Error(ErrorKind::ConfigInvalid, "epochs must be >= 1");
    if (patience < 0) throw Error(ErrorKind::ConfigInvalid, "patience must be >= 0");
    if (lr <= 0) throw Error(ErrorKind::ConfigInvalid, "learning rate must be > 0");
    if (neg_ratio < 1) throw Error(ErrorKind::ConfigInvalid, "neg_ratio must be >= 1");
  }
};

struct TrainTask {
  TaskKind kind = TaskKind::NodeClassification;
  // classification
  NodeTypeId target_type = -1;
  Split split;
  int num_classes = 0;
  // link prediction
  NodeTypeId u_type = -1;
  NodeTypeId a_type = -1;
  LinkSplit links;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double l_ds = 0, l_intra = 0, l_inter = 0, l_ortho = 0, total = 0;
  double val_metric = 0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;  // 1-based
  double best_metric = 0;
  double wall_seconds = 0;
};

// Index (1-based) of the maximum of the trace under patience-limited
// scanning; ties break toward the earliest epoch.
inline int early_stop(const std::vector<double>& trace, int patience) {
  if (trace.empty()) throw Error(ErrorKind::ConfigInvalid, "early_stop: empty trace");
  int best = 0;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (static_cast<int>(i) - best > patience) break;
    if (trace[i] > trace[best]) best = static_cast<int>(i);
  }
  return best + 1;
}

// Structure-preserving loss: negative log-sigmoid of the pair dot products,
// summed over positives plus sampled negatives with flipped sign.
inline Tensor link_loss(Tape& tape, Tensor h_u, Tensor h_a,
                        const std::vector<std::pair<int, int>>& positives,
                        const std::vector<std::pair<int, int>>& negatives) {
  if (positives.empty()) throw Error(ErrorKind::EmptyPositives, "link_loss: no positive pairs");
  Tensor pos = tape.pairwise_dot(h_u, h_a, positives);
  Tensor loss = tape.bce_with_logits(pos, Mat(static_cast<int>(positives.size()), 1, 1.0));
  if (!negatives.empty()) {
    Tensor neg = tape.pairwise_dot(h_u, h_a, negatives);
    loss = tape.add(loss, tape.bce_with_logits(neg, Mat(static_cast<int>(negatives.size()), 1)));
  }
  return loss;
}

inline std::vector<std::pair<int, int>> sample_negative_pairs(
    int n_u, int n_a, std::size_t count, const std::set<std::pair<int, int>>& observed,
    Rng& rng) {
  std::vector<std::pair<int, int>> out;
  std::size_t guard = 0;
  while (out.size() < count && guard < 1000 * count + 1000) {
    ++guard;
    std::pair<int, int> cand{static_cast<int>(rng.below(n_u)), static_cast<int>(rng.below(n_a))};
    if (observed.count(cand)) continue;
    out.push_back(cand);
  }
  return out;
}

namespace trainer_detail {

inline Mat one_hot_labels(const std::vector<int>& labels, int num_classes) {
  Mat y(static_cast<int>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) y(static_cast<int>(i), labels[i]) = 1.0;
  return y;
}

inline Mat gather(const Mat& x, const std::vector<int>& rows) {
  Mat out(static_cast<int>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < x.cols(); ++j) out(static_cast<int>(i), j) = x(rows[i], j);
  return out;
}

}  // namespace trainer_detail

// End-to-end training: full-graph forward, task loss + lambda-weighted
// reconstruction + orthogonal penalty, Adam updates, validation-driven
// early stopping with best-epoch restore.
inline TrainReport train(MvHetModel& model, const TrainTask& task, const TrainConfig& cfg) {
  using namespace trainer_detail;
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const ModelConfig& mcfg = model.config();
  const HeteroGraph& g = model.graph();

  Mat one_hot;
  std::vector<int> labels;
  if (task.kind == TaskKind::NodeClassification) {
    if (task.num_classes < 2) throw Error(ErrorKind::MissingLabels, "num_classes must be >= 2");
    const auto& maybe = g.labels(task.target_type);
    if (!maybe.has_value())
      throw Error(ErrorKind::MissingLabels, g.type(task.target_type).name + " has no labels");
    labels = *maybe;
    if (task.split.train.empty())
      throw Error(ErrorKind::MissingLabels, "empty training split");
    one_hot = one_hot_labels(labels, task.num_classes);
  } else {
    if (task.links.train_pos.empty())
      throw Error(ErrorKind::MissingLinkSplit, "empty link training split");
  }

  std::set<std::pair<int, int>> observed;
  if (task.kind == TaskKind::LinkPrediction) {
    observed.insert(task.links.train_pos.begin(), task.links.train_pos.end());
    observed.insert(task.links.val_pos.begin(), task.links.val_pos.end());
    observed.insert(task.links.test_pos.begin(), task.links.test_pos.end());
  }

  AdamConfig adam_cfg{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
  AdamState adam;
  TrainReport report;
  std::vector<Mat> best_params = model.params().snapshot();
  double best_metric = -1e300;
  int best_epoch = 0;
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Tape tape;
    ModelForward fwd = model.forward(tape, true, epoch);
    Tensor l_ds{};
    if (task.kind == TaskKind::NodeClassification) {
      Tensor logits = model.classify(tape, fwd);
      l_ds = tape.softmax_cross_entropy(logits, one_hot, task.split.train);
    } else {
      Rng neg_rng = keyed_rng(cfg.seed, "neg_sampling", static_cast<std::uint64_t>(epoch));
      auto negatives = sample_negative_pairs(
          g.type(task.u_type).count, g.type(task.a_type).count,
          task.links.train_pos.size() * static_cast<std::size_t>(cfg.neg_ratio), observed,
          neg_rng);
      Tensor hu = fwd.fused[model.group_of_type(task.u_type)];
      Tensor ha = fwd.fused[model.group_of_type(task.a_type)];
      l_ds = link_loss(tape, hu, ha, task.links.train_pos, negatives);
    }
    Tensor total =
        tape.add(l_ds, tape.add(tape.scale(tape.add(fwd.l_intra, fwd.l_inter), mcfg.lambda),
                                tape.scale(fwd.l_ortho, mcfg.ortho_coeff)));

    EpochStats stats;
    stats.epoch = epoch;
    stats.l_ds = l_ds.scalar();
    stats.l_intra = fwd.l_intra.scalar();
    stats.l_inter = fwd.l_inter.scalar();
    stats.l_ortho = fwd.l_ortho.scalar();
    stats.total = total.scalar();
    if (!std::isfinite(stats.total) || !std::isfinite(stats.l_ds))
      throw Error(ErrorKind::NonFiniteLoss, "loss diverged at epoch " + std::to_string(epoch),
                  epoch);

    tape.backward(total);
    std::vector<Mat> grads = model.gradients(fwd);
    adam_step(model.params(), grads, adam, adam_cfg);

    // validation metric on an eval-mode forward
    Tape eval_tape;
    ModelForward efwd = model.forward(eval_tape, false, epoch);
    if (task.kind == TaskKind::NodeClassification) {
      const Mat& h = efwd.fused[0].val();
      const std::vector<int>& metric_rows =
          task.split.val.empty() ? task.split.train : task.split.val;
      std::vector<int> y_train, y_val;
      for (int i : task.split.train) y_train.push_back(labels[i]);
      for (int i : metric_rows) y_val.push_back(labels[i]);
      LinearSvm probe = LinearSvm::fit(gather(h, task.split.train), y_train, task.num_classes,
                                       cfg.probe_c, cfg.probe_iterations);
      stats.val_metric = f1_scores(y_val, probe.predict(gather(h, metric_rows))).macro;
    } else if (!task.links.val_pos.empty() && !task.links.val_neg.empty()) {
      std::vector<std::pair<int, int>> all = task.links.val_pos;
      all.insert(all.end(), task.links.val_neg.begin(), task.links.val_neg.end());
      std::vector<int> y(task.links.val_pos.size(), 1);
      y.resize(all.size(), 0);
      Tensor probs = model.score_links(eval_tape, efwd, task.u_type, task.a_type, all);
      std::vector<double> s(all.size());
      for (std::size_t i = 0; i < all.size(); ++i) s[i] = probs.val()(static_cast<int>(i), 0);
      stats.val_metric = rank_metrics(s, y).auc;
    } else {
      stats.val_metric = -stats.total;  // no validation links: track the loss
    }

    report.epochs.push_back(stats);
    if (stats.val_metric > best_metric) {
      best_metric = stats.val_metric;
      best_epoch = epoch;
      best_params = model.params().snapshot();
      since_best = 0;
    } else {
      ++since_best;
      if (since_best > cfg.patience) break;
    }
  }

  if (cfg.restore_best) model.params().restore(best_params);
  report.best_epoch = best_epoch;
  report.best_metric = best_metric;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

inline std::string report_to_csv(const TrainReport& report) {
  std::ostringstream out;
  out << "epoch,l_ds,l_intra,l_inter,l_ortho,total,val_metric\n";
  out << std::setprecision(17);
  for (const EpochStats& e : report.epochs)
    out << e.epoch << ',' << e.l_ds << ',' << e.l_intra << ',' << e.l_inter << ',' << e.l_ortho
        << ',' << e.total << ',' << e.val_metric << '\n';
  return out.str();
}

inline void write_report_csv(const TrainReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out << report_to_csv(report);
}

}  // namespace mvhet
