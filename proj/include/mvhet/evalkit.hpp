#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <vector>

#include "mvhet/errors.hpp"
#include "mvhet/mat.hpp"
#include "mvhet/rng.hpp"

namespace mvhet {

// ---------------------------------------------------------------------------
// F1 scores

struct F1Scores {
  double macro = 0.0;
  double micro = 0.0;
};

inline F1Scores f1_scores(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  if (y_true.size() != y_pred.size() || y_true.empty())
    throw Error(ErrorKind::ShapeMismatch, "f1_scores: label vectors disagree");
  std::set<int> classes(y_true.begin(), y_true.end());
  double macro = 0.0;
  int correct = 0;
  for (int c : classes) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      if (y_pred[i] == c && y_true[i] == c) ++tp;
      else if (y_pred[i] == c) ++fp;
      else if (y_true[i] == c) ++fn;
    }
    const double denom = 2.0 * tp + fp + fn;
    macro += denom > 0 ? 2.0 * tp / denom : 0.0;
  }
  for (std::size_t i = 0; i < y_true.size(); ++i) correct += y_true[i] == y_pred[i];
  return F1Scores{macro / static_cast<double>(classes.size()),
                  static_cast<double>(correct) / static_cast<double>(y_true.size())};
}

// ---------------------------------------------------------------------------
// Linear SVM: one-vs-rest hinge loss + L2, deterministic full-batch
// subgradient descent on standardized features.

class LinearSvm {
 public:
  static LinearSvm fit(const Mat& x, const std::vector<int>& y, int num_classes, double c = 1.0,
                       int iterations = 300) {
    if (x.rows() != static_cast<int>(y.size()) || x.rows() == 0)
      throw Error(ErrorKind::ShapeMismatch, "svm fit: rows vs labels");
    LinearSvm svm;
    svm.mean_.assign(x.cols(), 0.0);
    svm.scale_.assign(x.cols(), 1.0);
    for (int j = 0; j < x.cols(); ++j) {
      double m = 0.0;
      for (int i = 0; i < x.rows(); ++i) m += x(i, j);
      m /= x.rows();
      double var = 0.0;
      for (int i = 0; i < x.rows(); ++i) var += (x(i, j) - m) * (x(i, j) - m);
      var /= x.rows();
      svm.mean_[j] = m;
      svm.scale_[j] = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
    }
    const int n = x.rows();
    const int d = x.cols();
    Mat z(n, d + 1);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) z(i, j) = (x(i, j) - svm.mean_[j]) * svm.scale_[j];
      z(i, d) = 1.0;
    }
    const double lambda = 1.0 / (c * n);
    svm.w_ = Mat(num_classes, d + 1);
    std::vector<double> grad(d + 1);
    for (int cls = 0; cls < num_classes; ++cls) {
      for (int t = 1; t <= iterations; ++t) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (int i = 0; i < n; ++i) {
          const double yi = y[i] == cls ? 1.0 : -1.0;
          double margin = 0.0;
          for (int j = 0; j <= d; ++j) margin += svm.w_(cls, j) * z(i, j);
          if (yi * margin < 1.0)
            for (int j = 0; j <= d; ++j) grad[j] -= yi * z(i, j);
        }
        const double eta = 1.0 / (lambda * t);
        for (int j = 0; j <= d; ++j)
          svm.w_(cls, j) -= eta * (lambda * svm.w_(cls, j) + grad[j] / n);
      }
    }
    return svm;
  }

  std::vector<int> predict(const Mat& x) const {
    std::vector<int> out(x.rows());
    const int d = x.cols();
    for (int i = 0; i < x.rows(); ++i) {
      int best = 0;
      double best_score = -1e300;
      for (int cls = 0; cls < w_.rows(); ++cls) {
        double s = w_(cls, d);
        for (int j = 0; j < d; ++j) s += w_(cls, j) * (x(i, j) - mean_[j]) * scale_[j];
        if (s > best_score) best_score = s, best = cls;
      }
      out[i] = best;
    }
    return out;
  }

 private:
  Mat w_;
  std::vector<double> mean_, scale_;
};

struct ProbeConfig {
  std::vector<double> proportions = {0.2, 0.4, 0.6, 0.8};
  int repeats = 10;
  double c = 1.0;
  int iterations = 300;
  std::uint64_t seed = 0;

  void validate() const {
    if (repeats < 1) throw Error(ErrorKind::ConfigInvalid, "probe repeats must be >= 1");
    for (double p : proportions)
      if (p <= 0.0 || p >= 1.0)
        throw Error(ErrorKind::ConfigInvalid, "probe proportions must lie in (0,1)");
  }
};

struct ProbeRow {
  double proportion = 0.0;
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
};

// Trains a linear SVM on a stratified fraction of the rows and scores the
// rest; averaged over `repeats` resamples per proportion.
inline std::vector<ProbeRow> svm_probe(const Mat& emb, const std::vector<int>& labels,
                                       const ProbeConfig& cfg) {
  cfg.validate();
  if (emb.rows() != static_cast<int>(labels.size()))
    throw Error(ErrorKind::ShapeMismatch, "svm_probe: rows vs labels");
  std::set<int> classes(labels.begin(), labels.end());
  if (classes.size() < 2)
    throw Error(ErrorKind::DegenerateSplit, "svm_probe: need at least two classes");
  const int num_classes = *classes.rbegin() + 1;
  std::vector<std::vector<int>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));

  std::vector<ProbeRow> table;
  for (std::size_t pi = 0; pi < cfg.proportions.size(); ++pi) {
    const double p = cfg.proportions[pi];
    double macro = 0.0, micro = 0.0;
    for (int rep = 0; rep < cfg.repeats; ++rep) {
      // one global permutation per repeat; per-class picks read off it so
      // relabeling the classes cannot move the split
      Rng rng = keyed_rng(cfg.seed, "probe", pi, static_cast<std::uint64_t>(rep));
      std::vector<int> rank(labels.size());
      for (std::size_t i = 0; i < rank.size(); ++i) rank[i] = static_cast<int>(i);
      for (std::size_t i = rank.size(); i > 1; --i)
        std::swap(rank[i - 1], rank[rng.below(i)]);
      std::vector<int> position(labels.size());
      for (std::size_t i = 0; i < rank.size(); ++i) position[rank[i]] = static_cast<int>(i);
      std::vector<int> train_ids, test_ids;
      for (const auto& members : by_class) {
        if (members.empty()) continue;
        std::vector<int> shuffled = members;
        std::sort(shuffled.begin(), shuffled.end(),
                  [&](int a, int b) { return position[a] < position[b]; });
        std::size_t n_train = static_cast<std::size_t>(std::ceil(p * shuffled.size()));
        n_train = std::min(n_train, shuffled.size() - (shuffled.size() > 1 ? 1 : 0));
        n_train = std::max<std::size_t>(n_train, 1);
        train_ids.insert(train_ids.end(), shuffled.begin(), shuffled.begin() + n_train);
        test_ids.insert(test_ids.end(), shuffled.begin() + n_train, shuffled.end());
      }
      std::set<int> train_classes;
      for (int i : train_ids) train_classes.insert(labels[i]);
      if (train_classes.size() < 2 || test_ids.empty())
        throw Error(ErrorKind::DegenerateSplit, "svm_probe: sampled split is degenerate");
      Mat xtr(static_cast<int>(train_ids.size()), emb.cols());
      std::vector<int> ytr(train_ids.size());
      for (std::size_t i = 0; i < train_ids.size(); ++i) {
        for (int j = 0; j < emb.cols(); ++j) xtr(static_cast<int>(i), j) = emb(train_ids[i], j);
        ytr[i] = labels[train_ids[i]];
      }
      Mat xte(static_cast<int>(test_ids.size()), emb.cols());
      std::vector<int> yte(test_ids.size());
      for (std::size_t i = 0; i < test_ids.size(); ++i) {
        for (int j = 0; j < emb.cols(); ++j) xte(static_cast<int>(i), j) = emb(test_ids[i], j);
        yte[i] = labels[test_ids[i]];
      }
      LinearSvm svm = LinearSvm::fit(xtr, ytr, num_classes, cfg.c, cfg.iterations);
      F1Scores f1 = f1_scores(yte, svm.predict(xte));
      macro += f1.macro;
      micro += f1.micro;
    }
    table.push_back(ProbeRow{p, macro / cfg.repeats, micro / cfg.repeats});
  }
  return table;
}

// ---------------------------------------------------------------------------
// Clustering metrics

inline double normalized_mutual_info(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty())
    throw Error(ErrorKind::ShapeMismatch, "nmi: partition sizes disagree");
  const int ka = *std::max_element(a.begin(), a.end()) + 1;
  const int kb = *std::max_element(b.begin(), b.end()) + 1;
  std::vector<std::vector<long>> joint(ka, std::vector<long>(kb, 0));
  std::vector<long> ca(ka, 0), cb(kb, 0);
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) ++joint[a[i]][b[i]], ++ca[a[i]], ++cb[b[i]];
  double mi = 0.0, ha = 0.0, hb = 0.0;
  for (int i = 0; i < ka; ++i)
    if (ca[i] > 0) ha -= ca[i] / n * std::log(ca[i] / n);
  for (int j = 0; j < kb; ++j)
    if (cb[j] > 0) hb -= cb[j] / n * std::log(cb[j] / n);
  for (int i = 0; i < ka; ++i)
    for (int j = 0; j < kb; ++j)
      if (joint[i][j] > 0)
        mi += joint[i][j] / n * std::log(n * joint[i][j] / (static_cast<double>(ca[i]) * cb[j]));
  const double denom = 0.5 * (ha + hb);  // arithmetic-mean normalization
  if (denom <= 0.0) return 1.0;          // both partitions trivial
  return mi / denom;
}

inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty())
    throw Error(ErrorKind::ShapeMismatch, "ari: partition sizes disagree");
  const int ka = *std::max_element(a.begin(), a.end()) + 1;
  const int kb = *std::max_element(b.begin(), b.end()) + 1;
  std::vector<std::vector<long>> joint(ka, std::vector<long>(kb, 0));
  std::vector<long> ca(ka, 0), cb(kb, 0);
  for (std::size_t i = 0; i < a.size(); ++i) ++joint[a[i]][b[i]], ++ca[a[i]], ++cb[b[i]];
  auto comb2 = [](long m) { return 0.5 * m * (m - 1); };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (int i = 0; i < ka; ++i)
    for (int j = 0; j < kb; ++j) sum_ij += comb2(joint[i][j]);
  for (long m : ca) sum_a += comb2(m);
  for (long m : cb) sum_b += comb2(m);
  const double total = comb2(static_cast<long>(a.size()));
  const double expected = total > 0 ? sum_a * sum_b / total : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both partitions degenerate
  return (sum_ij - expected) / (max_index - expected);
}

struct KmeansResult {
  std::vector<int> assignment;  // from the best-inertia restart
  double nmi = 0.0;             // means over restarts vs labels
  double ari = 0.0;
  double inertia = 0.0;
};

inline std::vector<int> kmeans_once(const Mat& x, int k, Rng& rng, double* inertia_out) {
  const int n = x.rows();
  const int d = x.cols();
  Mat centroids(k, d);
  // k-means++ seeding
  std::vector<double> dist2(n, 1e300);
  {
    const int first = static_cast<int>(rng.below(n));
    for (int j = 0; j < d; ++j) centroids(0, j) = x(first, j);
  }
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) {
        const double diff = x(i, j) - centroids(c - 1, j);
        s += diff * diff;
      }
      dist2[i] = std::min(dist2[i], s);
      total += dist2[i];
    }
    double target = rng.uniform() * total;
    int pick = n - 1;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += dist2[i];
      if (acc >= target) {
        pick = i;
        break;
      }
    }
    for (int j = 0; j < d; ++j) centroids(c, j) = x(pick, j);
  }
  std::vector<int> assign(n, 0);
  std::vector<int> counts(k, 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = 1e300;
      for (int c = 0; c < k; ++c) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) {
          const double diff = x(i, j) - centroids(c, j);
          s += diff * diff;
        }
        if (s < best_d) best_d = s, best = c;
      }
      if (assign[i] != best) assign[i] = best, changed = true;
    }
    centroids = Mat(k, d);
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (int j = 0; j < d; ++j) centroids(assign[i], j) += x(i, j);
    }
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0)
        for (int j = 0; j < d; ++j) centroids(c, j) /= counts[c];
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      // reseed empty cluster at the point farthest from its own centroid
      int far = 0;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) {
          const double diff = x(i, j) - centroids(assign[i], j);
          s += diff * diff;
        }
        if (s > far_d) far_d = s, far = i;
      }
      for (int j = 0; j < d; ++j) centroids(c, j) = x(far, j);
      changed = true;
    }
    if (!changed) break;
  }
  double inertia = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      const double diff = x(i, j) - centroids(assign[i], j);
      inertia += diff * diff;
    }
  if (inertia_out) *inertia_out = inertia;
  return assign;
}

inline KmeansResult kmeans_cluster(const Mat& x, int k, int restarts,
                                   const std::vector<int>& labels, std::uint64_t seed) {
  if (k < 2 || k > x.rows())
    throw Error(ErrorKind::ConfigInvalid, "kmeans: need 2 <= k <= n");
  KmeansResult best;
  best.inertia = 1e300;
  double nmi_sum = 0.0, ari_sum = 0.0;
  for (int r = 0; r < restarts; ++r) {
    Rng rng = keyed_rng(seed, "kmeans", static_cast<std::uint64_t>(r));
    double inertia = 0.0;
    std::vector<int> assign = kmeans_once(x, k, rng, &inertia);
    if (!labels.empty()) {
      nmi_sum += normalized_mutual_info(labels, assign);
      ari_sum += adjusted_rand_index(labels, assign);
    }
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.assignment = std::move(assign);
    }
  }
  if (!labels.empty() && restarts > 0) {
    best.nmi = nmi_sum / restarts;
    best.ari = ari_sum / restarts;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Ranking metrics

struct RankMetrics {
  double auc = 0.0;
  double ap = 0.0;
};

// AUC by the Mann-Whitney statistic with half credit for ties; AP as the
// area under the precision-recall steps with ties broken by index.
inline RankMetrics rank_metrics(const std::vector<double>& scores,
                                const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw Error(ErrorKind::ShapeMismatch, "rank_metrics: scores vs labels");
  long pos = 0, neg = 0;
  for (int l : labels) (l ? pos : neg) += 1;
  if (pos == 0 || neg == 0)
    throw Error(ErrorKind::SingleClass, "rank_metrics: need both classes");

  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    if (scores[i] != scores[j]) return scores[i] < scores[j];
    return i < j;
  });
  // rank-sum over positives with average ranks within tie groups
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) rank_sum += avg_rank;
    i = j;
  }
  const double auc = (rank_sum - 0.5 * pos * (pos + 1)) / (static_cast<double>(pos) * neg);

  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  double ap = 0.0;
  long tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]]) {
      ++tp;
      ap += static_cast<double>(tp) / static_cast<double>(k + 1);
    }
  }
  ap /= static_cast<double>(pos);
  return RankMetrics{auc, ap};
}

}  // namespace mvhet
