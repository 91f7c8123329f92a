#pragma once

// Shared test fixtures and independent oracles. Everything here computes
// with plain Mat arithmetic or hand-rolled loops, never through the tape,
// so tape results can be checked against an independent route.

#include <cmath>
#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "mvhet/experiment.hpp"
#include "mvhet/hetgraph.hpp"
#include "mvhet/ingest.hpp"
#include "mvhet/model.hpp"
#include "mvhet/tensor.hpp"
#include "mvhet/views.hpp"

namespace mvtest {

using namespace mvhet;

// --- toy graph: 3 authors, 2 papers, write/written_by, 4 edges ------------

struct ToyGraph {
  HeteroGraph g;
  NodeTypeId author, paper;
  RelationTypeId write, written_by;
};

inline ToyGraph make_toy_graph(int feat_dim = 3) {
  GraphBuilder b;
  ToyGraph t;
  t.author = b.add_node_type("author", 3, feat_dim);
  t.paper = b.add_node_type("paper", 2, feat_dim);
  auto [w, wb] = b.add_relation("write", t.author, t.paper, "written_by");
  t.write = w;
  t.written_by = wb;
  b.add_edges(w, {{0, 0}, {0, 1}, {1, 0}, {2, 1}});
  Rng rng(42);
  b.set_features(t.author, gaussian(3, feat_dim, 1.0, rng));
  b.set_features(t.paper, gaussian(2, feat_dim, 1.0, rng));
  t.g = b.build();
  return t;
}

// --- finite differences ----------------------------------------------------

struct FdStats {
  double max_rel = 0.0;
  double frac_below_tight = 1.0;  // fraction of entries with rel err < tight tol
  long entries = 0;
};

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Central finite differences (h = 1e-5) of `loss` over every entry of the
// given matrices, compared against `analytic` gradients entry by entry.
inline FdStats fd_compare(std::vector<Mat*> inputs, const std::vector<Mat>& analytic,
                          const std::function<double()>& loss, double tight = 1e-4,
                          double h = 1e-5) {
  FdStats stats;
  long ok = 0;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    Mat& m = *inputs[p];
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double keep = m.data()[i];
      m.data()[i] = keep + h;
      const double up = loss();
      m.data()[i] = keep - h;
      const double down = loss();
      m.data()[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      const double rel = rel_err(analytic[p].data()[i], fd);
      stats.max_rel = std::max(stats.max_rel, rel);
      ok += rel < tight;
      ++stats.entries;
    }
  }
  stats.frac_below_tight = stats.entries ? static_cast<double>(ok) / stats.entries : 1.0;
  return stats;
}

// --- independent per-node ego graph aggregation -----------------------------
// Recursive scalar evaluation of the view encoder over one node's Relaxed
// ego graph; mirrors the level-wise math with per-node loops.

struct EgoOracleParams {
  std::vector<Mat> h_prime;             // per type
  std::map<RelationTypeId, Mat> h_rel;  // 1 x d'
  Mat w_out, w_in;                      // d' x d'
  bool use_transe = true;
};

inline std::vector<double> ego_oracle_embed(const HeteroGraph& g, const Metapath& path, int v,
                                            const EgoOracleParams& p) {
  const int d = p.w_out.cols();
  EgoGraph ego = extract_ego_oracle(g, path, v, EgoSemantics::Relaxed);
  const int levels = static_cast<int>(path.node_types.size());
  std::map<std::pair<int, int>, std::vector<double>> state;  // (level, node) -> h
  for (int node : ego.level_nodes[0]) {
    const Mat& hp = p.h_prime[path.node_types[0]];
    std::vector<double> h(d);
    for (int j = 0; j < d; ++j) h[j] = hp(node, j);
    state[{0, node}] = std::move(h);
  }
  for (int l = 1; l < levels; ++l) {
    const RelationSpec& rel = g.relation(path.relations[l - 1]);
    const Mat& w = rel.direction == Direction::Forward ? p.w_out : p.w_in;
    const Mat* hr = p.use_transe ? &p.h_rel.at(rel.id) : nullptr;
    // group edges by upper node
    std::map<int, std::vector<int>> children;
    for (int node : ego.level_nodes[l]) children[node];
    for (const auto& [up, down] : ego.level_edges[l]) children[up].push_back(down);
    for (int node : ego.level_nodes[l]) {
      std::vector<double> agg(d, 0.0);
      const auto& kids = children[node];
      for (int kid : kids) {
        const std::vector<double>& hk = state.at({l - 1, kid});
        for (int out = 0; out < d; ++out) {
          double s = 0.0;
          for (int in = 0; in < d; ++in)
            s += (hk[in] + (hr ? (*hr)(0, in) : 0.0)) * w(in, out);
          agg[out] += s;
        }
      }
      std::vector<double> h(d);
      const Mat& hp = p.h_prime[path.node_types[l]];
      for (int j = 0; j < d; ++j) {
        double mean = kids.empty() ? 0.0 : agg[j] / static_cast<double>(kids.size());
        h[j] = hp(node, j) + std::max(0.0, mean);
      }
      state[{l, node}] = std::move(h);
    }
  }
  std::vector<double> out = state.at({levels - 1, v});
  for (double& x : out) x /= static_cast<double>(path.length());
  return out;
}

// --- random heterogeneous graphs for property tests -------------------------

struct RandomGraph {
  HeteroGraph g;
  std::vector<Metapath> paths;  // candidate metapaths of length 1..4
};

inline RandomGraph make_random_graph(std::uint64_t seed) {
  Rng rng(seed);
  const int num_types = 2 + static_cast<int>(rng.below(2));
  GraphBuilder b;
  std::vector<int> counts;
  for (int t = 0; t < num_types; ++t) {
    const int count = 3 + static_cast<int>(rng.below(8));
    counts.push_back(count);
    b.add_node_type("t" + std::to_string(t), count, 3);
  }
  const int num_rel = 2 + static_cast<int>(rng.below(2));
  std::vector<std::pair<int, int>> endpoints;
  for (int r = 0; r < num_rel; ++r) {
    const int src = static_cast<int>(rng.below(num_types));
    const int dst = static_cast<int>(rng.below(num_types));
    auto [fwd, inv] = b.add_relation("r" + std::to_string(r), src, dst,
                                     "r" + std::to_string(r) + "_inv");
    (void)inv;
    endpoints.emplace_back(src, dst);
    std::vector<std::pair<int, int>> edges;
    for (int u = 0; u < counts[src]; ++u)
      for (int v = 0; v < counts[dst]; ++v)
        if (rng.uniform() < 0.25) edges.emplace_back(u, v);
    b.add_edges(fwd, edges);
  }
  for (int t = 0; t < num_types; ++t) b.set_features(t, gaussian(counts[t], 3, 1.0, rng));
  RandomGraph out;
  out.g = b.build();
  // random walks over the schema give metapaths of length 1..4
  for (int len = 1; len <= 4; ++len) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      std::vector<NodeTypeId> types;
      std::vector<RelationTypeId> rels;
      NodeTypeId cur = static_cast<int>(rng.below(num_types));
      types.push_back(cur);
      bool ok = true;
      for (int step = 0; step < len; ++step) {
        std::vector<RelationTypeId> options;
        for (const RelationSpec& r : out.g.relations())
          if (r.src_type == cur) options.push_back(r.id);
        if (options.empty()) {
          ok = false;
          break;
        }
        RelationTypeId pick = options[rng.below(options.size())];
        rels.push_back(pick);
        cur = out.g.relation(pick).dst_type;
        types.push_back(cur);
      }
      if (!ok) continue;
      Metapath p;
      p.name = "p" + std::to_string(len);
      p.node_types = types;
      p.relations = rels;
      out.paths.push_back(p);
      break;
    }
  }
  return out;
}

// --- acceptance fixtures -----------------------------------------------------

// Planted 3-class heterogeneous graph: 600 items with two tag types and
// three views (IAI, IBI, IAIAI).
inline ExperimentConfig classify_fixture(std::uint64_t seed, double separation = 1.5) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.data_seed = seed;
  cfg.task = TaskKind::NodeClassification;
  cfg.target_type = "item";
  cfg.train_frac = 0.1;
  cfg.val_frac = 0.1;
  cfg.test_frac = 0.8;
  cfg.model.d_prime = 16;
  cfg.model.d_mid = 16;
  cfg.model.d = 16;
  cfg.model.lambda = 0.1;
  cfg.model.dropout = 0.2;
  cfg.train.epochs = 300;
  cfg.train.patience = 60;
  cfg.train.lr = 0.005;
  cfg.train.seed = seed;
  cfg.probe.seed = seed;
  cfg.metapaths = {{"IAI", "item -ia-> tagA -ai-> item"},
                   {"IBI", "item -ib-> tagB -bi-> item"},
                   {"IAIAI", "item -ia-> tagA -ai-> item -ia-> tagA -ai-> item"}};
  cfg.synthetic = true;
  cfg.synth.classes = 3;
  cfg.synth.intra = 0.05;
  cfg.synth.inter = 0.005;
  cfg.synth.noise = 1.0;
  cfg.synth.separation = separation;
  cfg.synth.types = {{"item", 600, 16}, {"tagA", 120, 8}, {"tagB", 120, 8}};
  cfg.synth.relations = {{"ia", "item", "tagA", "ai"}, {"ib", "item", "tagB", "bi"}};
  return cfg;
}

// Planted 10-block user/artist graph with tags; the link prediction fixture
// trained on 20% of the ua links.
inline ExperimentConfig link_fixture(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.data_seed = seed;
  cfg.task = TaskKind::LinkPrediction;
  cfg.target_relation = "ua";
  cfg.train_frac = 0.2;
  cfg.val_frac = 0.1;
  cfg.test_frac = 0.7;
  cfg.model.d_prime = 16;
  cfg.model.d_mid = 16;
  cfg.model.d = 16;
  cfg.model.lambda = 0.1;
  cfg.model.dropout = 0.5;
  cfg.train.epochs = 1500;
  cfg.train.patience = 200;
  cfg.train.lr = 0.005;
  cfg.train.seed = seed;
  cfg.probe.seed = seed;
  cfg.metapaths = {{"UAU", "user -ua-> artist -au-> user"},
                   {"UU", "user -uu-> user"},
                   {"AUA", "artist -au-> user -ua-> artist"},
                   {"ATA", "artist -at-> tag -ta-> artist"}};
  cfg.synthetic = true;
  cfg.synth.classes = 10;
  cfg.synth.intra = 0.12;
  cfg.synth.inter = 0.0005;
  cfg.synth.noise = 1.0;
  cfg.synth.separation = 2.0;
  cfg.synth.types = {{"user", 400, 40}, {"artist", 600, 40}, {"tag", 60, 20}};
  cfg.synth.relations = {{"ua", "user", "artist", "au"},
                         {"uu", "user", "user", "uu_rev"},
                         {"at", "artist", "tag", "ta", 0.5, 0.005}};
  return cfg;
}

// Mean macro-F1 of the default-protocol SVM probe on the given rows.
inline double probe_macro_f1(const Mat& emb, const std::vector<int>& rows,
                             const std::vector<int>& labels, std::uint64_t seed,
                             std::vector<double> proportions = {0.2, 0.4, 0.6, 0.8}) {
  Mat x(static_cast<int>(rows.size()), emb.cols());
  std::vector<int> y;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < emb.cols(); ++j) x(static_cast<int>(i), j) = emb(rows[i], j);
    y.push_back(labels[rows[i]]);
  }
  ProbeConfig pc;
  pc.proportions = std::move(proportions);
  pc.repeats = 10;
  pc.seed = seed;
  std::vector<ProbeRow> rows_out = svm_probe(x, y, pc);
  double m = 0.0;
  for (const ProbeRow& r : rows_out) m += r.macro_f1;
  return m / rows_out.size();
}

// Classifier argmax macro-F1 on the given rows.
inline double classifier_macro_f1(MvHetModel& model, const ExperimentData& data,
                                  const std::vector<int>& rows) {
  Tape tape;
  ModelForward fwd = model.forward(tape, false, 0);
  Tensor logits = model.classify(tape, fwd);
  const auto& labels = *data.graph.labels(data.target);
  std::vector<int> y_true, y_pred;
  for (int i : rows) {
    y_true.push_back(labels[i]);
    int best = 0;
    for (int c = 1; c < logits.cols(); ++c)
      if (logits.val()(i, c) > logits.val()(i, best)) best = c;
    y_pred.push_back(best);
  }
  return f1_scores(y_true, y_pred).macro;
}

// Composed-decoder reconstruction of view j from the fused representation:
// slice of the supervised decoder followed by the view decoder layers.
inline double composed_reconstruction_rel_err(MvHetModel& model, const ModelForward& fwd,
                                              int view_index) {
  const ModelConfig& cfg = model.config();
  const ParamStore& ps = model.params();
  const Mat& h = fwd.fused[0].val();
  const Mat& w2 = ps.value("sae/W2");
  const Mat& b2 = ps.value("sae/b2");
  const int dm = cfg.d_mid;
  Mat z(h.rows(), dm);
  for (int r = 0; r < h.rows(); ++r)
    for (int c = 0; c < dm; ++c) {
      double s = b2(0, view_index * dm + c);
      for (int k = 0; k < h.cols(); ++k) s += h(r, k) * w2(k, view_index * dm + c);
      z(r, c) = std::max(0.0, s);
    }
  const std::string& vname = model.plans()[view_index].path.name;
  for (int m = cfg.ae_layers / 2 + 1; m <= cfg.ae_layers; ++m) {
    const Mat& w = ps.value("ae/" + vname + "/" + std::to_string(m) + "/W");
    const Mat& b = ps.value("ae/" + vname + "/" + std::to_string(m) + "/b");
    Mat next(z.rows(), w.cols());
    for (int r = 0; r < z.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) {
        double s = b(0, c);
        for (int k = 0; k < z.cols(); ++k) s += z(r, k) * w(k, c);
        next(r, c) = std::max(0.0, s);
      }
    z = std::move(next);
  }
  const Mat& target = fwd.view_out[view_index].val();
  return frobenius_norm(sub(z, target)) / frobenius_norm(target);
}

// Rebuilds the graph with the labels of one type shuffled (control runs).
inline HeteroGraph with_permuted_labels(const HeteroGraph& g, NodeTypeId type,
                                        std::uint64_t seed) {
  GraphBuilder b;
  for (const NodeType& t : g.types()) {
    b.add_node_type(t.name, t.count, t.feat_dim);
    b.set_features(t.id, g.features(t.id));
    if (g.labels(t.id).has_value()) {
      std::vector<int> labels = *g.labels(t.id);
      if (t.id == type) {
        Rng rng = keyed_rng(seed, "label_permutation");
        for (std::size_t i = labels.size(); i > 1; --i)
          std::swap(labels[i - 1], labels[rng.below(i)]);
      }
      b.set_labels(t.id, labels);
    }
  }
  for (const RelationSpec& r : g.relations()) {
    if (r.direction != Direction::Forward) continue;
    auto [f, i] = b.add_relation(r.name, r.src_type, r.dst_type, g.relation(r.inverse_of).name);
    (void)i;
    b.add_edges(f, g.adjacency(r.id).pairs());
  }
  return b.build();
}

}  // namespace mvtest
