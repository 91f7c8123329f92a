#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mvhet/errors.hpp"
#include "mvhet/hetgraph.hpp"
#include "mvhet/optim.hpp"
#include "mvhet/rng.hpp"
#include "mvhet/tensor.hpp"
#include "mvhet/views.hpp"

namespace mvhet {

enum class Fusion { Auto, Concat, Mean, Attention };

inline const char* fusion_name(Fusion f) {
  switch (f) {
    case Fusion::Auto: return "auto";
    case Fusion::Concat: return "concat";
    case Fusion::Mean: return "mean";
    case Fusion::Attention: return "attn";
  }
  return "?";
}

struct ModelConfig {
  int d_prime = 16;   // unified dimension after feature transform
  int d_mid = 8;      // view autoencoder bottleneck width
  int d = 8;          // fused representation width
  int ae_layers = 2;  // M, even
  Fusion fusion = Fusion::Auto;
  bool use_transe = true;
  bool use_autoencoders = true;
  bool use_ortho_reg = true;
  double lambda = 0.1;
  double ortho_coeff = 1.0;  // multiplier on L_ortho in the total loss
  double dropout = 0.5;

  void validate() const {
    if (d_prime <= 0 || d_mid <= 0 || d <= 0)
      throw Error(ErrorKind::ConfigInvalid, "model dimensions must be positive");
    if (ae_layers < 2 || ae_layers % 2 != 0)
      throw Error(ErrorKind::ConfigInvalid, "ae_layers must be even and >= 2");
    if (lambda < 0.0) throw Error(ErrorKind::ConfigInvalid, "lambda must be >= 0");
    if (dropout < 0.0 || dropout >= 1.0)
      throw Error(ErrorKind::InvalidProbability, "dropout must be in [0,1)");
  }
};

struct ModelForward {
  std::vector<Tensor> view_out;  // H^{P_j}, aligned with plan order
  std::vector<Tensor> fused;     // one per target group
  Tensor l_intra;
  Tensor l_inter;
  Tensor l_ortho;
  std::vector<Tensor> leaves;  // aligned with ParamStore order
};

// All learnable layers of the network: type-specific feature transforms,
// the view-specific ego graph encoder (TransE composition + direction
// matrices), and the fusion layer in its auto / concat / mean / attention
// forms. Holds the parameters; each forward pass records onto a fresh tape.
class MvHetModel {
 public:
  MvHetModel(const HeteroGraph& g, std::vector<ViewPlan> plans, ModelConfig cfg, int num_classes,
             std::uint64_t seed)
      : g_(&g), plans_(std::move(plans)), cfg_(cfg), num_classes_(num_classes), seed_(seed) {
    cfg_.validate();
    if (plans_.empty()) throw Error(ErrorKind::EmptyViewSet, "model needs at least one view");
    // groups = distinct target types in first-appearance order
    for (std::size_t j = 0; j < plans_.size(); ++j) {
      NodeTypeId t = plans_[j].target_type();
      int gi = -1;
      for (std::size_t k = 0; k < groups_.size(); ++k)
        if (groups_[k] == t) gi = static_cast<int>(k);
      if (gi < 0) {
        gi = static_cast<int>(groups_.size());
        groups_.push_back(t);
        group_views_.emplace_back();
      }
      group_views_[gi].push_back(static_cast<int>(j));
    }
    if (num_classes_ > 0 && groups_.size() != 1)
      throw Error(ErrorKind::ConfigInvalid, "classification expects a single target type");
    register_params();
  }

  const HeteroGraph& graph() const { return *g_; }
  const ModelConfig& config() const { return cfg_; }
  const std::vector<ViewPlan>& plans() const { return plans_; }
  const std::vector<NodeTypeId>& groups() const { return groups_; }
  const std::vector<int>& views_of_group(int gi) const { return group_views_[gi]; }
  int group_of_type(NodeTypeId t) const {
    for (std::size_t k = 0; k < groups_.size(); ++k)
      if (groups_[k] == t) return static_cast<int>(k);
    throw Error(ErrorKind::TypeMismatch, "type is not a fusion target: " + g_->type(t).name);
  }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  int fused_width() const {
    switch (cfg_.fusion) {
      case Fusion::Auto: return cfg_.d;
      case Fusion::Concat: return cfg_.d_prime * static_cast<int>(group_views_[0].size());
      case Fusion::Mean:
      case Fusion::Attention: return cfg_.d_prime;
    }
    return cfg_.d;
  }

  ModelForward forward(Tape& tape, bool training, std::int64_t epoch) {
    ModelForward out;
    out.leaves.reserve(params_.size());
    for (int p = 0; p < params_.size(); ++p)
      out.leaves.push_back(tape.leaf(params_.value(p), true));
    dropout_site_ = 0;

    // type-specific feature transform, shared across views
    std::unordered_map<NodeTypeId, Tensor> h_prime;
    for (NodeTypeId t : transform_types_) {
      Tensor x = tape.constant(g_->features(t));
      h_prime.emplace(t, tape.relu(tape.matmul(x, leaf(out, "W_type/" + g_->type(t).name))));
    }

    for (const ViewPlan& plan : plans_)
      out.view_out.push_back(encode_view(tape, plan, h_prime, out, training, epoch));

    Tensor intra = tape.scalar_const(0.0);
    Tensor inter = tape.scalar_const(0.0);
    Tensor ortho = tape.scalar_const(0.0);
    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
      std::vector<Tensor> views;
      for (int j : group_views_[gi]) views.push_back(out.view_out[j]);
      if (cfg_.fusion == Fusion::Auto) {
        auto fused = fuse_auto(tape, static_cast<int>(gi), views, out);
        out.fused.push_back(fused.h);
        intra = tape.add(intra, fused.l_intra);
        inter = tape.add(inter, fused.l_inter);
        ortho = tape.add(ortho, fused.l_ortho);
      } else {
        out.fused.push_back(fuse_variant(tape, static_cast<int>(gi), views, out));
      }
    }
    out.l_intra = intra;
    out.l_inter = inter;
    out.l_ortho = ortho;
    return out;
  }

  // logits = H W_C^T (classification head)
  Tensor classify(Tape& tape, const ModelForward& fwd) {
    if (num_classes_ <= 0) throw Error(ErrorKind::MissingLabels, "model has no classifier");
    return tape.matmul(fwd.fused[0], tape.transpose(leaf(fwd, "clf/W_C")));
  }

  // σ(h_u . h_a) for the given (row in group of u_type, row in group of a_type) pairs
  Tensor score_links(Tape& tape, const ModelForward& fwd, NodeTypeId u_type, NodeTypeId a_type,
                     const std::vector<std::pair<int, int>>& pairs) {
    return tape.sigmoid(link_logits(tape, fwd, u_type, a_type, pairs));
  }

  Tensor link_logits(Tape& tape, const ModelForward& fwd, NodeTypeId u_type, NodeTypeId a_type,
                     const std::vector<std::pair<int, int>>& pairs) {
    Tensor hu = fwd.fused[group_of_type(u_type)];
    Tensor ha = fwd.fused[group_of_type(a_type)];
    return tape.pairwise_dot(hu, ha, pairs);
  }

  std::vector<Mat> gradients(const ModelForward& fwd) const {
    std::vector<Mat> out;
    out.reserve(fwd.leaves.size());
    for (const Tensor& t : fwd.leaves) out.push_back(t.grad());
    return out;
  }

 private:
  struct FusedOut {
    Tensor h, l_intra, l_inter, l_ortho;
  };

  Tensor leaf(const ModelForward& fwd, const std::string& name) const {
    return fwd.leaves[params_.id_of(name)];
  }

  // Supervised-encoder init: J stacked identity blocks scaled 1/J when the
  // block is square, so fusion starts as the mean of the view bottlenecks
  // (columns orthogonal, off-diagonal Gram zero). Falls back to a random
  // orthonormal matrix for non-square blocks.
  static Mat stacked_identity(int views, int block, int out, Rng& rng) {
    if (block != out) return orthonormal(views * block, out, rng);
    Mat w(views * block, out);
    for (int j = 0; j < views; ++j)
      for (int i = 0; i < block; ++i) w(j * block + i, i) = 1.0 / views;
    return w;
  }

  // Supervised-decoder init: identity blocks tiled horizontally when the
  // block is square, so reconstruction starts by copying the fused state
  // into every slot; random orthonormal otherwise.
  static Mat tiled_identity(int views, int d, int concat_w, Rng& rng) {
    if (concat_w != views * d) return orthonormal(d, concat_w, rng);
    Mat w(d, concat_w);
    for (int j = 0; j < views; ++j)
      for (int i = 0; i < d; ++i) w(i, j * d + i) = 1.0;
    return w;
  }

  // encoder/decoder widths for one view autoencoder; layer m in 1..M
  int ae_dim(int m) const {
    const int half = cfg_.ae_layers / 2;
    if (m <= half) {
      double f = static_cast<double>(m) / half;
      return static_cast<int>(std::lround(cfg_.d_prime + f * (cfg_.d_mid - cfg_.d_prime)));
    }
    double f = static_cast<double>(m - half) / half;
    return static_cast<int>(std::lround(cfg_.d_mid + f * (cfg_.d_prime - cfg_.d_mid)));
  }

  std::string group_prefix(int gi) const {
    return groups_.size() == 1 ? std::string() : g_->type(groups_[gi]).name + "/";
  }

  void register_params() {
    Rng rng = keyed_rng(seed_, "init");
    // node types appearing on any metapath, in plan order
    for (const ViewPlan& plan : plans_)
      for (NodeTypeId t : plan.path.node_types) {
        bool seen = false;
        for (NodeTypeId u : transform_types_) seen = seen || u == t;
        if (!seen) transform_types_.push_back(t);
      }
    for (NodeTypeId t : transform_types_)
      params_.add("W_type/" + g_->type(t).name,
                  glorot(g_->type(t).feat_dim, cfg_.d_prime, rng));

    bool any_forward = false, any_inverse = false;
    std::vector<RelationTypeId> rels;
    for (const ViewPlan& plan : plans_)
      for (RelationTypeId r : plan.path.relations) {
        bool seen = false;
        for (RelationTypeId s : rels) seen = seen || s == r;
        if (!seen) rels.push_back(r);
        (g_->relation(r).direction == Direction::Forward ? any_forward : any_inverse) = true;
      }
    if (cfg_.use_transe)
      for (RelationTypeId r : rels)
        params_.add("h_rel/" + g_->relation(r).name,
                    gaussian(1, cfg_.d_prime, 1.0 / std::sqrt(cfg_.d_prime), rng));
    if (any_forward) params_.add("W_dir/O", glorot(cfg_.d_prime, cfg_.d_prime, rng));
    if (any_inverse) params_.add("W_dir/I", glorot(cfg_.d_prime, cfg_.d_prime, rng));

    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
      const int views = static_cast<int>(group_views_[gi].size());
      const std::string prefix = group_prefix(static_cast<int>(gi));
      if (cfg_.fusion == Fusion::Auto) {
        if (cfg_.use_autoencoders) {
          for (int j : group_views_[gi])
            for (int m = 1; m <= cfg_.ae_layers; ++m) {
              // square layers start at the identity (orthonormal and lossless
              // under ReLU since view embeddings are nonnegative)
              const int rows = ae_dim(m - 1), cols = ae_dim(m);
              params_.add("ae/" + plans_[j].path.name + "/" + std::to_string(m) + "/W",
                          rows == cols ? Mat::identity(rows) : orthonormal(rows, cols, rng));
              params_.add("ae/" + plans_[j].path.name + "/" + std::to_string(m) + "/b",
                          Mat(1, cols));
            }
          const int concat_w = cfg_.d_mid * views;
          params_.add("sae/" + prefix + "W1", stacked_identity(views, cfg_.d_mid, cfg_.d, rng));
          params_.add("sae/" + prefix + "b1", Mat(1, cfg_.d));
          params_.add("sae/" + prefix + "W2", tiled_identity(views, cfg_.d, concat_w, rng));
          params_.add("sae/" + prefix + "b2", Mat(1, concat_w));
        } else {
          // hierarchical autoencoders ablated: one linear layer on the raw concat
          params_.add("sae/" + prefix + "W1",
                      stacked_identity(views, cfg_.d_prime, cfg_.d, rng));
          params_.add("sae/" + prefix + "b1", Mat(1, cfg_.d));
        }
      } else if (cfg_.fusion == Fusion::Attention) {
        params_.add("attn/" + prefix + "Wa", glorot(cfg_.d_prime, cfg_.d_prime, rng));
        params_.add("attn/" + prefix + "ba", Mat(1, cfg_.d_prime));
        params_.add("attn/" + prefix + "q", glorot(cfg_.d_prime, 1, rng));
      }
    }
    if (num_classes_ > 0)
      params_.add("clf/W_C", glorot(num_classes_, fused_width(), rng));
  }

  // Bottom-up level-wise propagation: TransE-composed messages through the
  // direction matrix, mean aggregation, residual, final division by depth.
  Tensor encode_view(Tape& tape, const ViewPlan& plan,
                     const std::unordered_map<NodeTypeId, Tensor>& h_prime,
                     const ModelForward& fwd, bool training, std::int64_t epoch) {
    Tensor h = h_prime.at(plan.path.node_types.front());
    for (const ViewLevel& level : plan.levels) {
      const RelationSpec& rel = g_->relation(level.relation);
      Tensor msg = h;
      if (cfg_.use_transe)
        msg = tape.add_rowvec(msg, leaf(fwd, "h_rel/" + rel.name));
      msg = tape.matmul(msg, leaf(fwd, rel.direction == Direction::Forward ? "W_dir/O"
                                                                           : "W_dir/I"));
      Tensor agg = tape.spmm_mean(level.gather, msg, level.norms);
      Tensor res = tape.add(h_prime.at(level.level_type), tape.relu(agg));
      const std::uint64_t key =
          hash_mix(hash_mix(seed_, hash_tag("dropout")),
                   hash_mix(static_cast<std::uint64_t>(dropout_site_++),
                            static_cast<std::uint64_t>(epoch)));
      h = tape.dropout(res, cfg_.dropout, training, key);
    }
    return tape.scale(h, 1.0 / plan.depth);
  }

  // View autoencoders, supervised autoencoder over the concatenated
  // bottlenecks, orthogonal penalty on every encoder layer.
  FusedOut fuse_auto(Tape& tape, int gi, const std::vector<Tensor>& views,
                     const ModelForward& fwd) {
    if (views.empty()) throw Error(ErrorKind::EmptyViewSet, "fuse_auto: no views");
    const std::string prefix = group_prefix(gi);
    const int half = cfg_.ae_layers / 2;
    Tensor intra = tape.scalar_const(0.0);
    Tensor ortho = tape.scalar_const(0.0);

    // Reconstruction losses are halved elementwise means rather than raw
    // Frobenius sums so that lambda keeps one scale across graph sizes and
    // widths, matching the mean reduction of the classification loss.
    const double n_rows = static_cast<double>(views[0].rows());

    std::vector<Tensor> bottlenecks;
    if (cfg_.use_autoencoders) {
      for (std::size_t k = 0; k < views.size(); ++k) {
        const std::string& vname = plans_[group_views_[gi][k]].path.name;
        Tensor z = views[k];
        for (int m = 1; m <= cfg_.ae_layers; ++m) {
          Tensor w = leaf(fwd, "ae/" + vname + "/" + std::to_string(m) + "/W");
          Tensor b = leaf(fwd, "ae/" + vname + "/" + std::to_string(m) + "/b");
          z = tape.relu(tape.add_rowvec(tape.matmul(z, w), b));
          if (m == half) bottlenecks.push_back(z);
          if (m <= half && cfg_.use_ortho_reg) ortho = tape.add(ortho, tape.l1_offdiag_gram(w));
        }
        intra = tape.add(intra, tape.frobenius_sq(tape.sub(views[k], z)));
      }
    } else {
      bottlenecks = views;
    }
    intra = tape.scale(intra, 0.5 / (n_rows * cfg_.d_prime));

    Tensor z_cat = tape.concat_cols(bottlenecks);
    Tensor w1 = leaf(fwd, "sae/" + prefix + "W1");
    Tensor h = tape.relu(tape.add_rowvec(tape.matmul(z_cat, w1), leaf(fwd, "sae/" + prefix + "b1")));
    if (cfg_.use_ortho_reg) ortho = tape.add(ortho, tape.l1_offdiag_gram(w1));

    Tensor inter = tape.scalar_const(0.0);
    if (cfg_.use_autoencoders) {
      Tensor z_re = tape.relu(tape.add_rowvec(tape.matmul(h, leaf(fwd, "sae/" + prefix + "W2")),
                                              leaf(fwd, "sae/" + prefix + "b2")));
      inter = tape.scale(tape.frobenius_sq(tape.sub(z_re, z_cat)),
                         0.5 / (n_rows * z_cat.cols()));
    }
    return FusedOut{h, intra, inter, ortho};
  }

  Tensor fuse_variant(Tape& tape, int gi, const std::vector<Tensor>& views,
                      const ModelForward& fwd) {
    if (views.empty()) throw Error(ErrorKind::EmptyViewSet, "fuse_variant: no views");
    switch (cfg_.fusion) {
      case Fusion::Concat:
        return tape.concat_cols(views);
      case Fusion::Mean: {
        Tensor acc = views[0];
        for (std::size_t k = 1; k < views.size(); ++k) acc = tape.add(acc, views[k]);
        return tape.scale(acc, 1.0 / static_cast<double>(views.size()));
      }
      case Fusion::Attention: {
        // one shared query scores each view from its mean row
        const std::string prefix = group_prefix(gi);
        Tensor wa = leaf(fwd, "attn/" + prefix + "Wa");
        Tensor ba = leaf(fwd, "attn/" + prefix + "ba");
        Tensor q = leaf(fwd, "attn/" + prefix + "q");
        std::vector<Tensor> scores;
        for (const Tensor& v : views) {
          Tensor summary = tape.tanh(tape.add_rowvec(tape.matmul(tape.rows_mean(v), wa), ba));
          scores.push_back(tape.matmul(summary, q));  // 1x1
        }
        Tensor alpha = tape.softmax_rows(tape.concat_cols(scores));  // 1xJ
        Tensor fusedv = tape.mul_scalar(views[0], tape.col(alpha, 0));
        for (std::size_t k = 1; k < views.size(); ++k)
          fusedv = tape.add(fusedv, tape.mul_scalar(views[k], tape.col(alpha, static_cast<int>(k))));
        return fusedv;
      }
      case Fusion::Auto: break;
    }
    throw Error(ErrorKind::UnknownVariant, "fuse_variant called with auto fusion");
  }

  const HeteroGraph* g_;
  std::vector<ViewPlan> plans_;
  ModelConfig cfg_;
  int num_classes_;
  std::uint64_t seed_;
  ParamStore params_;
  std::vector<NodeTypeId> groups_;
  std::vector<std::vector<int>> group_views_;
  std::vector<NodeTypeId> transform_types_;
  int dropout_site_ = 0;
};

}  // namespace mvhet
