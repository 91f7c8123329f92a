#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "helpers.hpp"
#include "mvhet/checkpoint.hpp"
#include "mvhet/model.hpp"

using namespace mvhet;
using mvtest::make_toy_graph;

namespace {

ModelConfig tiny_config(Fusion fusion = Fusion::Auto) {
  ModelConfig cfg;
  cfg.d_prime = 4;
  cfg.d_mid = 4;
  cfg.d = 4;
  cfg.fusion = fusion;
  cfg.dropout = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("feature transform applies ReLU(X W) type by type") {
  mvtest::ToyGraph toy = make_toy_graph(3);
  Metapath p = parse_metapath(toy.g, "APA", "author -write-> paper -written_by-> author");
  ModelConfig cfg = tiny_config();
  MvHetModel model(toy.g, {compile_view(toy.g, p)}, cfg, 0, 1);
  Tape tape;
  ModelForward fwd = model.forward(tape, false, 0);
  // recompute H' for authors independently
  const Mat& x = toy.g.features(toy.author);
  const Mat& w = model.params().value("W_type/author");
  Mat expect = relu(matmul(x, w));
  REQUIRE(expect.rows() == 3);
  REQUIRE(expect.cols() == 4);
  // negative pre-activations must clamp to exactly zero
  bool found_zero = false;
  for (double v : expect.data()) found_zero = found_zero || v == 0.0;
  REQUIRE(found_zero);
}

TEST_CASE("encoder residual floor: empty adjacency gives H'/depth exactly") {
  GraphBuilder b;
  NodeTypeId a = b.add_node_type("a", 3, 4);
  NodeTypeId p = b.add_node_type("p", 2, 4);
  b.add_relation("w", a, p, "wb");  // no edges at all
  Rng rng(3);
  Mat xa = gaussian(3, 4, 1.0, rng);
  Mat xp = gaussian(2, 4, 1.0, rng);
  b.set_features(a, xa);
  b.set_features(p, xp);
  HeteroGraph g = b.build();
  Metapath path = parse_metapath(g, "APA", "a -w-> p -wb-> a");
  MvHetModel model(g, {compile_view(g, path)}, tiny_config(), 0, 1);
  // pin the degenerate parameters
  model.params().value("W_dir/O") = Mat::identity(4);
  model.params().value("W_dir/I") = Mat::identity(4);
  model.params().value("h_rel/w") = Mat(1, 4);
  model.params().value("h_rel/wb") = Mat(1, 4);
  Tape tape;
  ModelForward fwd = model.forward(tape, false, 0);
  const Mat& w_type = model.params().value("W_type/a");
  Mat expect = scale(relu(matmul(xa, w_type)), 0.5);  // depth 2
  REQUIRE(max_abs_diff(fwd.view_out[0].val(), expect) == 0.0);
}

TEST_CASE("single-neighbor aggregation matches the closed form") {
  // path of length 1 with one neighbor n: output = (h_v' + relu(h_n')) / 1
  GraphBuilder b;
  NodeTypeId a = b.add_node_type("a", 1, 4);
  NodeTypeId p = b.add_node_type("p", 1, 4);
  auto [w, wb] = b.add_relation("w", a, p, "wb");
  (void)wb;
  b.add_edges(w, {{0, 0}});
  Rng rng(5);
  Mat xa = gaussian(1, 4, 1.0, rng);
  Mat xp = gaussian(1, 4, 1.0, rng);
  b.set_features(a, xa);
  b.set_features(p, xp);
  HeteroGraph g = b.build();
  Metapath path = parse_metapath(g, "AP", "a -w-> p");
  MvHetModel model(g, {compile_view(g, path)}, tiny_config(), 0, 1);
  model.params().value("W_dir/O") = Mat::identity(4);
  model.params().value("h_rel/w") = Mat(1, 4);
  Tape tape;
  ModelForward fwd = model.forward(tape, false, 0);
  Mat ha = relu(matmul(xa, model.params().value("W_type/a")));
  Mat hp = relu(matmul(xp, model.params().value("W_type/p")));
  Mat expect = add(hp, relu(ha));
  REQUIRE(max_abs_diff(fwd.view_out[0].val(), expect) < 1e-15);
}

TEST_CASE("aggregation into a paper node matches the hand computation") {
  // two authors feed one paper through a nontrivial relation vector and
  // direction matrix; compare against scalar arithmetic
  GraphBuilder b;
  NodeTypeId a = b.add_node_type("a", 2, 2);
  NodeTypeId p = b.add_node_type("p", 1, 2);
  auto [w, wb] = b.add_relation("w", a, p, "wb");
  (void)wb;
  b.add_edges(w, {{0, 0}, {1, 0}});
  Mat xa(2, 2);
  xa(0, 0) = 1.0, xa(0, 1) = 2.0, xa(1, 0) = 0.5, xa(1, 1) = 0.25;
  Mat xp(1, 2);
  xp(0, 0) = 3.0, xp(0, 1) = 0.125;
  b.set_features(a, xa);
  b.set_features(p, xp);
  HeteroGraph g = b.build();
  Metapath path = parse_metapath(g, "AP", "a -w-> p");
  ModelConfig cfg = tiny_config();
  cfg.d_prime = 2;
  cfg.d_mid = 2;
  cfg.d = 2;
  MvHetModel model(g, {compile_view(g, path)}, cfg, 0, 1);
  model.params().value("W_type/a") = Mat::identity(2);
  model.params().value("W_type/p") = Mat::identity(2);
  Mat w_o(2, 2);
  w_o(0, 0) = 0.5, w_o(0, 1) = -1.0, w_o(1, 0) = 2.0, w_o(1, 1) = 0.25;
  model.params().value("W_dir/O") = w_o;
  Mat hr(1, 2);
  hr(0, 0) = 0.5, hr(0, 1) = -0.5;
  model.params().value("h_rel/w") = hr;
  Tape tape;
  ModelForward fwd = model.forward(tape, false, 0);
  // hand computation with plain doubles
  double msg[2][2];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      msg[i][j] = (xa(i, 0) + hr(0, 0)) * w_o(0, j) + (xa(i, 1) + hr(0, 1)) * w_o(1, j);
  double agg0 = 0.5 * (msg[0][0] + msg[1][0]);
  double agg1 = 0.5 * (msg[0][1] + msg[1][1]);
  double expect0 = xp(0, 0) + std::max(0.0, agg0);
  double expect1 = xp(0, 1) + std::max(0.0, agg1);
  REQUIRE(std::abs(fwd.view_out[0].val()(0, 0) - expect0) < 1e-12);
  REQUIRE(std::abs(fwd.view_out[0].val()(0, 1) - expect1) < 1e-12);
}

TEST_CASE("level-wise propagation equals the per-node ego oracle") {
  for (std::uint64_t seed = 100; seed < 108; ++seed) {
    mvtest::RandomGraph rg = mvtest::make_random_graph(seed);
    for (const Metapath& path : rg.paths) {
      ModelConfig cfg = tiny_config();
      MvHetModel model(rg.g, {compile_view(rg.g, path)}, cfg, 0, seed);
      Tape tape;
      ModelForward fwd = model.forward(tape, false, 0);
      mvtest::EgoOracleParams op;
      for (const NodeType& t : rg.g.types()) {
        if (model.params().contains("W_type/" + t.name)) {
          const Mat& w = model.params().value("W_type/" + t.name);
          op.h_prime.push_back(relu(matmul(rg.g.features(t.id), w)));
        } else {
          op.h_prime.emplace_back();  // type not on the path
        }
      }
      for (const RelationSpec& r : rg.g.relations())
        if (model.params().contains("h_rel/" + r.name))
          op.h_rel[r.id] = model.params().value("h_rel/" + r.name);
      op.w_out = model.params().contains("W_dir/O") ? model.params().value("W_dir/O")
                                                    : Mat::identity(cfg.d_prime);
      op.w_in = model.params().contains("W_dir/I") ? model.params().value("W_dir/I")
                                                   : Mat::identity(cfg.d_prime);
      const int count = rg.g.type(path.target_type()).count;
      for (int v = 0; v < count; ++v) {
        std::vector<double> expect = mvtest::ego_oracle_embed(rg.g, path, v, op);
        for (int j = 0; j < cfg.d_prime; ++j)
          REQUIRE(std::abs(fwd.view_out[0].val()(v, j) - expect[j]) < 1e-10);
      }
    }
  }
}

TEST_CASE("direction routing: forward relations use W_O, inverse use W_I") {
  mvtest::ToyGraph toy = make_toy_graph(4);
  Metapath p = parse_metapath(toy.g, "APA", "author -write-> paper -written_by-> author");
  ModelConfig cfg = tiny_config();
  MvHetModel model(toy.g, {compile_view(toy.g, p)}, cfg, 0, 1);
  model.params().value("h_rel/write") = Mat(1, 4);
  model.params().value("h_rel/written_by") = Mat(1, 4);
  // zero W_I: the second hop contributes nothing, first hop still does
  Mat w_i_zero(4, 4);
  Mat keep_w_o = model.params().value("W_dir/O");
  model.params().value("W_dir/I") = w_i_zero;
  Tape t1;
  Mat with_zero_wi = model.forward(t1, false, 0).view_out[0].val();
  // H_target reduces to H'_author/2 because the top-level aggregation is dead
  const Mat& xa = toy.g.features(toy.author);
  Mat expect = scale(relu(matmul(xa, model.params().value("W_type/author"))), 0.5);
  REQUIRE(max_abs_diff(with_zero_wi, expect) < 1e-15);
  // zero W_O instead: result changes, showing the first hop flows through W_O
  model.params().value("W_dir/I") = Mat::identity(4);
  model.params().value("W_dir/O") = w_i_zero;
  Tape t2;
  Mat with_zero_wo = model.forward(t2, false, 0).view_out[0].val();
  REQUIRE(max_abs_diff(with_zero_wo, expect) > 0.0);
}

TEST_CASE("fusion variants: mean of identical views is that view") {
  mvtest::ToyGraph toy = make_toy_graph(4);
  Metapath p = parse_metapath(toy.g, "APA", "author -write-> paper -written_by-> author");
  ViewPlan plan = compile_view(toy.g, p);
  ModelConfig cfg = tiny_config(Fusion::Mean);
  MvHetModel model(toy.g, {plan, plan}, cfg, 0, 1);
  Tape tape;
  ModelForward fwd = model.forward(tape, false, 0);
  REQUIRE(max_abs_diff(fwd.fused[0].val(), fwd.view_out[0].val()) < 1e-15);
}

TEST_CASE("fusion variants: concat width and block recovery") {
  mvtest::ToyGraph toy = make_toy_graph(4);
  Metapath p1 = parse_metapath(toy.g, "APA", "author -write-> paper -written_by-> author");
  Metapath p2 = p1;
  p2.name = "APA2";
  Metapath p3 = p1;
  p3.name = "APA3";
  ModelConfig cfg = tiny_config(Fusion::Concat);
  cfg.d_prime = 8;
  cfg.d_mid = 8;
  cfg.d = 8;
  MvHetModel model(toy.g,
                   {compile_view(toy.g, p1), compile_view(toy.g, p2), compile_view(toy.g, p3)},
                   cfg, 0, 1);
  Tape tape;
  ModelForward fwd = model.forward(tape, false, 0);
  REQUIRE(fwd.fused[0].cols() == 24);
  // block j of the concat equals view j
  for (int j = 0; j < 3; ++j)
    for (int r = 0; r < fwd.fused[0].rows(); ++r)
      for (int c = 0; c < 8; ++c)
        REQUIRE(fwd.fused[0].val()(r, j * 8 + c) == fwd.view_out[j].val()(r, c));
}

TEST_CASE("fusion variants: attention with tied scores equals mean") {
  mvtest::ToyGraph toy = make_toy_graph(4);
  Metapath p1 = parse_metapath(toy.g, "APA", "author -write-> paper -written_by-> author");
  Metapath p2 = p1;
  p2.name = "B";
  ModelConfig cfg = tiny_config(Fusion::Attention);
  MvHetModel model(toy.g, {compile_view(toy.g, p1), compile_view(toy.g, p2)}, cfg, 0, 1);
  // zero query -> equal scores -> softmax uniform -> mean
  model.params().value("attn/q") = Mat(4, 1);
  Tape tape;
  ModelForward fwd = model.forward(tape, false, 0);
  Mat mean = scale(add(fwd.view_out[0].val(), fwd.view_out[1].val()), 0.5);
  REQUIRE(max_abs_diff(fwd.fused[0].val(), mean) < 1e-15);
}

TEST_CASE("auto fusion shapes and loss terms") {
  mvtest::ToyGraph toy = make_toy_graph(4);
  Metapath p1 = parse_metapath(toy.g, "APA", "author -write-> paper -written_by-> author");
  Metapath p2 = p1, p3 = p1;
  p2.name = "B", p3.name = "C";
  ModelConfig cfg = tiny_config(Fusion::Auto);
  cfg.d_mid = 3;
  cfg.d = 2;
  MvHetModel model(toy.g,
                   {compile_view(toy.g, p1), compile_view(toy.g, p2), compile_view(toy.g, p3)},
                   cfg, 0, 1);
  Tape tape;
  ModelForward fwd = model.forward(tape, false, 0);
  REQUIRE(fwd.fused[0].cols() == 2);                      // width d
  REQUIRE(model.params().value("sae/W1").rows() == 9);    // 3 views x d_mid
  REQUIRE(fwd.l_intra.scalar() >= 0.0);
  REQUIRE(fwd.l_inter.scalar() >= 0.0);
  REQUIRE(fwd.l_ortho.scalar() >= 0.0);
}

TEST_CASE("orthonormal-initialized encoders have zero orthogonal penalty") {
  mvtest::ToyGraph toy = make_toy_graph(4);
  Metapath p = parse_metapath(toy.g, "APA", "author -write-> paper -written_by-> author");
  ModelConfig cfg = tiny_config(Fusion::Auto);
  MvHetModel model(toy.g, {compile_view(toy.g, p)}, cfg, 0, 1);
  Rng rng(17);
  model.params().value("ae/APA/1/W") = orthonormal(4, 4, rng);
  model.params().value("sae/W1") = orthonormal(4, 4, rng);
  Tape tape;
  ModelForward fwd = model.forward(tape, false, 0);
  REQUIRE(fwd.l_ortho.scalar() < 1e-12);
}

TEST_CASE("a perfect square orthogonal autoencoder reconstructs nonnegative inputs") {
  // identity weights, zero bias: relu is inactive on nonnegative inputs so
  // the reconstruction loss vanishes
  mvtest::ToyGraph toy = make_toy_graph(4);
  Metapath p = parse_metapath(toy.g, "APA", "author -write-> paper -written_by-> author");
  ModelConfig cfg = tiny_config(Fusion::Auto);
  MvHetModel model(toy.g, {compile_view(toy.g, p)}, cfg, 0, 1);
  model.params().value("ae/APA/1/W") = Mat::identity(4);
  model.params().value("ae/APA/2/W") = Mat::identity(4);
  Tape tape;
  ModelForward fwd = model.forward(tape, false, 0);
  REQUIRE(fwd.l_intra.scalar() < 1e-20);
}

TEST_CASE("classifier gives uniform softmax under zero weights") {
  mvtest::ToyGraph toy = make_toy_graph(4);
  Metapath p = parse_metapath(toy.g, "APA", "author -write-> paper -written_by-> author");
  ModelConfig cfg = tiny_config();
  MvHetModel model(toy.g, {compile_view(toy.g, p)}, cfg, 3, 1);
  model.params().value("clf/W_C") = Mat(3, 4);
  Tape tape;
  ModelForward fwd = model.forward(tape, false, 0);
  Tensor logits = model.classify(tape, fwd);
  REQUIRE(logits.rows() == 3);
  REQUIRE(logits.cols() == 3);
  Mat onehot(3, 3);
  onehot(0, 0) = onehot(1, 1) = onehot(2, 2) = 1.0;
  Tensor loss = tape.softmax_cross_entropy(logits, onehot, {0, 1, 2});
  REQUIRE(std::abs(loss.scalar() - std::log(3.0)) < 1e-12);
}

TEST_CASE("link scores are sigmoids of row dot products") {
  mvtest::ToyGraph toy = make_toy_graph(4);
  Metapath pa = parse_metapath(toy.g, "APA", "author -write-> paper -written_by-> author");
  Metapath pp = parse_metapath(toy.g, "PAP", "paper -written_by-> author -write-> paper");
  ModelConfig cfg = tiny_config();
  MvHetModel model(toy.g, {compile_view(toy.g, pa), compile_view(toy.g, pp)}, cfg, 0, 1);
  Tape tape;
  ModelForward fwd = model.forward(tape, false, 0);
  std::vector<std::pair<int, int>> pairs = {{0, 0}, {1, 1}, {2, 0}, {0, 1}, {1, 0}, {2, 1}};
  Tensor probs = model.score_links(tape, fwd, toy.author, toy.paper, pairs);
  const Mat& hu = fwd.fused[model.group_of_type(toy.author)].val();
  const Mat& ha = fwd.fused[model.group_of_type(toy.paper)].val();
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    double dot = dot_rows(hu, pairs[k].first, ha, pairs[k].second);
    double expect = 1.0 / (1.0 + std::exp(-dot));
    REQUIRE(std::abs(probs.val()(static_cast<int>(k), 0) - expect) < 1e-12);
  }
  // orthogonal embeddings score 1/2
  Tape t2;
  Tensor zero_dot = t2.sigmoid(t2.constant(Mat(1, 1)));
  REQUIRE(zero_dot.val()(0, 0) == 0.5);
  // sigma(ln 3) = 3/4
  Tape t3;
  Tensor s = t3.sigmoid(t3.constant(Mat::scalar(std::log(3.0))));
  REQUIRE(std::abs(s.val()(0, 0) - 0.75) < 1e-15);
}

TEST_CASE("every registered parameter receives a gradient on a generic fixture") {
  mvtest::ToyGraph toy = make_toy_graph(4);
  Metapath p1 = parse_metapath(toy.g, "APA", "author -write-> paper -written_by-> author");
  Metapath p2 = p1;
  p2.name = "B";
  ModelConfig cfg = tiny_config(Fusion::Auto);
  cfg.dropout = 0.0;
  MvHetModel model(toy.g, {compile_view(toy.g, p1), compile_view(toy.g, p2)}, cfg, 2, 1);
  // nudge the autoencoders off the identity so reconstruction gradients flow
  Rng rng(23);
  for (Param& prm : model.params().items())
    for (double& v : prm.value.data()) v += 0.05 * rng.normal();
  Tape tape;
  ModelForward fwd = model.forward(tape, true, 1);
  Tensor logits = model.classify(tape, fwd);
  Mat onehot(3, 2);
  onehot(0, 0) = onehot(1, 1) = onehot(2, 0) = 1.0;
  Tensor l_ds = tape.softmax_cross_entropy(logits, onehot, {0, 1, 2});
  Tensor total = tape.add(
      l_ds, tape.add(tape.scale(tape.add(fwd.l_intra, fwd.l_inter), 0.1), fwd.l_ortho));
  tape.backward(total);
  std::vector<Mat> grads = model.gradients(fwd);
  for (int i = 0; i < model.params().size(); ++i) {
    INFO(model.params().items()[i].name);
    CHECK(frobenius_norm(grads[i]) > 0.0);
  }
}

TEST_CASE("checkpoints round-trip and reject shape mismatches") {
  namespace fs = std::filesystem;
  mvtest::ToyGraph toy = make_toy_graph(4);
  Metapath p = parse_metapath(toy.g, "APA", "author -write-> paper -written_by-> author");
  ModelConfig cfg = tiny_config();
  MvHetModel model(toy.g, {compile_view(toy.g, p)}, cfg, 2, 7);
  const fs::path path = fs::temp_directory_path() / "mvhet_ckpt_test.json";
  save_checkpoint(model.params(), path.string());

  MvHetModel same(toy.g, {compile_view(toy.g, p)}, cfg, 2, 99);
  load_checkpoint(same.params(), path.string());
  for (int i = 0; i < model.params().size(); ++i)
    REQUIRE(max_abs_diff(model.params().value(i), same.params().value(i)) == 0.0);

  ModelConfig other = cfg;
  other.d_prime = 6;
  other.d_mid = 6;
  other.d = 6;
  MvHetModel mismatched(toy.g, {compile_view(toy.g, p)}, other, 2, 7);
  try {
    load_checkpoint(mismatched.params(), path.string());
    FAIL("expected CheckpointShapeMismatch");
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::CheckpointShapeMismatch);
  }
  fs::remove(path);
}
