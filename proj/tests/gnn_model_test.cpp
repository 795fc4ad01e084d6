#include <doctest.h>

#include <trajgraph/gnn_model.hpp>
#include <trajgraph/rw_sim.hpp>

#include <algorithm>
#include <filesystem>
#include <random>

using namespace trajgraph;

namespace {

const Preset kAllPresets[] = {Preset::W1588, Preset::W6420, Preset::W36660, Preset::W185879,
                              Preset::W871596};

Trajectory bm(int n, int d, std::uint64_t seed) { return simulate(Model::BM, 1.0, n, d, 1.0, seed); }

}  // namespace

TEST_CASE("presets validate and self-report consistent sizes") {
  for (Preset p : kAllPresets) {
    GnnConfig cfg = GnnConfig::preset(p);
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.dim == 3);
    CHECK(cfg.cls_widths.back() == 5);
    CHECK(cfg.alpha_widths.back() == 1);
    CHECK(cfg.conv_widths[0][0] == (cfg.p_max + 1) * cfg.n_x());
    GnnModel model(cfg, 1);
    CHECK(model.param_count() == preset_param_count(cfg));
  }
}

TEST_CASE("preset lookup by name") {
  Preset p;
  CHECK(GnnConfig::preset_by_name("1588", p));
  CHECK(p == Preset::W1588);
  CHECK(GnnConfig::preset_by_name("871596", p));
  CHECK(p == Preset::W871596);
  CHECK_FALSE(GnnConfig::preset_by_name("medium", p));
}

TEST_CASE("config json round trip") {
  GnnConfig cfg = GnnConfig::preset(Preset::W6420);
  cfg.clip_c = 7.5;
  cfg.wiring = Wiring::RandomRegular;
  std::string text = cfg.to_json();
  GnnConfig back = GnnConfig::from_json(text);
  CHECK(back.to_json() == text);
  CHECK(back.p_max == cfg.p_max);
  CHECK(back.conv_widths == cfg.conv_widths);
  CHECK(back.wiring == Wiring::RandomRegular);
  CHECK(back.clip_c == 7.5);
  CHECK_THROWS(GnnConfig::from_json("not json"));
  CHECK_THROWS(GnnConfig::from_json("{\"p_max\":1}"));
}

TEST_CASE("config validation catches width mismatches") {
  GnnConfig cfg = GnnConfig::preset(Preset::W1588);
  SUBCASE("conv1 input") {
    cfg.conv_widths[0][0] += 1;
    CHECK_THROWS_AS(cfg.validate(), std::domain_error);
  }
  SUBCASE("conv3 skip width") {
    cfg.conv_widths[2][0] -= 2;
    CHECK_THROWS_AS(cfg.validate(), std::domain_error);
  }
  SUBCASE("projector input") {
    cfg.proj_widths[0] += 4;
    CHECK_THROWS_AS(cfg.validate(), std::domain_error);
  }
  SUBCASE("classifier output") {
    cfg.cls_widths.back() = 4;
    CHECK_THROWS_AS(cfg.validate(), std::domain_error);
  }
  SUBCASE("alpha head output") {
    cfg.alpha_widths.back() = 2;
    CHECK_THROWS_AS(cfg.validate(), std::domain_error);
  }
}

TEST_CASE("feature layout string names the whole featurisation") {
  GnnConfig cfg = GnnConfig::preset(Preset::W1588);
  CHECK(cfg.feature_layout() == "tg-feat-v1:d3:p1:k20:causal:clip10");
  cfg.wiring = Wiring::RandomRegular;
  cfg.clip_c = 2.5;
  CHECK(cfg.feature_layout() == "tg-feat-v1:d3:p1:k20:regular:clip2.5");
}

TEST_CASE("adjacency is canonical under edge storage order") {
  auto edges = build_causal_geometric(50, 20);
  std::vector<Edge> shuffled = edges;
  std::mt19937 urng(99);
  std::shuffle(shuffled.begin(), shuffled.end(), urng);
  AdjCsr a = adjacency_from_edges(50, edges);
  AdjCsr b = adjacency_from_edges(50, shuffled);
  CHECK(a.off == b.off);
  CHECK(a.src == b.src);

  // So aggregation over either list is bit-identical.
  Eigen::MatrixXd X(50, 4);
  Rng rng(5);
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 4; ++j) X(i, j) = rng.uniform(-1, 1);
  Tape t;
  int xa = t.leaf(X, false);
  Eigen::MatrixXd via_a = t.val(t.edge_mean(xa, a));
  Eigen::MatrixXd via_b = t.val(t.edge_mean(xa, b));
  CHECK(via_a == via_b);
}

TEST_CASE("adjacency applies the row offset") {
  std::vector<Edge> edges = {{1, 2}, {1, 3}, {2, 3}};
  AdjCsr adj = adjacency_from_edges(3, edges, 100);
  REQUIRE(adj.rows() == 3);
  CHECK(adj.degree(0) == 0);
  CHECK(adj.degree(1) == 1);
  CHECK(adj.src == std::vector<int>{100, 100, 101});
}

TEST_CASE("convolution contract: no edges plus identity weights is the identity") {
  const int F = 5, n = 7;
  Mlp mlp;
  Rng rng(3);
  mlp.init({3 * F, F}, false, rng);
  mlp.W[0].setZero();
  mlp.W[0].topRows(F) = Eigen::MatrixXd::Identity(F, F);  // reads only the self block
  Eigen::MatrixXd X(n, F);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < F; ++j) X(i, j) = rng.uniform(-2, 2);
  AdjCsr empty;
  empty.off.assign(n + 1, 0);
  Tape t;
  int x = t.leaf(X, false);
  int out = conv_self_mean_max(t, x, empty, mlp, false);
  CHECK(t.val(out) == X);
}

TEST_CASE("convolution contract: two-node sum example") {
  // x1=1, x2=0, edge 1->2, all-ones single linear layer: node1 sees no
  // neighbors (1+0+0), node2 sees node1 (0+1+1).
  Mlp mlp;
  Rng rng(4);
  mlp.init({3, 1}, false, rng);
  mlp.W[0] = Eigen::MatrixXd::Ones(3, 1);
  Eigen::MatrixXd X(2, 1);
  X << 1.0, 0.0;
  AdjCsr adj = adjacency_from_edges(2, {{1, 2}});
  Tape t;
  int out = conv_self_mean_max(t, t.leaf(X, false), adj, mlp, false);
  CHECK(t.val(out)(0, 0) == 1.0);
  CHECK(t.val(out)(1, 0) == 2.0);
}

TEST_CASE("pooling ops are permutation and duplication invariant where they should be") {
  // Exactly representable values make mean/max duplication checks bitwise.
  Eigen::MatrixXd X(3, 2);
  X << 1.0, -2.0, 0.5, 4.0, -8.0, 0.25;
  Eigen::MatrixXd XX(6, 2);
  XX << X, X;
  std::vector<int> one = {0, 3}, dup = {0, 6};
  Tape t;
  int x = t.leaf(X, false);
  int xx = t.leaf(XX, false);
  // val() returns a reference into the tape, so copy before adding more nodes.
  Eigen::MatrixXd mean_dup = t.val(t.segment_mean(xx, dup));
  Eigen::MatrixXd mean_one = t.val(t.segment_mean(x, one));
  CHECK(mean_dup == mean_one);
  Eigen::MatrixXd max_dup = t.val(t.segment_max(xx, dup));
  Eigen::MatrixXd max_one = t.val(t.segment_max(x, one));
  CHECK(max_dup == max_one);
  // Sum pooling is deliberately size-sensitive: duplication doubles it.
  Eigen::MatrixXd sum_dup = t.val(t.segment_sum(xx, dup));
  Eigen::MatrixXd sum_one = t.val(t.segment_sum(x, one));
  CHECK(sum_dup == 2.0 * sum_one);

  Eigen::MatrixXd P = X;
  P.row(0).swap(P.row(2));
  int p = t.leaf(P, false);
  Eigen::MatrixXd max_perm = t.val(t.segment_max(p, one));
  CHECK(max_perm == max_one);
  Eigen::MatrixXd mean_perm = t.val(t.segment_mean(p, one));
  CHECK((mean_perm - mean_one).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("predict is deterministic, seed-sensitive, and batch-consistent") {
  GnnConfig cfg = GnnConfig::preset(Preset::W1588);
  GnnModel m1(cfg, 17);
  Trajectory t = bm(64, 3, 5);

  Prediction a = m1.predict(t);
  Prediction b = m1.predict(t);
  CHECK(a.alpha_hat == b.alpha_hat);
  CHECK(a.class_probs == b.class_probs);
  CHECK(a.latent == b.latent);

  CHECK(a.class_probs.size() == 5);
  CHECK(a.class_probs.sum() == doctest::Approx(1.0).epsilon(1e-9));
  // Untrained logits can be far apart, so a prob may underflow to exactly 0.
  CHECK(a.class_probs.minCoeff() >= 0.0);
  CHECK(std::isfinite(a.alpha_hat));
  CHECK(a.latent.size() == cfg.latent_dim());

  GnnModel m2(cfg, 17);
  Prediction c = m2.predict(t);
  CHECK(c.alpha_hat == a.alpha_hat);  // same init seed, same weights

  GnnModel m3(cfg, 18);
  Prediction d = m3.predict(t);
  CHECK(d.alpha_hat != a.alpha_hat);

  // Forward over a single-graph batch is the same computation.
  GraphBatch batch = build_batch({t}, cfg);
  Tape tape;
  BatchOutput out = m1.forward(tape, batch, false, false);
  CHECK(tape.val(out.alpha_node)(0, 0) == a.alpha_hat);
  CHECK(softmax_rows(tape.val(out.logits_node)).row(0).transpose() == a.class_probs);
  CHECK(tape.val(out.latent_node).row(0).transpose() == a.latent);
}

TEST_CASE("latent width is length-invariant") {
  GnnConfig cfg = GnnConfig::preset(Preset::W1588);
  GnnModel m(cfg, 2);
  Prediction small = m.predict(bm(10, 3, 1));
  Prediction large = m.predict(bm(2000, 3, 2));
  CHECK(small.latent.size() == large.latent.size());
  CHECK(small.latent != large.latent);
}

TEST_CASE("build_batch stacks graphs with global row indexing") {
  GnnConfig cfg = GnnConfig::preset(Preset::W1588);
  Trajectory t1 = simulate(Model::FBM, 0.6, 5, 3, 1.0, 1);
  Trajectory t2 = simulate(Model::BM, 1.0, 7, 3, 1.0, 2);
  Trajectory t3 = simulate_segmented(Model::FBM, Model::ATTM, 0.5, 6, 3, 1.0, 0.5, 3);
  GraphBatch b = build_batch({t1, t2, t3}, cfg);

  CHECK(b.graphs() == 3);
  CHECK(b.seg_off == std::vector<int>{0, 5, 12, 18});
  CHECK(b.feats_raw.rows() == 18);
  CHECK(b.feats_raw.cols() == cfg.n_x());
  CHECK(b.feats_pow.cols() == (cfg.p_max) * cfg.n_x());
  CHECK(b.adj.rows() == 18);
  // Graph 2's neighbor rows live strictly inside its own row range.
  for (int i = 5; i < 12; ++i)
    for (int e = b.adj.off[i]; e < b.adj.off[i + 1]; ++e) {
      CHECK(b.adj.src[e] >= 5);
      CHECK(b.adj.src[e] < 12);
    }
  CHECK(b.class_label == std::vector<int>{2, -1, -1});
  CHECK(b.alpha_label(0) == 0.6);
  CHECK(b.lengths == std::vector<int>{5, 7, 6});
  CHECK(b.fraction_a[2] == 0.5);
  CHECK(b.fraction_a[0] == 1.0);

  // Per-graph features match the standalone pipeline.
  Eigen::MatrixXd solo = node_features(clip_steps(t2, cfg.clip_c));
  CHECK(b.feats_raw.middleRows(5, 7) == solo);

  Trajectory wrong_dim = simulate(Model::BM, 1.0, 5, 1, 1.0, 4);
  CHECK_THROWS_AS(build_batch({wrong_dim}, cfg), std::domain_error);
}

TEST_CASE("checkpoint round trip preserves predictions exactly") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "tg_gnn_test";
  fs::create_directories(dir);
  std::string path = (dir / "gnn.tgc").string();

  GnnConfig cfg = GnnConfig::preset(Preset::W1588);
  GnnModel a(cfg, 31);
  Trajectory t = bm(128, 3, 7);
  Prediction pa = a.predict(t);
  a.save(path);

  GnnModel b(cfg, 99);  // different init, then overwritten by load
  CHECK(b.predict(t).alpha_hat != pa.alpha_hat);
  b.load(path);
  Prediction pb = b.predict(t);
  CHECK(pb.alpha_hat == pa.alpha_hat);
  CHECK(pb.class_probs == pa.class_probs);
  CHECK(pb.latent == pa.latent);

  CheckpointMeta meta = peek_checkpoint(path);
  CHECK(meta.feature_layout == cfg.feature_layout());
  CHECK(meta.config_json == cfg.to_json());

  GnnModel other(GnnConfig::preset(Preset::W6420), 1);
  CHECK_THROWS_AS(other.load(path), std::runtime_error);
}

TEST_CASE("tensor names cover every module once") {
  // W6420 is the smallest preset whose convolutions have hidden layers, so
  // it exercises the batchnorm running-stat tensors too.
  GnnConfig cfg = GnnConfig::preset(Preset::W6420);
  GnnModel m(cfg, 1);
  auto refs = m.tensors();
  long total = 0;
  bool saw_conv1 = false, saw_alpha = false, saw_rmean = false;
  std::vector<std::string> names;
  for (const auto& r : refs) {
    names.push_back(r.name);
    if (r.trainable) total += r.tensor->size();
    saw_conv1 = saw_conv1 || r.name.rfind("conv1.", 0) == 0;
    saw_alpha = saw_alpha || r.name.rfind("alpha.", 0) == 0;
    saw_rmean = saw_rmean || r.name.find(".rmean") != std::string::npos;
  }
  CHECK(saw_conv1);
  CHECK(saw_alpha);
  CHECK(saw_rmean);
  CHECK(total == m.param_count());
  std::sort(names.begin(), names.end());
  CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());  // unique
}
