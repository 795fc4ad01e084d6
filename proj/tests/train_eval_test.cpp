#include <doctest.h>

#include <trajgraph/rw_sim.hpp>
#include <trajgraph/train_eval.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

using namespace trajgraph;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& leaf) {
  fs::path dir = fs::temp_directory_path() / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Shape-safe bit equality (lengths vary between sampled trajectories).
bool same_positions(const Trajectory& a, const Trajectory& b) {
  return a.positions.rows() == b.positions.rows() && a.positions.cols() == b.positions.cols() &&
         a.positions == b.positions;
}

}  // namespace

TEST_CASE("sampling is deterministic in (seed, stream, index)") {
  SampleSpec spec;
  spec.noise_min = 0.2;
  spec.noise_max = 0.8;
  Trajectory a = sample_trajectory(spec, 9, kStreamTrain, 5, false);
  Trajectory b = sample_trajectory(spec, 9, kStreamTrain, 5, false);
  CHECK(same_positions(a, b));
  CHECK(a.model == b.model);
  CHECK(a.alpha == b.alpha);
  CHECK(a.noise_amplitude == b.noise_amplitude);

  Trajectory c = sample_trajectory(spec, 9, kStreamTrain, 6, false);
  CHECK_FALSE(same_positions(a, c));
  Trajectory d = sample_trajectory(spec, 9, kStreamVal, 5, false);
  CHECK_FALSE(same_positions(a, d));
  Trajectory e = sample_trajectory(spec, 10, kStreamTrain, 5, false);
  CHECK_FALSE(same_positions(a, e));
}

TEST_CASE("sampled population matches the spec") {
  SampleSpec spec;
  spec.n_min = 10;
  spec.n_max = 20;
  spec.noise_min = 0.1;
  spec.noise_max = 0.9;
  const int count = 20000;
  std::map<Model, int> freq;
  for (int i = 0; i < count; ++i) {
    Trajectory t = sample_trajectory(spec, 3, kStreamTrain, i, false);
    freq[t.model]++;
    CHECK(t.n() >= 10);
    CHECK(t.n() <= 20);
    CHECK(t.dim() == 3);
    CHECK(t.noise_amplitude >= 0.1);
    CHECK(t.noise_amplitude <= 0.9);
    double lo, hi;
    alpha_range(t.model, lo, hi);
    CHECK(t.alpha >= lo);
    CHECK(t.alpha <= hi);
    if (t.model == Model::CTRW || t.model == Model::ATTM) CHECK(t.alpha <= 1.0);
    if (t.model == Model::LW) CHECK(t.alpha >= 1.0);
  }
  for (const auto& [m, c] : freq)
    CHECK(std::abs(c / double(count) - 0.2) < 0.01);  // uniform over the five classes
}

TEST_CASE("balanced sampling is an exact round robin") {
  SampleSpec spec;
  spec.n_min = 10;
  spec.n_max = 12;
  for (int i = 0; i < 25; ++i) {
    Trajectory t = sample_trajectory(spec, 3, kStreamEval, i, true);
    CHECK(t.model == spec.model_set[i % 5]);
  }
}

TEST_CASE("underlying trajectory is independent of the noise range") {
  SampleSpec clean, noisy;
  clean.n_min = noisy.n_min = 50;
  clean.n_max = noisy.n_max = 50;
  noisy.noise_min = 0.5;
  noisy.noise_max = 1.0;
  // Same (seed, stream, index): the noisy draw adds noise to the same path.
  Trajectory a = sample_trajectory(clean, 4, kStreamTrain, 0, true);
  Trajectory b = sample_trajectory(noisy, 4, kStreamTrain, 0, true);
  CHECK(a.model == b.model);
  CHECK(a.alpha == b.alpha);
  CHECK(a.noise_amplitude == 0.0);
  CHECK(b.noise_amplitude >= 0.5);
  CHECK(a.positions != b.positions);
  CHECK(a.positions.rows() == b.positions.rows());
  // The noise perturbation has the advertised scale, not a resampled path.
  double scale = jump_size_std(a);
  CHECK((a.positions - b.positions).cwiseAbs().maxCoeff() < 8.0 * b.noise_amplitude * scale);
}

TEST_CASE("sample_many matches element-wise sampling") {
  SampleSpec spec;
  spec.n_min = 10;
  spec.n_max = 30;
  auto many = sample_many(spec, 7, kStreamTrain, 100, 12, false);
  REQUIRE(many.size() == 12);
  for (int i = 0; i < 12; ++i) {
    Trajectory solo = sample_trajectory(spec, 7, kStreamTrain, 100 + i, false);
    CHECK(same_positions(many[i], solo));
  }
}

TEST_CASE("learning rate schedule endpoints and clamp") {
  TrainConfig cfg;
  cfg.lr0 = 1e-3;
  cfg.lr_floor = 2e-4;
  cfg.budget = 500000;
  CHECK(lr_schedule(cfg, 0) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(lr_schedule(cfg, 250000) == doctest::Approx(std::sqrt(1e-3 * 2e-4)).epsilon(1e-9));
  CHECK(lr_schedule(cfg, 500000) == doctest::Approx(2e-4).epsilon(1e-12));
  CHECK(lr_schedule(cfg, 700000) == doctest::Approx(2e-4).epsilon(1e-12));  // clamped
  for (long t : {0L, 1000L, 499999L})
    CHECK(lr_schedule(cfg, t) >= lr_schedule(cfg, t + 1));  // monotone decay
}

TEST_CASE("loss values on fabricated outputs") {
  // Three graphs, labels 0/2/4, alpha labels 0.5/1.0/1.5.
  GraphBatch batch;
  batch.seg_off = {0, 1, 2, 3};
  batch.class_label = {0, 2, 4};
  batch.alpha_label.resize(3);
  batch.alpha_label << 0.5, 1.0, 1.5;

  Tape tape;
  Eigen::MatrixXd alpha_pred(3, 1);
  SUBCASE("perfect predictions give ~zero joint loss") {
    alpha_pred << 0.5, 1.0, 1.5;
    Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(3, 5);
    logits(0, 0) = logits(1, 2) = logits(2, 4) = 50.0;
    BatchOutput out;
    out.alpha_node = tape.leaf(alpha_pred, false);
    out.logits_node = tape.leaf(logits, false);
    int mse = -1, ce = -1;
    int loss = loss_nodes(tape, out, batch, TaskMode::Joint, &mse, &ce);
    CHECK(tape.val(mse)(0, 0) == 0.0);
    CHECK(tape.val(ce)(0, 0) < 1e-12);
    CHECK(tape.val(loss)(0, 0) < 1e-12);
  }
  SUBCASE("uniform logits and a half-off alpha") {
    alpha_pred << 1.0, 1.5, 2.0;  // each off by +0.5
    BatchOutput out;
    out.alpha_node = tape.leaf(alpha_pred, false);
    out.logits_node = tape.leaf(Eigen::MatrixXd::Zero(3, 5), false);
    int mse = -1, ce = -1;
    int loss = loss_nodes(tape, out, batch, TaskMode::Joint, &mse, &ce);
    CHECK(tape.val(mse)(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(tape.val(ce)(0, 0) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
    CHECK(tape.val(loss)(0, 0) ==
          doctest::Approx(tape.val(mse)(0, 0) + tape.val(ce)(0, 0)).epsilon(1e-15));
  }
  SUBCASE("single-task modes keep only their term") {
    alpha_pred << 1.0, 1.5, 2.0;
    BatchOutput out;
    out.alpha_node = tape.leaf(alpha_pred, false);
    out.logits_node = tape.leaf(Eigen::MatrixXd::Zero(3, 5), false);
    int loss_r = loss_nodes(tape, out, batch, TaskMode::RegressionOnly);
    CHECK(tape.val(loss_r)(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
    int loss_c = loss_nodes(tape, out, batch, TaskMode::ClassificationOnly);
    CHECK(tape.val(loss_c)(0, 0) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  }
  SUBCASE("unlabeled graphs are rejected by classification") {
    batch.class_label = {0, -1, 4};
    BatchOutput out;
    alpha_pred << 0.5, 1.0, 1.5;
    out.alpha_node = tape.leaf(alpha_pred, false);
    out.logits_node = tape.leaf(Eigen::MatrixXd::Zero(3, 5), false);
    CHECK_THROWS_AS(loss_nodes(tape, out, batch, TaskMode::ClassificationOnly),
                    std::domain_error);
  }
}

TEST_CASE("classification-only training leaves the alpha head untouched") {
  GnnConfig cfg = GnnConfig::preset(Preset::W1588);
  GnnModel model(cfg, 3);
  SampleSpec spec;
  spec.n_min = 10;
  spec.n_max = 20;
  auto trajs = sample_many(spec, 5, kStreamTrain, 0, 8, true);
  GraphBatch batch = build_batch(trajs, cfg);
  Tape tape;
  std::vector<std::pair<Eigen::MatrixXd*, int>> bound;
  BatchOutput out = model.forward(tape, batch, true, false, &bound);
  int loss = loss_nodes(tape, out, batch, TaskMode::ClassificationOnly);
  tape.backward(loss);
  auto refs = model.tensors();
  bool alpha_all_zero = true, cls_any_nonzero = false, conv_any_nonzero = false;
  for (const auto& r : refs) {
    if (!r.trainable) continue;
    for (const auto& [ptr, id] : bound) {
      if (ptr != r.tensor) continue;
      double mx = tape.grad(id).cwiseAbs().maxCoeff();
      if (r.name.rfind("alpha.", 0) == 0 && mx != 0.0) alpha_all_zero = false;
      if (r.name.rfind("cls.", 0) == 0 && mx > 0.0) cls_any_nonzero = true;
      if (r.name.rfind("conv1.", 0) == 0 && mx > 0.0) conv_any_nonzero = true;
    }
  }
  CHECK(alpha_all_zero);
  CHECK(cls_any_nonzero);
  CHECK(conv_any_nonzero);
}

TEST_CASE("metrics on explicit rows") {
  auto row = [](Model m, double ta, int pc, double pa) {
    return PredRow{m, ta, pc, pa, 100, 0.0, 1.0};
  };
  SUBCASE("perfect predictions") {
    std::vector<PredRow> rows = {row(Model::ATTM, 0.5, 0, 0.5), row(Model::FBM, 1.0, 2, 1.0),
                                 row(Model::SBM, 1.5, 4, 1.5)};
    CHECK(micro_f1(rows) == doctest::Approx(1.0));
    CHECK(mean_abs_err(rows) == doctest::Approx(0.0));
  }
  SUBCASE("constant classifier on a balanced set scores one fifth") {
    std::vector<PredRow> rows;
    for (int i = 0; i < 100; ++i)
      rows.push_back(row(static_cast<Model>(i % 5), 0.5, 2, 0.75));
    CHECK(micro_f1(rows) == doctest::Approx(0.2));
    CHECK(mean_abs_err(rows) == doctest::Approx(0.25));
  }
}

TEST_CASE("evaluate produces a normalised confusion matrix and buckets") {
  GnnConfig cfg = GnnConfig::preset(Preset::W1588);
  GnnModel model(cfg, 11);
  EvalConfig ec;
  ec.sample.n_min = 10;
  ec.sample.n_max = 40;
  ec.count = 200;
  ec.batch = 64;
  ec.keep_latents = true;
  EvalReport rep = evaluate(model, ec);

  REQUIRE(rep.rows.size() == 200);
  REQUIRE(rep.confusion.rows() == 5);
  REQUIRE(rep.confusion.cols() == 5);
  for (int j = 0; j < 5; ++j) {
    CHECK(rep.confusion.col(j).sum() == doctest::Approx(1.0).epsilon(1e-9));
    for (int i = 0; i < 5; ++i) {
      CHECK(rep.confusion(i, j) >= 0.0);
      CHECK(rep.confusion(i, j) <= 1.0);
    }
  }
  CHECK(rep.latents.rows() == 200);
  CHECK(rep.latents.cols() == cfg.latent_dim());
  CHECK(rep.mae > 0.0);
  CHECK(rep.f1 >= 0.0);
  CHECK(rep.f1 <= 1.0);
  // An untrained balanced classifier sits near chance level.
  CHECK(rep.f1 < 0.5);
  long bucket_total = 0;
  for (const auto& b : rep.by_length) bucket_total += b.count;
  CHECK(bucket_total == 200);

  // Same seed, same report (pooled over a second call).
  EvalReport rep2 = evaluate(model, ec);
  CHECK(rep2.mae == rep.mae);
  CHECK(rep2.f1 == rep.f1);
  CHECK(rep2.confusion == rep.confusion);
}

TEST_CASE("predict_batched equals one-at-a-time predict") {
  GnnConfig cfg = GnnConfig::preset(Preset::W1588);
  GnnModel model(cfg, 13);
  SampleSpec spec;
  spec.n_min = 10;
  spec.n_max = 60;
  auto trajs = sample_many(spec, 21, kStreamEval, 0, 7, true);
  auto batched = predict_batched(model, trajs, 3);  // forces multiple chunks
  REQUIRE(batched.size() == 7);
  for (int i = 0; i < 7; ++i) {
    Prediction solo = model.predict(trajs[i]);
    // Stacking changes GEMM blocking, so agreement is to rounding noise only.
    CHECK(batched[i].alpha_hat == doctest::Approx(solo.alpha_hat).epsilon(1e-12));
    CHECK((batched[i].class_probs - solo.class_probs).cwiseAbs().maxCoeff() < 1e-12);
    double scale = std::max(1.0, solo.latent.cwiseAbs().maxCoeff());
    CHECK((batched[i].latent - solo.latent).cwiseAbs().maxCoeff() / scale < 1e-12);
  }
}

TEST_CASE("a small model overfits a frozen batch") {
  // Joint loss on 16 cached short trajectories must collapse, which exercises
  // forward, backward, Adam and the schedule end to end.
  GnnConfig cfg = GnnConfig::preset(Preset::W1588);
  GnnModel model(cfg, 29);
  SampleSpec spec;
  spec.n_min = 12;
  spec.n_max = 24;
  auto trajs = sample_many(spec, 31, kStreamTrain, 0, 16, true);
  GraphBatch batch = build_batch(trajs, cfg);

  auto refs = model.tensors();
  Adam opt;
  opt.init(refs);
  double first = -1.0, last = -1.0;
  for (int step = 0; step < 2000; ++step) {
    Tape tape;
    std::vector<std::pair<Eigen::MatrixXd*, int>> bound;
    BatchOutput out = model.forward(tape, batch, true, true, &bound);
    int loss = loss_nodes(tape, out, batch, TaskMode::Joint);
    double v = tape.val(loss)(0, 0);
    if (step == 0) first = v;
    last = v;
    tape.backward(loss);
    std::vector<Eigen::MatrixXd> grads;
    for (const auto& r : refs) {
      if (!r.trainable) continue;
      const Eigen::MatrixXd* g = nullptr;
      for (const auto& [ptr, id] : bound)
        if (ptr == r.tensor) g = &tape.grad(id);
      REQUIRE(g != nullptr);
      grads.push_back(*g);
    }
    opt.step(refs, grads, 1e-3);
  }
  CHECK(last < 0.1);
  CHECK(last < 0.05 * first);
}

TEST_CASE("train smoke run writes the advertised artifacts") {
  fs::path dir = fresh_dir("tg_train_smoke");
  TrainConfig cfg;
  cfg.gnn = GnnConfig::preset(Preset::W1588);
  cfg.sample.n_min = 10;
  cfg.sample.n_max = 24;
  cfg.batch_size = 32;
  cfg.budget = 192;
  cfg.val_every = 96;
  cfg.val_size = 20;
  cfg.seed = 3;
  cfg.out_dir = dir.string();
  cfg.quiet = true;
  TrainResult res = train(cfg);

  CHECK(res.steps == 6);
  CHECK(fs::exists(dir / "checkpoint.tgc"));
  CHECK(fs::exists(dir / "checkpoint.json"));
  CHECK(fs::exists(dir / "train_log.csv"));
  CHECK(res.checkpoint_path == (dir / "checkpoint.tgc").string());
  CHECK(std::isfinite(res.best_val_loss));

  std::ifstream log(dir / "train_log.csv");
  std::string header;
  std::getline(log, header);
  CHECK(header == "step,trajs_seen,lr,loss,val_mae,val_f1");
  int lines = 0;
  for (std::string line; std::getline(log, line);)
    if (!line.empty()) ++lines;
  CHECK(lines >= 2);  // one validation per val_every plus the final step

  // The checkpoint reloads into a fresh model with matching config.
  GnnModel reloaded(cfg.gnn, 1);
  reloaded.load((dir / "checkpoint.tgc").string());

  SUBCASE("fixed-file mode consumes a trajectory file") {
    std::string data = (dir / "fixed.csv").string();
    auto trajs = sample_many(cfg.sample, 77, kStreamProbe, 0, 8, true);
    write_batch(data, trajs);
    TrainConfig f = cfg;
    f.out_dir = (dir / "fixed_run").string();
    f.fixed_file = data;
    f.budget = 64;
    f.val_every = 64;
    TrainResult r2 = train(f);
    CHECK(r2.steps == 2);
    CHECK(fs::exists(fs::path(f.out_dir) / "checkpoint.tgc"));
  }
}

TEST_CASE("training is reproducible trajectory by trajectory") {
  // Two runs with one thread and the same seed produce byte-identical logs
  // and checkpoints; a different seed does not.
  auto run = [](const fs::path& dir, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.gnn = GnnConfig::preset(Preset::W1588);
    cfg.sample.n_min = 10;
    cfg.sample.n_max = 16;
    cfg.batch_size = 16;
    cfg.budget = 64;
    cfg.val_every = 64;
    cfg.val_size = 10;
    cfg.seed = seed;
    cfg.out_dir = dir.string();
    cfg.quiet = true;
    train(cfg);
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  fs::path d1 = fresh_dir("tg_repro_a"), d2 = fresh_dir("tg_repro_b"), d3 = fresh_dir("tg_repro_c");
  run(d1, 5);
  run(d2, 5);
  run(d3, 6);
  CHECK(slurp(d1 / "checkpoint.tgc") == slurp(d2 / "checkpoint.tgc"));
  CHECK(slurp(d1 / "train_log.csv") == slurp(d2 / "train_log.csv"));
  CHECK(slurp(d1 / "checkpoint.tgc") != slurp(d3 / "checkpoint.tgc"));
}

TEST_CASE("prediction csv format") {
  fs::path dir = fresh_dir("tg_pred_csv");
  std::vector<PredRow> rows = {
      {Model::FBM, 0.75, 2, 0.8125, 100, 0.25, 1.0},
      {Model::BM, std::nan(""), 4, 1.0, 50, 0.0, 1.0},
  };
  std::string path = (dir / "pred.csv").string();
  write_predictions(path, rows);
  std::ifstream in(path);
  std::string l0, l1, l2;
  std::getline(in, l0);
  std::getline(in, l1);
  std::getline(in, l2);
  CHECK(l0 == "true_model,true_alpha,pred_model,pred_alpha,N,noise");
  CHECK(l1.rfind("fbm,0.75,fbm,0.8125,100,0.25", 0) == 0);
  CHECK(l2.rfind("?,nan,sbm,1,50,0", 0) == 0);
}

TEST_CASE("stream seeds are pairwise disjoint") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t idx = 0; idx < 1000; ++idx)
    for (std::uint64_t s : {kStreamTrain, kStreamVal, kStreamEval, kStreamProbe})
      seen.insert(derive_seed(1, s, idx));
  CHECK(seen.size() == 4000);
}
