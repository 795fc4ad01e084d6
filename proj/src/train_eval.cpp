#include <trajgraph/train_eval.hpp>

#include <trajgraph/rw_sim.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace trajgraph {

Trajectory sample_trajectory(const SampleSpec& spec, std::uint64_t global_seed,
                             std::uint64_t stream_id, std::uint64_t index, bool balanced) {
  Rng r = stream_rng(global_seed, stream_id, index);
  const auto& set = spec.model_set;
  Model m = balanced ? set[index % set.size()]
                     : set[static_cast<std::size_t>(r.uniform_int(0, static_cast<long>(set.size()) - 1))];
  double lo, hi;
  alpha_range(m, lo, hi);
  double alpha = r.uniform(lo, hi);
  int n = static_cast<int>(r.uniform_int(spec.n_min, spec.n_max));
  // Always consume the amplitude draw so the underlying trajectory at a given
  // (seed, stream, index) is independent of the noise range.
  double amp = r.uniform(spec.noise_min, spec.noise_max);
  std::uint64_t sim_seed = r.next_u64();
  std::uint64_t noise_seed = r.next_u64();
  Trajectory t = simulate(m, alpha, n, spec.dim, 1.0, sim_seed);
  if (amp > 0.0) t = add_noise(t, amp, noise_seed);
  t.noise_amplitude = amp;
  return t;
}

std::vector<Trajectory> sample_many(const SampleSpec& spec, std::uint64_t global_seed,
                                    std::uint64_t stream_id, std::uint64_t index0, int count,
                                    bool balanced) {
  std::vector<Trajectory> out(count);
#pragma omp parallel for schedule(dynamic, 8)
  for (int i = 0; i < count; ++i)
    out[i] = sample_trajectory(spec, global_seed, stream_id, index0 + i, balanced);
  return out;
}

double lr_schedule(const TrainConfig& cfg, long trajs_seen) {
  double frac = std::min(1.0, static_cast<double>(trajs_seen) / static_cast<double>(cfg.budget));
  return cfg.lr0 * std::pow(cfg.lr_floor / cfg.lr0, frac);
}

int loss_nodes(Tape& tape, const BatchOutput& out, const GraphBatch& batch, TaskMode mode,
               int* mse_node, int* ce_node) {
  int mse = -1, ce = -1;
  if (mode != TaskMode::ClassificationOnly) {
    Eigen::VectorXd targets = batch.alpha_label;
    mse = tape.mse_loss(out.alpha_node, targets);
  }
  if (mode != TaskMode::RegressionOnly) {
    std::vector<int> labels(batch.class_label.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (batch.class_label[i] < 0)
        throw std::domain_error("loss: unlabeled graph in a classification batch");
      labels[i] = batch.class_label[i];
    }
    ce = tape.softmax_ce(out.logits_node, labels, nullptr);
  }
  if (mse_node) *mse_node = mse;
  if (ce_node) *ce_node = ce;
  if (mode == TaskMode::RegressionOnly) return mse;
  if (mode == TaskMode::ClassificationOnly) return ce;
  return tape.add(mse, ce);
}

namespace {

struct ValMetrics {
  double loss, mae, f1, mse, ce;
};

ValMetrics validate_model(GnnModel& model, const std::vector<Trajectory>& val_trajs,
                          TaskMode mode, int batch) {
  std::vector<Prediction> preds = predict_batched(model, val_trajs, batch);
  double se = 0.0, ae = 0.0, ce = 0.0;
  long hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Trajectory& t = val_trajs[i];
    double d = preds[i].alpha_hat - t.alpha;
    se += d * d;
    ae += std::abs(d);
    int label = static_cast<int>(t.model);
    int arg = 0;
    preds[i].class_probs.maxCoeff(&arg);
    if (arg == label) ++hits;
    ce -= std::log(std::max(preds[i].class_probs(label), 1e-12));
  }
  const double n = static_cast<double>(preds.size());
  ValMetrics v;
  v.mse = se / n;
  v.mae = ae / n;
  v.ce = ce / n;
  v.f1 = static_cast<double>(hits) / n;
  v.loss = mode == TaskMode::RegressionOnly ? v.mse
           : mode == TaskMode::ClassificationOnly ? v.ce
                                                  : v.mse + v.ce;
  return v;
}

}  // namespace

TrainResult train(const TrainConfig& cfg) {
  cfg.gnn.validate();
  if (cfg.budget <= 0 || cfg.batch_size <= 0) throw std::domain_error("train: budget > 0");
  std::filesystem::create_directories(cfg.out_dir);
  const std::string ckpt_path = cfg.out_dir + "/checkpoint.tgc";
  const std::string sidecar_path = cfg.out_dir + "/checkpoint.json";
  const std::string log_path = cfg.out_dir + "/train_log.csv";

  GnnModel model(cfg.gnn, cfg.seed);
  std::vector<TensorRef> tensors = model.tensors();
  Adam opt;
  opt.init(tensors);

  // Fixed held-out validation set, disjoint stream from training.
  std::vector<Trajectory> val_trajs =
      sample_many(cfg.sample, cfg.seed, kStreamVal, 0, cfg.val_size, true);

  std::vector<Trajectory> fixed;
  if (!cfg.fixed_file.empty()) {
    fixed = read_batch(cfg.fixed_file);
    if (fixed.empty()) throw std::runtime_error("train: empty fixed data file");
  }

  FILE* log = std::fopen(log_path.c_str(), "wb");
  if (!log) throw std::runtime_error("train: cannot open log: " + log_path);
  std::fputs("step,trajs_seen,lr,loss,val_mae,val_f1\n", log);

  const long steps = (cfg.budget + cfg.batch_size - 1) / cfg.batch_size;
  TrainResult result;
  result.steps = steps;
  double best_loss = std::numeric_limits<double>::infinity();
  long next_val = cfg.val_every;

  for (long step = 0; step < steps; ++step) {
    const long seen = step * cfg.batch_size;
    const double lr = lr_schedule(cfg, seen);
    std::vector<Trajectory> trajs;
    if (fixed.empty()) {
      trajs = sample_many(cfg.sample, cfg.seed, kStreamTrain,
                          static_cast<std::uint64_t>(seen), cfg.batch_size, false);
    } else {
      trajs.reserve(cfg.batch_size);
      for (int i = 0; i < cfg.batch_size; ++i)
        trajs.push_back(fixed[(seen + i) % fixed.size()]);
    }
    GraphBatch batch = build_batch(trajs, cfg.gnn);

    Tape tape;
    std::vector<std::pair<Eigen::MatrixXd*, int>> bound;
    BatchOutput out = model.forward(tape, batch, true, true, &bound);
    int loss_id = loss_nodes(tape, out, batch, cfg.mode);
    double loss = tape.val(loss_id)(0, 0);
    if (!std::isfinite(loss)) {
      std::fclose(log);
      char msg[160];
      std::snprintf(msg, sizeof msg,
                    "train: non-finite loss at step %ld (trajs_seen=%ld, lr=%.3e)", step, seen,
                    lr);
      throw std::runtime_error(msg);
    }
    tape.backward(loss_id);

    std::unordered_map<Eigen::MatrixXd*, const Eigen::MatrixXd*> grad_of;
    for (const auto& [ptr, leaf] : bound) grad_of[ptr] = &tape.grad(leaf);
    std::vector<Eigen::MatrixXd> grads;
    grads.reserve(bound.size());
    for (const auto& t : tensors) {
      if (!t.trainable) continue;
      auto it = grad_of.find(t.tensor);
      if (it == grad_of.end())
        grads.push_back(Eigen::MatrixXd::Zero(t.tensor->rows(), t.tensor->cols()));
      else
        grads.push_back(*it->second);
    }
    opt.step(tensors, grads, lr);

    const long seen_after = seen + cfg.batch_size;
    const bool last = step + 1 == steps;
    if (seen_after >= next_val || last) {
      while (next_val <= seen_after) next_val += cfg.val_every;
      ValMetrics v = validate_model(model, val_trajs, cfg.mode, 64);
      std::fprintf(log, "%ld,%ld,%s,%s,%s,%s\n", step + 1, seen_after,
                   format_double(lr).c_str(), format_double(loss).c_str(),
                   format_double(v.mae).c_str(), format_double(v.f1).c_str());
      std::fflush(log);
      if (!cfg.quiet)
        std::fprintf(stderr, "[train] step %ld/%ld seen %ld lr %.3e loss %.4f val_mae %.4f val_f1 %.4f\n",
                     step + 1, steps, seen_after, lr, loss, v.mae, v.f1);
      if (v.loss < best_loss) {
        best_loss = v.loss;
        result.best_val_loss = v.loss;
        result.best_val_mae = v.mae;
        result.best_val_f1 = v.f1;
        model.save(ckpt_path);
        FILE* sc = std::fopen(sidecar_path.c_str(), "wb");
        if (sc) {
          std::fputs(cfg.gnn.to_json().c_str(), sc);
          std::fputc('\n', sc);
          std::fclose(sc);
        }
      }
    }
  }
  std::fclose(log);
  result.checkpoint_path = ckpt_path;
  return result;
}

std::vector<Prediction> predict_batched(GnnModel& model, const std::vector<Trajectory>& trajs,
                                        int batch) {
  std::vector<Prediction> preds(trajs.size());
  const int nb = static_cast<int>((trajs.size() + batch - 1) / batch);
#pragma omp parallel for schedule(dynamic, 1)
  for (int b = 0; b < nb; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * batch;
    const std::size_t hi = std::min(trajs.size(), lo + batch);
    std::vector<Trajectory> chunk(trajs.begin() + lo, trajs.begin() + hi);
    GraphBatch gb = build_batch(chunk, model.config());
    Tape tape;
    BatchOutput out = model.forward(tape, gb, false, false, nullptr);
    Eigen::MatrixXd probs = softmax_rows(tape.val(out.logits_node));
    for (std::size_t i = lo; i < hi; ++i) {
      Prediction p;
      p.alpha_hat = tape.val(out.alpha_node)(i - lo, 0);
      p.class_probs = probs.row(i - lo).transpose();
      p.latent = tape.val(out.latent_node).row(i - lo).transpose();
      preds[i] = std::move(p);
    }
  }
  return preds;
}

double micro_f1(const std::vector<PredRow>& rows) {
  if (rows.empty()) return 0.0;
  long hits = 0;
  for (const auto& r : rows)
    if (r.pred_class == static_cast<int>(r.true_model)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

double mean_abs_err(const std::vector<PredRow>& rows) {
  if (rows.empty()) return 0.0;
  double ae = 0.0;
  for (const auto& r : rows) ae += std::abs(r.pred_alpha - r.true_alpha);
  return ae / static_cast<double>(rows.size());
}

namespace {

std::vector<Bucket> bucketize(const std::vector<PredRow>& rows,
                              const std::vector<std::pair<double, double>>& edges,
                              const std::function<double(const PredRow&)>& key,
                              const char* fmt) {
  std::vector<Bucket> out;
  for (const auto& [lo, hi] : edges) {
    std::vector<PredRow> slice;
    for (const auto& r : rows) {
      double v = key(r);
      if (v >= lo && v < hi) slice.push_back(r);
    }
    Bucket b;
    char label[64];
    std::snprintf(label, sizeof label, fmt, lo, hi);
    b.label = label;
    b.lo = lo;
    b.hi = hi;
    b.count = static_cast<long>(slice.size());
    b.mae = mean_abs_err(slice);
    b.f1 = micro_f1(slice);
    out.push_back(b);
  }
  return out;
}

}  // namespace

EvalReport evaluate(GnnModel& model, const EvalConfig& cfg) {
  std::vector<Trajectory> trajs =
      sample_many(cfg.sample, cfg.seed, cfg.stream_id, 0, cfg.count, cfg.balanced);
  std::vector<Prediction> preds = predict_batched(model, trajs, cfg.batch);

  EvalReport rep;
  rep.rows.reserve(trajs.size());
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(kNumClasses, kNumClasses);
  double se = 0.0, ae = 0.0, ce = 0.0;
  long hits = 0;
  if (cfg.keep_latents && !preds.empty())
    rep.latents.resize(static_cast<long>(preds.size()), preds[0].latent.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Trajectory& t = trajs[i];
    int label = static_cast<int>(t.model);
    int arg = 0;
    preds[i].class_probs.maxCoeff(&arg);
    counts(arg, label) += 1.0;
    double d = preds[i].alpha_hat - t.alpha;
    se += d * d;
    ae += std::abs(d);
    ce -= std::log(std::max(preds[i].class_probs(label), 1e-12));
    if (arg == label) ++hits;
    rep.rows.push_back({t.model, t.alpha, arg, preds[i].alpha_hat, t.n(), t.noise_amplitude,
                        t.fraction_a});
    if (cfg.keep_latents) rep.latents.row(static_cast<long>(i)) = preds[i].latent.transpose();
  }
  const double n = static_cast<double>(preds.size());
  rep.mse = se / n;
  rep.mae = ae / n;
  rep.ce = ce / n;
  rep.f1 = static_cast<double>(hits) / n;
  rep.confusion = Eigen::MatrixXd::Zero(kNumClasses, kNumClasses);
  for (int j = 0; j < kNumClasses; ++j) {
    double tot = counts.col(j).sum();
    if (tot > 0) rep.confusion.col(j) = counts.col(j) / tot;
  }
  rep.by_length = bucketize(rep.rows,
                            {{2, 10}, {10, 100}, {100, 1001}, {1001, 10001}},
                            [](const PredRow& r) { return static_cast<double>(r.n); },
                            "N[%g,%g)");
  rep.by_noise = bucketize(rep.rows,
                           {{0.0, 0.25}, {0.25, 0.5}, {0.5, 0.75}, {0.75, 1.01}},
                           [](const PredRow& r) { return r.noise; }, "noise[%g,%g)");
  rep.by_alpha = bucketize(rep.rows,
                           {{0.05, 0.5}, {0.5, 1.0}, {1.0, 1.5}, {1.5, 1.96}},
                           [](const PredRow& r) { return r.true_alpha; }, "alpha[%g,%g)");
  return rep;
}

void write_predictions(const std::string& path, const std::vector<PredRow>& rows) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  std::fputs("true_model,true_alpha,pred_model,pred_alpha,N,noise\n", f);
  for (const auto& r : rows) {
    // NaN alpha marks rows read from unlabeled inputs (printed as "nan").
    std::string tm = std::isnan(r.true_alpha) ? "?" : model_name(r.true_model);
    std::fprintf(f, "%s,%s,%s,%s,%d,%s\n", tm.c_str(), format_double(r.true_alpha).c_str(),
                 model_name(static_cast<Model>(r.pred_class)).c_str(),
                 format_double(r.pred_alpha).c_str(), r.n, format_double(r.noise).c_str());
  }
  std::fclose(f);
}

void write_report(const std::string& dir, const EvalReport& rep) {
  std::filesystem::create_directories(dir);
  {
    FILE* f = std::fopen((dir + "/metrics.txt").c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open metrics.txt");
    std::fprintf(f, "count %zu\nMAE %.6f\nMSE %.6f\nF1 %.6f\nCE %.6f\n", rep.rows.size(),
                 rep.mae, rep.mse, rep.f1, rep.ce);
    std::fprintf(f, "\nconfusion (rows=pred, cols=true; columns sum to 1)\n");
    const char* names[] = {"attm", "ctrw", "fbm", "lw", "sbm"};
    std::fprintf(f, "%8s", "");
    for (int j = 0; j < kNumClasses; ++j) std::fprintf(f, "%8s", names[j]);
    std::fprintf(f, "\n");
    for (int i = 0; i < kNumClasses; ++i) {
      std::fprintf(f, "%8s", names[i]);
      for (int j = 0; j < kNumClasses; ++j) std::fprintf(f, "%8.4f", rep.confusion(i, j));
      std::fprintf(f, "\n");
    }
    auto dump_buckets = [&](const char* title, const std::vector<Bucket>& bs) {
      std::fprintf(f, "\n%s\n", title);
      for (const auto& b : bs)
        std::fprintf(f, "%-16s count %6ld MAE %.4f F1 %.4f\n", b.label.c_str(), b.count, b.mae,
                     b.f1);
    };
    dump_buckets("by length", rep.by_length);
    dump_buckets("by noise", rep.by_noise);
    dump_buckets("by alpha", rep.by_alpha);
    std::fclose(f);
  }
  {
    FILE* f = std::fopen((dir + "/metrics.kv").c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open metrics.kv");
    std::fprintf(f, "count=%zu\nmae=%s\nmse=%s\nf1=%s\nce=%s\n", rep.rows.size(),
                 format_double(rep.mae).c_str(), format_double(rep.mse).c_str(),
                 format_double(rep.f1).c_str(), format_double(rep.ce).c_str());
    for (int i = 0; i < kNumClasses; ++i)
      for (int j = 0; j < kNumClasses; ++j)
        std::fprintf(f, "confusion_%d_%d=%s\n", i, j, format_double(rep.confusion(i, j)).c_str());
    auto dump = [&](const char* tag, const std::vector<Bucket>& bs) {
      for (std::size_t i = 0; i < bs.size(); ++i)
        std::fprintf(f, "%s_%zu=%s;count=%ld;mae=%s;f1=%s\n", tag, i, bs[i].label.c_str(),
                     bs[i].count, format_double(bs[i].mae).c_str(),
                     format_double(bs[i].f1).c_str());
    };
    dump("bucket_length", rep.by_length);
    dump("bucket_noise", rep.by_noise);
    dump("bucket_alpha", rep.by_alpha);
    std::fclose(f);
  }
}

void export_latent(GnnModel& model, const std::vector<Trajectory>& trajs,
                   const std::string& path) {
  std::vector<Prediction> preds = predict_batched(model, trajs, 256);
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  const int latent = static_cast<int>(model.config().latent_dim());
  std::fputs("model,alpha,N,noise,fraction_a", f);
  for (int c = 0; c < latent; ++c) std::fprintf(f, ",z%d", c);
  std::fputc('\n', f);
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const Trajectory& t = trajs[i];
    std::string mname = t.model == Model::SEGMENTED
                            ? model_name(t.model_a) + "+" + model_name(t.model_b)
                            : model_name(t.model);
    std::fprintf(f, "%s,%s,%d,%s,%s", mname.c_str(), format_double(t.alpha).c_str(), t.n(),
                 format_double(t.noise_amplitude).c_str(),
                 format_double(t.model == Model::SEGMENTED ? t.fraction_a : 1.0).c_str());
    for (int c = 0; c < latent; ++c) std::fprintf(f, ",%s", format_double(preds[i].latent(c)).c_str());
    std::fputc('\n', f);
  }
  std::fclose(f);
}

}  // namespace trajgraph
