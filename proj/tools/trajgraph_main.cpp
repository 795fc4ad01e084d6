// trajgraph: simulate anomalous-diffusion trajectories, train/evaluate the
// graph model, run inference on trajectory files, and export latents.
//
// Exit codes: 0 success, 1 bad flags or argument values, 2 malformed
// trajectory file (message carries the line number), 3 checkpoint problems
// (missing/corrupt/config mismatch), 4 other I/O failures.
#include <CLI11.hpp>

#include <trajgraph/rw_sim.hpp>
#include <trajgraph/train_eval.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace tg = trajgraph;
namespace fs = std::filesystem;

namespace {

struct CliError {
  int code;
  std::string message;
};

void apply_workers(int workers) {
#ifdef _OPENMP
  if (workers > 0) omp_set_num_threads(workers);
#endif
  (void)workers;
}

std::string dir_of(const std::string& path) {
  fs::path p = fs::path(path).parent_path();
  return p.empty() ? std::string(".") : p.string();
}

// Every run records the flags it actually ran with next to its outputs.
void write_resolved_config(const CLI::App* sub, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream f(dir + "/resolved_config.ini", std::ios::binary);
  f << "[" << sub->get_name() << "]\n" << sub->config_to_str(true, false);
}

tg::GnnModel load_model(const std::string& ckpt) {
  try {
    tg::CheckpointMeta meta = tg::peek_checkpoint(ckpt);
    tg::GnnConfig cfg = tg::GnnConfig::from_json(meta.config_json);
    cfg.validate();
    tg::GnnModel model(cfg, 1);
    model.load(ckpt);
    return model;
  } catch (const std::exception& e) {
    throw CliError{3, std::string("checkpoint: ") + e.what()};
  }
}

std::vector<tg::Trajectory> read_batch_checked(const std::string& path) {
  try {
    return tg::read_batch(path);
  } catch (const tg::ParseError& pe) {
    throw CliError{2, path + ":" + std::to_string(pe.line) + ": " + pe.message};
  }
}

void check_input_dim(const std::vector<tg::Trajectory>& trajs, const tg::GnnConfig& cfg) {
  for (const auto& t : trajs)
    if (t.dim() != cfg.dim)
      throw CliError{3, "input dimension d=" + std::to_string(t.dim()) +
                            " does not match checkpoint d=" + std::to_string(cfg.dim)};
}

std::vector<tg::PredRow> rows_from(const std::vector<tg::Trajectory>& trajs,
                                   const std::vector<tg::Prediction>& preds) {
  std::vector<tg::PredRow> rows;
  rows.reserve(trajs.size());
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    int arg = 0;
    preds[i].class_probs.maxCoeff(&arg);
    rows.push_back({trajs[i].model, trajs[i].alpha, arg, preds[i].alpha_hat, trajs[i].n(),
                    trajs[i].noise_amplitude, trajs[i].fraction_a});
  }
  return rows;
}

// Accuracy over length bins x noise bins (plot-ready CSV block).
void write_grid(const std::string& path, const std::vector<tg::PredRow>& rows) {
  const std::pair<double, double> len_bins[] = {{2, 10}, {10, 100}, {100, 1001}, {1001, 10001}};
  const std::pair<double, double> noise_bins[] = {
      {0.0, 0.25}, {0.25, 0.5}, {0.5, 0.75}, {0.75, 1.01}};
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  std::fputs("length_bin", f);
  for (const auto& nb : noise_bins) std::fprintf(f, ",noise[%g:%g)", nb.first, nb.second);
  std::fputc('\n', f);
  for (const auto& lb : len_bins) {
    std::fprintf(f, "N[%g:%g)", lb.first, lb.second);
    for (const auto& nb : noise_bins) {
      long hits = 0, tot = 0;
      for (const auto& r : rows) {
        if (r.n < lb.first || r.n >= lb.second) continue;
        if (r.noise < nb.first || r.noise >= nb.second) continue;
        ++tot;
        if (r.pred_class == static_cast<int>(r.true_model)) ++hits;
      }
      if (tot)
        std::fprintf(f, ",%.6f", static_cast<double>(hits) / static_cast<double>(tot));
      else
        std::fputs(",nan", f);
    }
    std::fputc('\n', f);
  }
  std::fclose(f);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trajectory-graph pipeline: simulate, train, evaluate, infer, export latents"};
  app.require_subcommand(1);
  app.set_config("--config", "", "plain-text config file ([subcommand] sections, key=value)");

  int workers = 0;
  app.add_option("--workers", workers,
                 "data-parallel worker threads (1 = bit-reproducible)")
      ->envname("TRAJGRAPH_WORKERS");

  // --- simulate ------------------------------------------------------------
  std::string sim_model = "fbm", sim_out = "trajectories.csv";
  double sim_alpha = 1.0, sim_noise = 0.0, sim_fraction = 0.5;
  int sim_n = 100, sim_count = 1, sim_d = 3;
  std::uint64_t sim_seed = 1;
  CLI::App* sim = app.add_subcommand("simulate", "generate a trajectory batch file");
  sim->configurable();
  sim->add_option("--model", sim_model, "attm|ctrw|fbm|lw|sbm|bm|ou or a+b for a two-segment probe")
      ->capture_default_str();
  sim->add_option("--alpha", sim_alpha, "anomalous exponent")->capture_default_str();
  sim->add_option("--n", sim_n, "points per trajectory")->capture_default_str();
  sim->add_option("--count", sim_count, "number of trajectories")->capture_default_str();
  sim->add_option("--d", sim_d, "spatial dimension (1-3)")->capture_default_str();
  sim->add_option("--noise", sim_noise, "localisation noise amplitude")->capture_default_str();
  sim->add_option("--fraction-a", sim_fraction, "first-segment fraction for a+b probes")
      ->capture_default_str();
  sim->add_option("--seed", sim_seed, "global seed")->capture_default_str();
  sim->add_option("--out", sim_out, "output batch file (.gz for gzip)")->capture_default_str();

  // --- train ---------------------------------------------------------------
  std::string tr_preset = "185879", tr_out_dir, tr_mode = "joint", tr_data;
  long tr_budget = 500000, tr_val_every = 50000;
  int tr_batch = 128, tr_val_size = 10000, tr_nmin = 10, tr_nmax = 1000, tr_d = 3;
  double tr_lr0 = 1e-3, tr_lr_floor = 2e-4, tr_noise_min = 0.0, tr_noise_max = 0.0;
  std::uint64_t tr_seed = 1;
  CLI::App* tr = app.add_subcommand("train", "train a model on freshly simulated trajectories");
  tr->configurable();
  tr->add_option("--preset", tr_preset, "width preset: 1588|6420|36660|185879|871596")
      ->capture_default_str();
  tr->add_option("--budget", tr_budget, "training trajectories")->capture_default_str();
  tr->add_option("--batch", tr_batch, "trajectories per optimiser step")->capture_default_str();
  tr->add_option("--lr0", tr_lr0, "initial learning rate")->capture_default_str();
  tr->add_option("--lr-floor", tr_lr_floor, "final learning rate")->capture_default_str();
  tr->add_option("--val-every", tr_val_every, "trajectories between validations")
      ->capture_default_str();
  tr->add_option("--val-size", tr_val_size, "held-out validation trajectories")
      ->capture_default_str();
  tr->add_option("--n-min", tr_nmin, "shortest trajectory")->capture_default_str();
  tr->add_option("--n-max", tr_nmax, "longest trajectory")->capture_default_str();
  tr->add_option("--noise-min", tr_noise_min, "noise amplitude lower bound")
      ->capture_default_str();
  tr->add_option("--noise-max", tr_noise_max, "noise amplitude upper bound")
      ->capture_default_str();
  tr->add_option("--d", tr_d, "spatial dimension (1-3)")->capture_default_str();
  tr->add_option("--mode", tr_mode, "joint|regression|classification")->capture_default_str();
  tr->add_option("--data", tr_data, "fixed trajectory file instead of on-the-fly sampling");
  tr->add_option("--seed", tr_seed, "global seed")->capture_default_str();
  tr->add_option("--out-dir", tr_out_dir, "output directory")->required();

  // --- eval ----------------------------------------------------------------
  std::string ev_ckpt, ev_out_dir, ev_grid;
  int ev_count = 10000, ev_nmin = 10, ev_nmax = 1000, ev_batch = 256;
  double ev_noise_min = 0.0, ev_noise_max = 0.0;
  bool ev_balanced = true, ev_predictions = false;
  std::uint64_t ev_seed = 1;
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a fresh simulated set");
  ev->configurable();
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--count", ev_count, "evaluation trajectories")->capture_default_str();
  ev->add_option("--n-min", ev_nmin, "shortest trajectory")->capture_default_str();
  ev->add_option("--n-max", ev_nmax, "longest trajectory")->capture_default_str();
  ev->add_option("--noise-min", ev_noise_min, "noise amplitude lower bound")
      ->capture_default_str();
  ev->add_option("--noise-max", ev_noise_max, "noise amplitude upper bound")
      ->capture_default_str();
  ev->add_option("--batch", ev_batch, "trajectories per forward pass")->capture_default_str();
  ev->add_option("--balanced", ev_balanced, "round-robin model draw (micro-F1 = accuracy)")
      ->capture_default_str();
  ev->add_flag("--predictions", ev_predictions, "also write per-trajectory predictions.csv");
  ev->add_option("--grid", ev_grid, "accuracy grid, e.g. length,noise");
  ev->add_option("--seed", ev_seed, "global seed")->capture_default_str();
  ev->add_option("--out-dir", ev_out_dir, "output directory")->required();

  // --- infer ---------------------------------------------------------------
  std::string in_ckpt, in_input, in_out = "predictions.csv";
  int in_batch = 256;
  CLI::App* in = app.add_subcommand("infer", "predict on an existing trajectory batch file");
  in->configurable();
  in->add_option("--checkpoint", in_ckpt, "model checkpoint")->required();
  in->add_option("--input", in_input, "trajectory batch file")->required();
  in->add_option("--out", in_out, "predictions file")->capture_default_str();
  in->add_option("--batch", in_batch, "trajectories per forward pass")->capture_default_str();

  // --- export-latent ---------------------------------------------------------
  std::string ex_ckpt, ex_input, ex_out = "latents.csv";
  CLI::App* ex = app.add_subcommand("export-latent",
                                    "write one labelled latent row per trajectory");
  ex->configurable();
  ex->add_option("--checkpoint", ex_ckpt, "model checkpoint")->required();
  ex->add_option("--input", ex_input, "trajectory batch file")->required();
  ex->add_option("--out", ex_out, "latent CSV")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    apply_workers(workers);

    if (sim->parsed()) {
      tg::Model ma, mb;
      bool segmented = false;
      auto plus = sim_model.find('+');
      if (plus != std::string::npos) {
        segmented = true;
        if (!tg::model_from_name(sim_model.substr(0, plus), ma) ||
            !tg::model_from_name(sim_model.substr(plus + 1), mb))
          throw std::domain_error("unknown model in: " + sim_model);
      } else if (!tg::model_from_name(sim_model, ma)) {
        throw std::domain_error("unknown model: " + sim_model);
      }
      std::vector<tg::Trajectory> trajs(sim_count);
      for (int i = 0; i < sim_count; ++i) {
        std::uint64_t s = tg::derive_seed(sim_seed, tg::kStreamProbe, i);
        tg::Trajectory t = segmented
                               ? tg::simulate_segmented(ma, mb, sim_alpha, sim_n, sim_d, 1.0,
                                                        sim_fraction, s)
                               : tg::simulate(ma, sim_alpha, sim_n, sim_d, 1.0, s);
        if (sim_noise > 0.0) t = tg::add_noise(t, sim_noise, s);
        trajs[i] = std::move(t);
      }
      tg::write_batch(sim_out, trajs);
      write_resolved_config(sim, dir_of(sim_out));
      std::printf("wrote %d trajectories to %s\n", sim_count, sim_out.c_str());
    } else if (tr->parsed()) {
      tg::TrainConfig cfg;
      tg::Preset p;
      if (!tg::GnnConfig::preset_by_name(tr_preset, p))
        throw std::domain_error("unknown preset: " + tr_preset);
      cfg.gnn = tg::GnnConfig::preset(p);
      cfg.gnn.dim = tr_d;
      cfg.sample.n_min = tr_nmin;
      cfg.sample.n_max = tr_nmax;
      cfg.sample.noise_min = tr_noise_min;
      cfg.sample.noise_max = tr_noise_max;
      cfg.sample.dim = tr_d;
      cfg.batch_size = tr_batch;
      cfg.budget = tr_budget;
      cfg.lr0 = tr_lr0;
      cfg.lr_floor = tr_lr_floor;
      cfg.val_every = tr_val_every;
      cfg.val_size = tr_val_size;
      cfg.seed = tr_seed;
      cfg.fixed_file = tr_data;
      cfg.out_dir = tr_out_dir;
      if (tr_mode == "joint") cfg.mode = tg::TaskMode::Joint;
      else if (tr_mode == "regression") cfg.mode = tg::TaskMode::RegressionOnly;
      else if (tr_mode == "classification") cfg.mode = tg::TaskMode::ClassificationOnly;
      else throw std::domain_error("unknown mode: " + tr_mode);
      write_resolved_config(tr, tr_out_dir);
      tg::TrainResult res = tg::train(cfg);
      std::printf("checkpoint %s best_val_loss %.6f best_val_mae %.6f best_val_f1 %.6f\n",
                  res.checkpoint_path.c_str(), res.best_val_loss, res.best_val_mae,
                  res.best_val_f1);
    } else if (ev->parsed()) {
      tg::GnnModel model = load_model(ev_ckpt);
      tg::EvalConfig cfg;
      cfg.sample.n_min = ev_nmin;
      cfg.sample.n_max = ev_nmax;
      cfg.sample.noise_min = ev_noise_min;
      cfg.sample.noise_max = ev_noise_max;
      cfg.sample.dim = model.config().dim;
      cfg.count = ev_count;
      cfg.seed = ev_seed;
      cfg.balanced = ev_balanced;
      cfg.batch = ev_batch;
      tg::EvalReport rep = tg::evaluate(model, cfg);
      tg::write_report(ev_out_dir, rep);
      if (ev_predictions) tg::write_predictions(ev_out_dir + "/predictions.csv", rep.rows);
      if (!ev_grid.empty()) {
        if (ev_grid != "length,noise")
          throw std::domain_error("unsupported grid axes: " + ev_grid);
        write_grid(ev_out_dir + "/grid.csv", rep.rows);
      }
      write_resolved_config(ev, ev_out_dir);
      std::printf("count %d MAE %.6f F1 %.6f\n", ev_count, rep.mae, rep.f1);
    } else if (in->parsed()) {
      tg::GnnModel model = load_model(in_ckpt);
      std::vector<tg::Trajectory> trajs = read_batch_checked(in_input);
      check_input_dim(trajs, model.config());
      std::vector<tg::Prediction> preds = tg::predict_batched(model, trajs, in_batch);
      tg::write_predictions(in_out, rows_from(trajs, preds));
      write_resolved_config(in, dir_of(in_out));
      std::printf("wrote %zu predictions to %s\n", trajs.size(), in_out.c_str());
    } else if (ex->parsed()) {
      tg::GnnModel model = load_model(ex_ckpt);
      std::vector<tg::Trajectory> trajs = read_batch_checked(ex_input);
      check_input_dim(trajs, model.config());
      tg::export_latent(model, trajs, ex_out);
      write_resolved_config(ex, dir_of(ex_out));
      std::printf("wrote %zu latent rows to %s\n", trajs.size(), ex_out.c_str());
    }
    return 0;
  } catch (const CliError& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return e.code;
  } catch (const tg::ParseError& e) {
    std::fprintf(stderr, "error: line %ld: %s\n", e.line, e.message.c_str());
    return 2;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
}
