#pragma once
// Streamed sampling, multi-task loss, training loop with the exponential lr
// schedule, and the evaluation harness (MAE, micro-F1, confusion, buckets,
// latent export).
#include <trajgraph/gnn_model.hpp>

#include <optional>
#include <string>
#include <vector>

namespace trajgraph {

enum class TaskMode { RegressionOnly, ClassificationOnly, Joint };

struct SampleSpec {
  int n_min = 10, n_max = 1000;
  double noise_min = 0.0, noise_max = 0.0;
  int dim = 3;
  std::vector<Model> model_set = {Model::ATTM, Model::CTRW, Model::FBM, Model::LW, Model::SBM};
};

// Fully determined by (global_seed, stream_id, index). balanced picks the
// model round-robin by index (evaluation protocol); otherwise uniform.
Trajectory sample_trajectory(const SampleSpec& spec, std::uint64_t global_seed,
                             std::uint64_t stream_id, std::uint64_t index, bool balanced);

std::vector<Trajectory> sample_many(const SampleSpec& spec, std::uint64_t global_seed,
                                    std::uint64_t stream_id, std::uint64_t index0, int count,
                                    bool balanced);

struct TrainConfig {
  GnnConfig gnn;
  SampleSpec sample;
  int batch_size = 128;
  long budget = 500000;  // trajectories
  double lr0 = 1e-3;
  double lr_floor = 2e-4;
  std::uint64_t seed = 1;
  TaskMode mode = TaskMode::Joint;
  long val_every = 50000;  // trajectories between held-out validations
  int val_size = 10000;
  std::string out_dir;     // receives checkpoint.tgc, checkpoint.json, train_log.csv
  // Regression-test mode: cycle batches from this trajectory file instead of
  // sampling fresh ones. Validation still uses the sampled held-out stream.
  std::string fixed_file;
  bool quiet = false;
};

// lr(t) = lr0 * (lr_floor/lr0)^min(t/budget, 1), t in trajectories seen.
double lr_schedule(const TrainConfig& cfg, long trajs_seen);

// Scalar loss node for the batch. Joint = MSE + CE on one forward pass.
// Only graphs with a class label enter CE; alpha labels must be finite for
// modes that regress.
int loss_nodes(Tape& tape, const BatchOutput& out, const GraphBatch& batch, TaskMode mode,
               int* mse_node = nullptr, int* ce_node = nullptr);

struct TrainResult {
  std::string checkpoint_path;
  double best_val_loss = 0.0;
  double best_val_mae = 0.0;
  double best_val_f1 = 0.0;
  long steps = 0;
};

TrainResult train(const TrainConfig& cfg);

struct PredRow {
  Model true_model;
  double true_alpha;
  int pred_class;
  double pred_alpha;
  int n;
  double noise;
  double fraction_a;
};

struct Bucket {
  std::string label;
  double lo, hi;
  long count = 0;
  double mae = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  double mae = 0.0, mse = 0.0, f1 = 0.0, ce = 0.0;
  Eigen::MatrixXd confusion;  // 5x5, column j = true class j, columns sum to 1
  std::vector<Bucket> by_length, by_noise, by_alpha;
  std::vector<PredRow> rows;
  Eigen::MatrixXd latents;  // count x latent_dim when requested
};

struct EvalConfig {
  SampleSpec sample;
  int count = 10000;
  std::uint64_t seed = 1;
  std::uint64_t stream_id = kStreamEval;
  bool balanced = true;
  int batch = 64;  // trajectories per forward pass; bounds peak activation memory
  bool keep_latents = false;
};

EvalReport evaluate(GnnModel& model, const EvalConfig& cfg);

// Batched eval-mode predictions for arbitrary trajectories.
std::vector<Prediction> predict_batched(GnnModel& model, const std::vector<Trajectory>& trajs,
                                        int batch = 64);

// Metrics over explicit prediction rows (used for bucket slices).
double micro_f1(const std::vector<PredRow>& rows);
double mean_abs_err(const std::vector<PredRow>& rows);

void write_predictions(const std::string& path, const std::vector<PredRow>& rows);
void write_report(const std::string& dir, const EvalReport& report);

// One latent row per trajectory with labels; CSV with header.
void export_latent(GnnModel& model, const std::vector<Trajectory>& trajs,
                   const std::string& path);

}  // namespace trajgraph
