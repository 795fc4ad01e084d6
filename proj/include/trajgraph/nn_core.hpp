#pragma once
// Dense neural-network substrate: a reverse-mode tape over Eigen matrices
// with exactly the operations the graph network needs, MLPs with optional
// batch normalisation, Adam, a binary checkpoint format, and a central
// finite-difference gradient checker. Everything is double precision.
#include <trajgraph/rng.hpp>

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace trajgraph {

// In-neighbor lists in CSR form over row indices of a node matrix.
struct AdjCsr {
  std::vector<int> off;  // size rows+1
  std::vector<int> src;  // concatenated in-neighbor row indices
  int rows() const { return static_cast<int>(off.size()) - 1; }
  int degree(int i) const { return off[i + 1] - off[i]; }
};

struct BnStats {
  Eigen::MatrixXd running_mean;  // 1 x F
  Eigen::MatrixXd running_var;   // 1 x F
  double momentum = 0.1;
  double eps = 1e-5;
};

class Tape {
 public:
  // Leaves. Parameters need gradients; data leaves do not.
  int leaf(const Eigen::MatrixXd& value, bool needs_grad);

  const Eigen::MatrixXd& val(int id) const { return nodes_[id].val; }
  const Eigen::MatrixXd& grad(int id) const { return nodes_[id].grad; }

  int matmul(int a, int b);
  int add_row_broadcast(int x, int bias);  // bias 1 x F added to every row
  int relu(int x);
  int concat_cols(const std::vector<int>& xs);
  // Batch norm over the row (node/batch) dimension, one statistic per column.
  // Training mode uses biased batch variance for normalisation and, when
  // update_stats is set, folds the unbiased batch variance into the running
  // stats. Eval mode normalises with the running stats.
  int batchnorm(int x, int gamma, int beta, BnStats* stats, bool training, bool update_stats);
  // Per-row aggregation over in-neighbors; empty neighborhoods yield zero.
  // The AdjCsr is captured by reference and must outlive backward().
  int edge_mean(int x, const AdjCsr& adj);
  int edge_max(int x, const AdjCsr& adj);
  // Per-graph pooling over row segments [off[g], off[g+1]).
  int segment_mean(int x, const std::vector<int>& seg_off);
  int segment_max(int x, const std::vector<int>& seg_off);
  int segment_sum(int x, const std::vector<int>& seg_off);
  // Scalar (1x1) losses.
  int mse_loss(int pred, const Eigen::VectorXd& target);
  // Mean cross-entropy with softmax; predicted probabilities written to
  // probs_out (rows = batch) before the log clamp at 1e-12.
  int softmax_ce(int logits, const std::vector<int>& labels, Eigen::MatrixXd* probs_out);
  int add(int a, int b);  // same-shape addition (used for scalar loss sums)

  void backward(int loss_id);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Eigen::MatrixXd val;
    Eigen::MatrixXd grad;
    std::function<void()> back;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  int push(Eigen::MatrixXd v, bool needs_grad, std::function<void()> back);
  // Lazily allocated accumulation buffer; backward() frees non-leaf buffers as
  // soon as their node has propagated, so only leaf grads outlive the sweep.
  Eigen::MatrixXd& gacc(int id);
  friend struct TapeOps;
};

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

// Multi-layer perceptron; widths include the input width. ReLU on hidden
// layers, identity output. With bn_hidden, batch norm sits between each
// hidden linear and its ReLU.
struct Mlp {
  std::vector<int> widths;
  bool bn_hidden = false;
  std::vector<Eigen::MatrixXd> W;   // widths[l] x widths[l+1]
  std::vector<Eigen::MatrixXd> b;   // 1 x widths[l+1]
  std::vector<Eigen::MatrixXd> bn_gamma, bn_beta;  // 1 x width, per hidden layer
  std::vector<BnStats> bn_stats;

  void init(const std::vector<int>& w, bool bn, Rng& rng);  // Glorot uniform
  int layers() const { return static_cast<int>(widths.size()) - 1; }
  long param_count() const;  // sum(in*out + out) + 2*width per batch norm

  // Binds parameter leaves into the tape and returns the output node.
  // bound, when given, receives (tensor pointer -> leaf id) for every
  // trainable tensor, in canonical order.
  int forward(Tape& tape, int x, bool training, bool update_stats,
              std::vector<std::pair<Eigen::MatrixXd*, int>>* bound);
};

// Named view over every tensor of a model; trainable=false marks batch-norm
// running statistics, which checkpoints carry but Adam must not touch.
struct TensorRef {
  std::string name;
  Eigen::MatrixXd* tensor;
  bool trainable;
};

std::vector<TensorRef> mlp_tensors(Mlp& mlp, const std::string& prefix);

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;
  std::vector<Eigen::MatrixXd> m, v;

  void init(const std::vector<TensorRef>& params);
  // grads aligned with the trainable entries of params (same order).
  void step(const std::vector<TensorRef>& params,
            const std::vector<Eigen::MatrixXd>& grads, double lr_now);
};

// Checkpoint: magic TGCKPT01, version, feature-layout id, config JSON, then
// a named-tensor index and a flat little-endian float64 payload. Bit-exact
// round trip. Throws std::runtime_error on malformed input.
void save_checkpoint(const std::string& path, const std::string& feature_layout,
                     const std::string& config_json, const std::vector<TensorRef>& tensors);
struct CheckpointMeta {
  std::string feature_layout;
  std::string config_json;
};
// Loads into pre-arranged tensors; names and shapes must match exactly.
CheckpointMeta load_checkpoint(const std::string& path, const std::vector<TensorRef>& tensors);
// Reads just the metadata (for config validation before model construction).
CheckpointMeta peek_checkpoint(const std::string& path);

// Central-difference gradient check. loss() must recompute the loss from the
// current values of the tensors; analytic[i] aligns with tensors[i]. Only
// every `stride`-th coefficient is probed when stride > 1. Returns the
// maximum relative error max(|ad-fd| / max(denom_floor, |ad|+|fd|)).
double gradient_check(const std::vector<TensorRef>& tensors,
                      const std::vector<Eigen::MatrixXd>& analytic,
                      const std::function<double()>& loss, int stride = 1,
                      double denom_floor = 1e-8);

}  // namespace trajgraph
