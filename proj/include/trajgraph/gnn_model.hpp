#pragma once
// The trajectory encoder and task heads. Node features are batch-normalised
// per column on entry (the cumulative columns span orders of magnitude across
// walk families), then three message-passing layers whose input compositions
// are:
//   conv1 : mean(x^1..x^p) over in-neighbors  (+) max(x^1) over in-neighbors
//   conv2 : mean(u1) (+) max(u1)
//   conv3 : mean(u2) (+) max(u2) (+) mean(u1) (+) max(u1)   [skip from conv1]
// followed by graph pooling mean (+) max (+) sum over nodes, a projector MLP
// to the shared latent, and two heads (exponent regressor, 5-way classifier).
// The preset width tables fix every MLP width including its input.
#include <trajgraph/featurize.hpp>
#include <trajgraph/graph_build.hpp>
#include <trajgraph/nn_core.hpp>
#include <trajgraph/trajectory.hpp>

namespace trajgraph {

enum class Preset { W1588, W6420, W36660, W185879, W871596 };

struct GnnConfig {
  int p_max = 1;
  int dim = 3;
  std::vector<std::vector<int>> conv_widths;  // three tuples, input width first
  std::vector<int> proj_widths;
  std::vector<int> alpha_widths;
  std::vector<int> cls_widths;
  int k = 20;
  Wiring wiring = Wiring::CausalGeometric;
  double clip_c = 10.0;
  bool bn_hidden = true;  // batch norm after hidden linears of conv/projector MLPs

  int n_x() const { return feature_count(dim); }
  int latent_dim() const { return proj_widths.back(); }
  // Checked structural identities between widths and the composition above;
  // throws std::domain_error on mismatch.
  void validate() const;
  std::string feature_layout() const;  // e.g. "tg-feat-v1:d3:p2:k20:causal:clip10"
  std::string to_json() const;
  static GnnConfig from_json(const std::string& json);
  static GnnConfig preset(Preset p);
  static bool preset_by_name(const std::string& name, Preset& out);
};

long preset_param_count(const GnnConfig& cfg);

// A batch of graphs stacked along the node dimension.
struct GraphBatch {
  Eigen::MatrixXd feats_raw;    // sum(N) x n_x
  Eigen::MatrixXd feats_pow;    // sum(N) x p*n_x
  AdjCsr adj;                   // global-row in-neighbor lists
  std::vector<int> seg_off;     // size G+1
  std::vector<int> class_label;     // label index or -1
  Eigen::VectorXd alpha_label;      // NaN allowed when unlabeled
  std::vector<int> lengths;
  std::vector<double> noise;
  std::vector<Model> models;
  std::vector<double> fraction_a;   // segmented probes; 1.0 otherwise
  int graphs() const { return static_cast<int>(seg_off.size()) - 1; }
};

// Featurise + wire the trajectories (already noisy if noise applies) into a
// stacked batch. Pipeline per graph: clip_steps -> node_features ->
// feature_powers -> wiring. Random-regular wiring derives its seed from the
// trajectory seed.
GraphBatch build_batch(const std::vector<Trajectory>& noisy, const GnnConfig& cfg);

struct Prediction {
  double alpha_hat;
  Eigen::VectorXd class_probs;  // size 5
  Eigen::VectorXd latent;
};

struct BatchOutput {
  int alpha_node = -1;   // G x 1
  int logits_node = -1;  // G x 5
  int latent_node = -1;  // G x latent
};

class GnnModel {
 public:
  explicit GnnModel(const GnnConfig& cfg, std::uint64_t init_seed = 1234);

  const GnnConfig& config() const { return cfg_; }
  long param_count() const;
  std::vector<TensorRef> tensors();  // canonical checkpoint order

  // Forward over a stacked batch. In training mode batch statistics are used
  // and (when update_stats) folded into the running stats.
  BatchOutput forward(Tape& tape, const GraphBatch& batch, bool training, bool update_stats,
                      std::vector<std::pair<Eigen::MatrixXd*, int>>* bound = nullptr);

  // Eval-mode single-trajectory prediction (read-only, concurrency-safe).
  Prediction predict(const Trajectory& noisy) const;

  void save(const std::string& path) const;
  // Throws std::runtime_error when the file's config mismatches cfg.
  void load(const std::string& path);

 private:
  int input_bn(Tape& tape, int x, int which, bool training, bool update_stats,
               std::vector<std::pair<Eigen::MatrixXd*, int>>* bound);

  GnnConfig cfg_;
  // Entry batch norms for the two feature leaves (0: raw, 1: powered). Stall-
  // heavy walks blow the cumulative columns up by ~500x, which would otherwise
  // saturate the first convolution's hidden norms.
  mutable Eigen::MatrixXd in_gamma_[2], in_beta_[2];
  mutable BnStats in_stats_[2];
  mutable Mlp conv_[3];
  mutable Mlp proj_, alpha_, cls_;
};

// Spec-shaped generic convolution used by contract tests:
// out_i = mlp(x_i (+) mean_{j in N(i)} x_j (+) max_{j in N(i)} x_j).
int conv_self_mean_max(Tape& tape, int x, const AdjCsr& adj, Mlp& mlp, bool training);

// In-neighbor CSR over 0-based rows from a 1-based edge list.
AdjCsr adjacency_from_edges(int n, const std::vector<Edge>& edges, int row_offset = 0);

}  // namespace trajgraph
