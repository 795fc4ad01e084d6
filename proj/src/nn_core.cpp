#include <trajgraph/nn_core.hpp>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <tuple>

namespace trajgraph {

int Tape::push(Eigen::MatrixXd v, bool needs_grad, std::function<void()> back) {
  Node n;
  n.val = std::move(v);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Eigen::MatrixXd& Tape::gacc(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Eigen::MatrixXd::Zero(n.val.rows(), n.val.cols());
  return n.grad;
}

int Tape::leaf(const Eigen::MatrixXd& value, bool needs_grad) {
  return push(value, needs_grad, nullptr);
}

int Tape::matmul(int a, int b) {
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  Eigen::MatrixXd v = nodes_[a].val * nodes_[b].val;
  int id = push(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [this, a, b, id]() {
      const Eigen::MatrixXd& g = nodes_[id].grad;
      if (nodes_[a].needs_grad) gacc(a).noalias() += g * nodes_[b].val.transpose();
      if (nodes_[b].needs_grad) gacc(b).noalias() += nodes_[a].val.transpose() * g;
    };
  return id;
}

int Tape::add_row_broadcast(int x, int bias) {
  bool ng = nodes_[x].needs_grad || nodes_[bias].needs_grad;
  Eigen::MatrixXd v = nodes_[x].val;
  v.rowwise() += Eigen::RowVectorXd(nodes_[bias].val.row(0));
  int id = push(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [this, x, bias, id]() {
      const Eigen::MatrixXd& g = nodes_[id].grad;
      if (nodes_[x].needs_grad) gacc(x) += g;
      if (nodes_[bias].needs_grad) gacc(bias) += g.colwise().sum();
    };
  return id;
}

int Tape::relu(int x) {
  bool ng = nodes_[x].needs_grad;
  Eigen::MatrixXd v = nodes_[x].val.cwiseMax(0.0);
  int id = push(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [this, x, id]() {
      gacc(x).array() += nodes_[id].grad.array() * (nodes_[x].val.array() > 0.0).cast<double>();
    };
  return id;
}

int Tape::concat_cols(const std::vector<int>& xs) {
  bool ng = false;
  Eigen::Index rows = nodes_[xs.front()].val.rows(), cols = 0;
  for (int x : xs) {
    ng = ng || nodes_[x].needs_grad;
    cols += nodes_[x].val.cols();
  }
  Eigen::MatrixXd v(rows, cols);
  Eigen::Index at = 0;
  for (int x : xs) {
    v.middleCols(at, nodes_[x].val.cols()) = nodes_[x].val;
    at += nodes_[x].val.cols();
  }
  int id = push(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [this, xs, id]() {
      Eigen::Index at = 0;
      for (int x : xs) {
        Eigen::Index c = nodes_[x].val.cols();
        if (nodes_[x].needs_grad) gacc(x) += nodes_[id].grad.middleCols(at, c);
        at += c;
      }
    };
  return id;
}

int Tape::batchnorm(int x, int gamma, int beta, BnStats* stats, bool training,
                    bool update_stats) {
  const Eigen::MatrixXd& X = nodes_[x].val;
  const Eigen::Index m = X.rows();
  bool ng = nodes_[x].needs_grad || nodes_[gamma].needs_grad || nodes_[beta].needs_grad;

  Eigen::RowVectorXd mu, inv_std;
  Eigen::MatrixXd xhat;
  if (training) {
    mu = X.colwise().mean();
    Eigen::RowVectorXd var_b =
        (X.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(m);
    inv_std = (var_b.array() + stats->eps).rsqrt();
    xhat = (X.rowwise() - mu).array().rowwise() * inv_std.array();
    if (update_stats) {
      double mom = stats->momentum;
      Eigen::RowVectorXd var_u = var_b * (static_cast<double>(m) / std::max<double>(m - 1, 1));
      stats->running_mean.row(0) = (1.0 - mom) * stats->running_mean.row(0) + mom * mu;
      stats->running_var.row(0) = (1.0 - mom) * stats->running_var.row(0) + mom * var_u;
    }
  } else {
    mu = stats->running_mean.row(0);
    inv_std = (stats->running_var.row(0).array() + stats->eps).rsqrt();
    xhat = (X.rowwise() - mu).array().rowwise() * inv_std.array();
  }
  Eigen::RowVectorXd gam_row = nodes_[gamma].val.row(0);
  Eigen::RowVectorXd bet_row = nodes_[beta].val.row(0);
  Eigen::MatrixXd y = xhat;
  y.array().rowwise() *= gam_row.array();
  y.rowwise() += bet_row;
  int id = push(std::move(y), ng, nullptr);
  if (ng) {
    auto xhat_p = std::make_shared<Eigen::MatrixXd>(std::move(xhat));
    auto inv_p = std::make_shared<Eigen::RowVectorXd>(std::move(inv_std));
    nodes_[id].back = [this, x, gamma, beta, id, xhat_p, inv_p, training, m]() {
      const Eigen::MatrixXd& g = nodes_[id].grad;
      if (nodes_[gamma].needs_grad)
        gacc(gamma).row(0) += (g.array() * xhat_p->array()).colwise().sum().matrix();
      if (nodes_[beta].needs_grad) gacc(beta).row(0) += g.colwise().sum();
      if (!nodes_[x].needs_grad) return;
      Eigen::RowVectorXd gam = nodes_[gamma].val.row(0);
      if (training) {
        // d/dx of batch-statistics normalisation.
        Eigen::MatrixXd dxhat = g.array().rowwise() * gam.array();
        Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
        Eigen::RowVectorXd sum_dxhat_xhat = (dxhat.array() * xhat_p->array()).colwise().sum();
        Eigen::MatrixXd dx =
            (dxhat * static_cast<double>(m)).rowwise() - sum_dxhat;
        dx.array() -= xhat_p->array().rowwise() * sum_dxhat_xhat.array();
        dx.array().rowwise() *= (inv_p->array() / static_cast<double>(m));
        gacc(x) += dx;
      } else {
        gacc(x).array() += g.array().rowwise() * (gam.array() * inv_p->array());
      }
    };
  }
  return id;
}

int Tape::edge_mean(int x, const AdjCsr& adj) {
  const Eigen::MatrixXd& X = nodes_[x].val;
  bool ng = nodes_[x].needs_grad;
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(X.rows(), X.cols());
  for (int i = 0; i < adj.rows(); ++i) {
    int deg = adj.degree(i);
    if (deg == 0) continue;
    for (int e = adj.off[i]; e < adj.off[i + 1]; ++e) v.row(i) += X.row(adj.src[e]);
    v.row(i) /= static_cast<double>(deg);
  }
  int id = push(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [this, x, id, &adj]() {
      const Eigen::MatrixXd& g = nodes_[id].grad;
      Eigen::MatrixXd& gx = gacc(x);
      for (int i = 0; i < adj.rows(); ++i) {
        int deg = adj.degree(i);
        if (deg == 0) continue;
        double inv = 1.0 / deg;
        for (int e = adj.off[i]; e < adj.off[i + 1]; ++e) gx.row(adj.src[e]) += g.row(i) * inv;
      }
    };
  return id;
}

int Tape::edge_max(int x, const AdjCsr& adj) {
  const Eigen::MatrixXd& X = nodes_[x].val;
  bool ng = nodes_[x].needs_grad;
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(X.rows(), X.cols());
  // argmax row index per (dst, col); -1 marks an empty neighborhood.
  auto arg = std::make_shared<Eigen::MatrixXi>(
      Eigen::MatrixXi::Constant(X.rows(), X.cols(), -1));
  for (int i = 0; i < adj.rows(); ++i) {
    if (adj.degree(i) == 0) continue;
    for (int e = adj.off[i]; e < adj.off[i + 1]; ++e) {
      int j = adj.src[e];
      for (Eigen::Index c = 0; c < X.cols(); ++c) {
        if ((*arg)(i, c) < 0 || X(j, c) > v(i, c)) {
          v(i, c) = X(j, c);
          (*arg)(i, c) = j;
        }
      }
    }
  }
  int id = push(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [this, x, id, arg]() {
      const Eigen::MatrixXd& g = nodes_[id].grad;
      Eigen::MatrixXd& gx = gacc(x);
      for (Eigen::Index i = 0; i < g.rows(); ++i)
        for (Eigen::Index c = 0; c < g.cols(); ++c)
          if ((*arg)(i, c) >= 0) gx((*arg)(i, c), c) += g(i, c);
    };
  return id;
}

namespace {
int segment_count(const std::vector<int>& off) { return static_cast<int>(off.size()) - 1; }
}  // namespace

int Tape::segment_mean(int x, const std::vector<int>& seg_off) {
  const Eigen::MatrixXd& X = nodes_[x].val;
  bool ng = nodes_[x].needs_grad;
  const int g_count = segment_count(seg_off);
  Eigen::MatrixXd v(g_count, X.cols());
  for (int g = 0; g < g_count; ++g) {
    int lo = seg_off[g], hi = seg_off[g + 1];
    v.row(g) = X.middleRows(lo, hi - lo).colwise().mean();
  }
  int id = push(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [this, x, id, seg_off]() {
      const Eigen::MatrixXd& g = nodes_[id].grad;
      Eigen::MatrixXd& gx = gacc(x);
      for (int s = 0; s < segment_count(seg_off); ++s) {
        int lo = seg_off[s], hi = seg_off[s + 1];
        double inv = 1.0 / (hi - lo);
        gx.middleRows(lo, hi - lo).rowwise() += Eigen::RowVectorXd(g.row(s) * inv);
      }
    };
  return id;
}

int Tape::segment_max(int x, const std::vector<int>& seg_off) {
  const Eigen::MatrixXd& X = nodes_[x].val;
  bool ng = nodes_[x].needs_grad;
  const int g_count = segment_count(seg_off);
  Eigen::MatrixXd v(g_count, X.cols());
  auto arg = std::make_shared<Eigen::MatrixXi>(g_count, X.cols());
  for (int g = 0; g < g_count; ++g) {
    int lo = seg_off[g], hi = seg_off[g + 1];
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      int best = lo;
      for (int r = lo + 1; r < hi; ++r)
        if (X(r, c) > X(best, c)) best = r;
      v(g, c) = X(best, c);
      (*arg)(g, c) = best;
    }
  }
  int id = push(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [this, x, id, arg]() {
      const Eigen::MatrixXd& g = nodes_[id].grad;
      Eigen::MatrixXd& gx = gacc(x);
      for (Eigen::Index s = 0; s < g.rows(); ++s)
        for (Eigen::Index c = 0; c < g.cols(); ++c) gx((*arg)(s, c), c) += g(s, c);
    };
  return id;
}

int Tape::segment_sum(int x, const std::vector<int>& seg_off) {
  const Eigen::MatrixXd& X = nodes_[x].val;
  bool ng = nodes_[x].needs_grad;
  const int g_count = segment_count(seg_off);
  Eigen::MatrixXd v(g_count, X.cols());
  for (int g = 0; g < g_count; ++g) {
    int lo = seg_off[g], hi = seg_off[g + 1];
    v.row(g) = X.middleRows(lo, hi - lo).colwise().sum();
  }
  int id = push(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [this, x, id, seg_off]() {
      const Eigen::MatrixXd& g = nodes_[id].grad;
      Eigen::MatrixXd& gx = gacc(x);
      for (int s = 0; s < segment_count(seg_off); ++s) {
        int lo = seg_off[s], hi = seg_off[s + 1];
        gx.middleRows(lo, hi - lo).rowwise() += Eigen::RowVectorXd(g.row(s));
      }
    };
  return id;
}

int Tape::mse_loss(int pred, const Eigen::VectorXd& target) {
  const Eigen::MatrixXd& P = nodes_[pred].val;
  bool ng = nodes_[pred].needs_grad;
  const double m = static_cast<double>(P.rows());
  Eigen::VectorXd diff = P.col(0) - target;
  Eigen::MatrixXd v(1, 1);
  v(0, 0) = diff.squaredNorm() / m;
  int id = push(std::move(v), ng, nullptr);
  if (ng) {
    auto diff_p = std::make_shared<Eigen::VectorXd>(std::move(diff));
    nodes_[id].back = [this, pred, id, diff_p, m]() {
      gacc(pred).col(0) += nodes_[id].grad(0, 0) * 2.0 / m * (*diff_p);
    };
  }
  return id;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double mx = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

int Tape::softmax_ce(int logits, const std::vector<int>& labels, Eigen::MatrixXd* probs_out) {
  const Eigen::MatrixXd& L = nodes_[logits].val;
  bool ng = nodes_[logits].needs_grad;
  const double m = static_cast<double>(L.rows());
  Eigen::MatrixXd probs = softmax_rows(L);
  if (probs_out) *probs_out = probs;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < L.rows(); ++i)
    loss -= std::log(std::max(probs(i, labels[i]), 1e-12));
  Eigen::MatrixXd v(1, 1);
  v(0, 0) = loss / m;
  int id = push(std::move(v), ng, nullptr);
  if (ng) {
    auto probs_p = std::make_shared<Eigen::MatrixXd>(std::move(probs));
    nodes_[id].back = [this, logits, id, probs_p, labels, m]() {
      Eigen::MatrixXd d = *probs_p;
      for (Eigen::Index i = 0; i < d.rows(); ++i) d(i, labels[i]) -= 1.0;
      gacc(logits) += nodes_[id].grad(0, 0) / m * d;
    };
  }
  return id;
}

int Tape::add(int a, int b) {
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  Eigen::MatrixXd v = nodes_[a].val + nodes_[b].val;
  int id = push(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [this, a, b, id]() {
      if (nodes_[a].needs_grad) gacc(a) += nodes_[id].grad;
      if (nodes_[b].needs_grad) gacc(b) += nodes_[id].grad;
    };
  return id;
}

void Tape::backward(int loss_id) {
  // Buffers are allocated on first accumulation (gacc) and released as soon as
  // a node has propagated, so the peak holds one copy of the activations, not
  // two. Leaves have no back closure: their grads survive for the optimizer,
  // and zeroing them here keeps repeated backward() calls consistent.
  for (auto& n : nodes_)
    if (n.grad.size()) n.grad.setZero();
  gacc(loss_id).setOnes();
  for (int i = loss_id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.back || !n.needs_grad) continue;
    if (n.grad.size() == 0) continue;  // nothing upstream feeds the loss through here
    n.back();
    n.grad.resize(0, 0);
  }
}

// --- Mlp --------------------------------------------------------------------

void Mlp::init(const std::vector<int>& w, bool bn, Rng& rng) {
  widths = w;
  bn_hidden = bn;
  const int L = layers();
  W.resize(L);
  b.resize(L);
  for (int l = 0; l < L; ++l) {
    double a = std::sqrt(6.0 / (widths[l] + widths[l + 1]));
    W[l].resize(widths[l], widths[l + 1]);
    for (Eigen::Index i = 0; i < W[l].rows(); ++i)
      for (Eigen::Index j = 0; j < W[l].cols(); ++j) W[l](i, j) = rng.uniform(-a, a);
    b[l] = Eigen::MatrixXd::Zero(1, widths[l + 1]);
  }
  const int H = bn_hidden ? L - 1 : 0;
  bn_gamma.assign(H, {});
  bn_beta.assign(H, {});
  bn_stats.assign(H, {});
  for (int h = 0; h < H; ++h) {
    bn_gamma[h] = Eigen::MatrixXd::Ones(1, widths[h + 1]);
    bn_beta[h] = Eigen::MatrixXd::Zero(1, widths[h + 1]);
    bn_stats[h].running_mean = Eigen::MatrixXd::Zero(1, widths[h + 1]);
    bn_stats[h].running_var = Eigen::MatrixXd::Ones(1, widths[h + 1]);
  }
}

long Mlp::param_count() const {
  long c = 0;
  for (int l = 0; l < layers(); ++l)
    c += static_cast<long>(widths[l]) * widths[l + 1] + widths[l + 1];
  for (std::size_t h = 0; h < bn_gamma.size(); ++h) c += 2L * bn_gamma[h].cols();
  return c;
}

int Mlp::forward(Tape& tape, int x, bool training, bool update_stats,
                 std::vector<std::pair<Eigen::MatrixXd*, int>>* bound) {
  int cur = x;
  for (int l = 0; l < layers(); ++l) {
    int wl = tape.leaf(W[l], true);
    int bl = tape.leaf(b[l], true);
    if (bound) {
      bound->push_back({&W[l], wl});
      bound->push_back({&b[l], bl});
    }
    cur = tape.add_row_broadcast(tape.matmul(cur, wl), bl);
    if (l < layers() - 1) {
      if (bn_hidden) {
        int gl = tape.leaf(bn_gamma[l], true);
        int tl = tape.leaf(bn_beta[l], true);
        if (bound) {
          bound->push_back({&bn_gamma[l], gl});
          bound->push_back({&bn_beta[l], tl});
        }
        cur = tape.batchnorm(cur, gl, tl, &bn_stats[l], training, update_stats);
      }
      cur = tape.relu(cur);
    }
  }
  return cur;
}

std::vector<TensorRef> mlp_tensors(Mlp& mlp, const std::string& prefix) {
  std::vector<TensorRef> out;
  for (int l = 0; l < mlp.layers(); ++l) {
    out.push_back({prefix + ".lin" + std::to_string(l) + ".W", &mlp.W[l], true});
    out.push_back({prefix + ".lin" + std::to_string(l) + ".b", &mlp.b[l], true});
  }
  for (std::size_t h = 0; h < mlp.bn_gamma.size(); ++h) {
    std::string p = prefix + ".bn" + std::to_string(h);
    out.push_back({p + ".gamma", &mlp.bn_gamma[h], true});
    out.push_back({p + ".beta", &mlp.bn_beta[h], true});
    out.push_back({p + ".rmean", &mlp.bn_stats[h].running_mean, false});
    out.push_back({p + ".rvar", &mlp.bn_stats[h].running_var, false});
  }
  return out;
}

// --- Adam --------------------------------------------------------------------

void Adam::init(const std::vector<TensorRef>& params) {
  m.clear();
  v.clear();
  step_count = 0;
  for (const auto& p : params) {
    if (!p.trainable) continue;
    m.push_back(Eigen::MatrixXd::Zero(p.tensor->rows(), p.tensor->cols()));
    v.push_back(Eigen::MatrixXd::Zero(p.tensor->rows(), p.tensor->cols()));
  }
}

void Adam::step(const std::vector<TensorRef>& params, const std::vector<Eigen::MatrixXd>& grads,
                double lr_now) {
  ++step_count;
  const double bc1 = 1.0 - std::pow(beta1, step_count);
  const double bc2 = 1.0 - std::pow(beta2, step_count);
  std::size_t gi = 0;
  for (const auto& p : params) {
    if (!p.trainable) continue;
    const Eigen::MatrixXd& g = grads[gi];
    m[gi] = beta1 * m[gi] + (1.0 - beta1) * g;
    v[gi] = beta2 * v[gi] + (1.0 - beta2) * g.cwiseProduct(g);
    Eigen::MatrixXd mhat = m[gi] / bc1;
    Eigen::MatrixXd vhat = v[gi] / bc2;
    p.tensor->array() -= lr_now * mhat.array() / (vhat.array().sqrt() + eps);
    ++gi;
  }
}

// --- checkpoint ---------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'T', 'G', 'C', 'K', 'P', 'T', '0', '1'};

void put_u32(FILE* f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  std::fwrite(b, 1, 4, f);
}

void put_u64(FILE* f, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  std::fwrite(b, 1, 8, f);
}

std::uint32_t get_u32(FILE* f) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) throw std::runtime_error("checkpoint: truncated");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(FILE* f) {
  unsigned char b[8];
  if (std::fread(b, 1, 8, f) != 8) throw std::runtime_error("checkpoint: truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

void put_str(FILE* f, const std::string& s) {
  put_u32(f, static_cast<std::uint32_t>(s.size()));
  std::fwrite(s.data(), 1, s.size(), f);
}

std::string get_str(FILE* f) {
  std::uint32_t len = get_u32(f);
  std::string s(len, '\0');
  if (len && std::fread(s.data(), 1, len, f) != len)
    throw std::runtime_error("checkpoint: truncated string");
  return s;
}

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};

static_assert(sizeof(double) == 8, "float64 payload assumes 8-byte double");

}  // namespace

void save_checkpoint(const std::string& path, const std::string& feature_layout,
                     const std::string& config_json, const std::vector<TensorRef>& tensors) {
  std::unique_ptr<FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  std::fwrite(kMagic, 1, 8, f.get());
  put_u32(f.get(), 1);
  put_str(f.get(), feature_layout);
  put_str(f.get(), config_json);
  put_u64(f.get(), tensors.size());
  for (const auto& t : tensors) {
    put_str(f.get(), t.name);
    put_u64(f.get(), static_cast<std::uint64_t>(t.tensor->rows()));
    put_u64(f.get(), static_cast<std::uint64_t>(t.tensor->cols()));
  }
  for (const auto& t : tensors) {
    // Row-major payload order; Eigen default storage is column-major.
    for (Eigen::Index i = 0; i < t.tensor->rows(); ++i)
      for (Eigen::Index j = 0; j < t.tensor->cols(); ++j) {
        double v = (*t.tensor)(i, j);
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_u64(f.get(), bits);
      }
  }
}

namespace {

CheckpointMeta read_header(FILE* f, std::vector<std::tuple<std::string, std::uint64_t, std::uint64_t>>& index) {
  char magic[8];
  if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  std::uint32_t version = get_u32(f);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
  CheckpointMeta meta;
  meta.feature_layout = get_str(f);
  meta.config_json = get_str(f);
  std::uint64_t count = get_u64(f);
  index.clear();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = get_str(f);
    std::uint64_t r = get_u64(f);
    std::uint64_t c = get_u64(f);
    index.emplace_back(std::move(name), r, c);
  }
  return meta;
}

}  // namespace

CheckpointMeta load_checkpoint(const std::string& path, const std::vector<TensorRef>& tensors) {
  std::unique_ptr<FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("checkpoint: cannot open for read: " + path);
  std::vector<std::tuple<std::string, std::uint64_t, std::uint64_t>> index;
  CheckpointMeta meta = read_header(f.get(), index);
  if (index.size() != tensors.size())
    throw std::runtime_error("checkpoint: tensor count mismatch");
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto& [name, r, c] = index[i];
    if (name != tensors[i].name) throw std::runtime_error("checkpoint: tensor name mismatch: " + name);
    if (r != static_cast<std::uint64_t>(tensors[i].tensor->rows()) ||
        c != static_cast<std::uint64_t>(tensors[i].tensor->cols()))
      throw std::runtime_error("checkpoint: tensor shape mismatch: " + name);
  }
  for (const auto& t : tensors) {
    for (Eigen::Index i = 0; i < t.tensor->rows(); ++i)
      for (Eigen::Index j = 0; j < t.tensor->cols(); ++j) {
        std::uint64_t bits = get_u64(f.get());
        double v;
        std::memcpy(&v, &bits, 8);
        (*t.tensor)(i, j) = v;
      }
  }
  return meta;
}

CheckpointMeta peek_checkpoint(const std::string& path) {
  std::unique_ptr<FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("checkpoint: cannot open for read: " + path);
  std::vector<std::tuple<std::string, std::uint64_t, std::uint64_t>> index;
  return read_header(f.get(), index);
}

// --- gradient check -------------------------------------------------------------

double gradient_check(const std::vector<TensorRef>& tensors,
                      const std::vector<Eigen::MatrixXd>& analytic,
                      const std::function<double()>& loss, int stride, double denom_floor) {
  double worst = 0.0;
  std::size_t gi = 0;
  for (const auto& t : tensors) {
    if (!t.trainable) continue;
    Eigen::MatrixXd& th = *t.tensor;
    const Eigen::MatrixXd& g = analytic[gi];
    long count = th.size();
    for (long k = 0; k < count; k += stride) {
      double* p = th.data() + k;
      double orig = *p;
      double h = 1e-6 * std::max(1.0, std::abs(orig));
      *p = orig + h;
      double up = loss();
      *p = orig - h;
      double down = loss();
      *p = orig;
      double fd = (up - down) / (2.0 * h);
      double ad = g.data()[k];
      double rel = std::abs(ad - fd) / std::max(denom_floor, std::abs(ad) + std::abs(fd));
      if (rel > worst) worst = rel;
    }
    ++gi;
  }
  return worst;
}

}  // namespace trajgraph
