#include <trajgraph/gnn_model.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace trajgraph {

using nlohmann::json;

void GnnConfig::validate() const {
  if (p_max < 1 || p_max > 3) throw std::domain_error("config: p_max in {1,2,3}");
  if (dim < 1 || dim > 3) throw std::domain_error("config: dim in {1,2,3}");
  if (conv_widths.size() != 3) throw std::domain_error("config: three conv layers required");
  for (const auto& w : conv_widths)
    if (w.size() < 2) throw std::domain_error("config: conv tuple needs input and output");
  if (proj_widths.size() < 2 || alpha_widths.size() < 2 || cls_widths.size() < 2)
    throw std::domain_error("config: mlp tuple needs input and output");
  const int nx = n_x();
  const int o1 = conv_widths[0].back(), o2 = conv_widths[1].back(), o3 = conv_widths[2].back();
  if (conv_widths[0].front() != (p_max + 1) * nx)
    throw std::domain_error("config: conv1 input width != (p_max+1)*n_x");
  if (conv_widths[1].front() != 2 * o1)
    throw std::domain_error("config: conv2 input width != 2*o1");
  if (conv_widths[2].front() != 2 * o2 + 2 * o1)
    throw std::domain_error("config: conv3 input width != 2*o2+2*o1");
  if (proj_widths.front() != 3 * o3)
    throw std::domain_error("config: projector input width != 3*o3");
  if (alpha_widths.front() != latent_dim() || cls_widths.front() != latent_dim())
    throw std::domain_error("config: head input width != latent dim");
  if (alpha_widths.back() != 1) throw std::domain_error("config: alpha head output width != 1");
  if (cls_widths.back() != kNumClasses)
    throw std::domain_error("config: classifier output width != 5");
  if (k < 1) throw std::domain_error("config: k >= 1");
}

std::string GnnConfig::feature_layout() const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "tg-feat-v1:d%d:p%d:k%d:%s:clip%g", dim, p_max, k,
                wiring == Wiring::CausalGeometric ? "causal" : "regular", clip_c);
  return buf;
}

std::string GnnConfig::to_json() const {
  json j;
  j["p_max"] = p_max;
  j["dim"] = dim;
  j["conv"] = conv_widths;
  j["proj"] = proj_widths;
  j["alpha"] = alpha_widths;
  j["cls"] = cls_widths;
  j["k"] = k;
  j["wiring"] = wiring == Wiring::CausalGeometric ? "causal" : "regular";
  j["clip_c"] = clip_c;
  j["bn_hidden"] = bn_hidden;
  return j.dump();
}

GnnConfig GnnConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  GnnConfig c;
  c.p_max = j.at("p_max").get<int>();
  c.dim = j.at("dim").get<int>();
  c.conv_widths = j.at("conv").get<std::vector<std::vector<int>>>();
  c.proj_widths = j.at("proj").get<std::vector<int>>();
  c.alpha_widths = j.at("alpha").get<std::vector<int>>();
  c.cls_widths = j.at("cls").get<std::vector<int>>();
  c.k = j.at("k").get<int>();
  c.wiring = j.at("wiring").get<std::string>() == "regular" ? Wiring::RandomRegular
                                                            : Wiring::CausalGeometric;
  c.clip_c = j.at("clip_c").get<double>();
  c.bn_hidden = j.at("bn_hidden").get<bool>();
  c.validate();
  return c;
}

GnnConfig GnnConfig::preset(Preset p) {
  GnnConfig c;
  switch (p) {
    case Preset::W1588:
      c.p_max = 1;
      c.conv_widths = {{56, 8}, {16, 8}, {32, 8}};
      c.proj_widths = {24, 6};
      c.alpha_widths = {6, 16, 1};
      c.cls_widths = {6, 5};
      break;
    case Preset::W6420:
      c.p_max = 1;
      c.conv_widths = {{56, 16, 16}, {32, 16, 16}, {64, 16, 16}};
      c.proj_widths = {48, 8};
      c.alpha_widths = {8, 64, 16, 1};
      c.cls_widths = {8, 16, 5};
      break;
    case Preset::W36660:
      c.p_max = 2;
      c.conv_widths = {{84, 32, 32, 32}, {64, 32, 32, 32}, {128, 32, 32, 32}};
      c.proj_widths = {96, 64, 16};
      c.alpha_widths = {16, 128, 64, 16, 1};
      c.cls_widths = {16, 16, 16, 5};
      break;
    case Preset::W185879:
      c.p_max = 2;
      c.conv_widths = {{84, 128, 64, 64}, {128, 128, 64, 64}, {256, 128, 64, 64}};
      c.proj_widths = {192, 128, 64, 32};
      c.alpha_widths = {32, 128, 128, 64, 16, 1};
      c.cls_widths = {32, 64, 32, 5};
      break;
    case Preset::W871596:
      c.p_max = 3;
      c.conv_widths = {{112, 256, 128, 128, 128},
                       {256, 256, 128, 128, 128},
                       {512, 256, 128, 128, 128}};
      c.proj_widths = {384, 512, 256, 128, 64};
      c.alpha_widths = {64, 128, 128, 128, 64, 1};
      c.cls_widths = {64, 128, 64, 32, 5};
      break;
  }
  c.validate();
  return c;
}

bool GnnConfig::preset_by_name(const std::string& name, Preset& out) {
  if (name == "1588") out = Preset::W1588;
  else if (name == "6420") out = Preset::W6420;
  else if (name == "36660") out = Preset::W36660;
  else if (name == "185879") out = Preset::W185879;
  else if (name == "871596") out = Preset::W871596;
  else return false;
  return true;
}

namespace {

long mlp_count(const std::vector<int>& w, bool bn_hidden) {
  long c = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) c += static_cast<long>(w[l]) * w[l + 1] + w[l + 1];
  if (bn_hidden)
    for (std::size_t l = 1; l + 1 < w.size(); ++l) c += 2L * w[l];
  return c;
}

}  // namespace

long preset_param_count(const GnnConfig& cfg) {
  // Entry batch norms: gamma+beta over n_x raw and p_max*n_x powered columns.
  long c = 2L * (1 + cfg.p_max) * cfg.n_x();
  for (const auto& w : cfg.conv_widths) c += mlp_count(w, cfg.bn_hidden);
  c += mlp_count(cfg.proj_widths, cfg.bn_hidden);
  c += mlp_count(cfg.alpha_widths, false);
  c += mlp_count(cfg.cls_widths, false);
  return c;
}

AdjCsr adjacency_from_edges(int n, const std::vector<Edge>& edges, int row_offset) {
  AdjCsr adj;
  adj.off.assign(n + 1, 0);
  for (const auto& e : edges) adj.off[e.dst]++;  // counts shifted by one slot
  for (int i = 0; i < n; ++i) adj.off[i + 1] += adj.off[i];
  adj.src.resize(edges.size());
  std::vector<int> cursor(n, 0);
  std::vector<int> start(n);
  for (int i = 0; i < n; ++i) start[i] = adj.off[i];
  for (const auto& e : edges) {
    int d = e.dst - 1;
    adj.src[start[d] + cursor[d]] = row_offset + e.src - 1;
    cursor[d]++;
  }
  // Canonical (sorted) neighbor order: aggregation results are then
  // bit-identical no matter how the edge list was ordered.
  for (int i = 0; i < n; ++i)
    std::sort(adj.src.begin() + adj.off[i], adj.src.begin() + adj.off[i + 1]);
  return adj;
}

GraphBatch build_batch(const std::vector<Trajectory>& noisy, const GnnConfig& cfg) {
  GraphBatch b;
  const int nx = cfg.n_x();
  long total = 0;
  for (const auto& t : noisy) total += t.n();
  b.feats_raw.resize(total, nx);
  b.feats_pow.resize(total, static_cast<long>(cfg.p_max) * nx);
  b.seg_off.assign(1, 0);
  b.adj.off.assign(total + 1, 0);
  b.alpha_label.resize(noisy.size());
  long row = 0;
  for (std::size_t g = 0; g < noisy.size(); ++g) {
    const Trajectory& t = noisy[g];
    if (t.dim() != cfg.dim) throw std::domain_error("build_batch: trajectory dim != config dim");
    Trajectory clipped = clip_steps(t, cfg.clip_c);
    Eigen::MatrixXd f = node_features(clipped);
    b.feats_raw.middleRows(row, t.n()) = f;
    b.feats_pow.middleRows(row, t.n()) = feature_powers(f, cfg.p_max);
    std::vector<Edge> edges = cfg.wiring == Wiring::CausalGeometric
                                  ? build_causal_geometric(t.n(), cfg.k)
                                  : build_random_regular(t.n(), cfg.k, t.seed);
    AdjCsr local = adjacency_from_edges(t.n(), edges, static_cast<int>(row));
    for (int i = 0; i < t.n(); ++i) {
      b.adj.off[row + i + 1] = static_cast<int>(b.adj.src.size()) + local.off[i + 1];
    }
    b.adj.src.insert(b.adj.src.end(), local.src.begin(), local.src.end());
    row += t.n();
    b.seg_off.push_back(static_cast<int>(row));
    int label = -1;
    if (t.model == Model::ATTM || t.model == Model::CTRW || t.model == Model::FBM ||
        t.model == Model::LW || t.model == Model::SBM)
      label = static_cast<int>(t.model);
    b.class_label.push_back(label);
    b.alpha_label(g) = t.alpha;
    b.lengths.push_back(t.n());
    b.noise.push_back(t.noise_amplitude);
    b.models.push_back(t.model);
    b.fraction_a.push_back(t.model == Model::SEGMENTED ? t.fraction_a : 1.0);
  }
  return b;
}

GnnModel::GnnModel(const GnnConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  for (int k = 0; k < 2; ++k) {
    const Eigen::Index f = (k == 0 ? 1 : cfg_.p_max) * static_cast<Eigen::Index>(cfg_.n_x());
    in_gamma_[k] = Eigen::MatrixXd::Ones(1, f);
    in_beta_[k] = Eigen::MatrixXd::Zero(1, f);
    in_stats_[k].running_mean = Eigen::MatrixXd::Zero(1, f);
    in_stats_[k].running_var = Eigen::MatrixXd::Ones(1, f);
  }
  Rng rng(derive_seed(init_seed, 0x9177u, 0));
  for (int c = 0; c < 3; ++c) conv_[c].init(cfg_.conv_widths[c], cfg_.bn_hidden, rng);
  proj_.init(cfg_.proj_widths, cfg_.bn_hidden, rng);
  alpha_.init(cfg_.alpha_widths, false, rng);
  cls_.init(cfg_.cls_widths, false, rng);
}

long GnnModel::param_count() const {
  return 2L * (in_gamma_[0].cols() + in_gamma_[1].cols()) +  //
         conv_[0].param_count() + conv_[1].param_count() + conv_[2].param_count() +
         proj_.param_count() + alpha_.param_count() + cls_.param_count();
}

std::vector<TensorRef> GnnModel::tensors() {
  std::vector<TensorRef> out;
  for (int k = 0; k < 2; ++k) {
    std::string p = k == 0 ? "input.raw" : "input.pow";
    out.push_back({p + ".gamma", &in_gamma_[k], true});
    out.push_back({p + ".beta", &in_beta_[k], true});
    out.push_back({p + ".rmean", &in_stats_[k].running_mean, false});
    out.push_back({p + ".rvar", &in_stats_[k].running_var, false});
  }
  for (int c = 0; c < 3; ++c) {
    auto v = mlp_tensors(conv_[c], "conv" + std::to_string(c + 1));
    out.insert(out.end(), v.begin(), v.end());
  }
  for (auto& v : mlp_tensors(proj_, "proj")) out.push_back(v);
  for (auto& v : mlp_tensors(alpha_, "alpha")) out.push_back(v);
  for (auto& v : mlp_tensors(cls_, "cls")) out.push_back(v);
  return out;
}

int GnnModel::input_bn(Tape& tape, int x, int which, bool training, bool update_stats,
                       std::vector<std::pair<Eigen::MatrixXd*, int>>* bound) {
  int g = tape.leaf(in_gamma_[which], true);
  int b = tape.leaf(in_beta_[which], true);
  if (bound) {
    bound->push_back({&in_gamma_[which], g});
    bound->push_back({&in_beta_[which], b});
  }
  return tape.batchnorm(x, g, b, &in_stats_[which], training, update_stats);
}

BatchOutput GnnModel::forward(Tape& tape, const GraphBatch& batch, bool training,
                              bool update_stats,
                              std::vector<std::pair<Eigen::MatrixXd*, int>>* bound) {
  int x_raw = input_bn(tape, tape.leaf(batch.feats_raw, false), 0, training, update_stats, bound);
  int x_pow = input_bn(tape, tape.leaf(batch.feats_pow, false), 1, training, update_stats, bound);

  int c1_in = tape.concat_cols({tape.edge_mean(x_pow, batch.adj), tape.edge_max(x_raw, batch.adj)});
  int u1 = conv_[0].forward(tape, c1_in, training, update_stats, bound);

  int c2_in = tape.concat_cols({tape.edge_mean(u1, batch.adj), tape.edge_max(u1, batch.adj)});
  int u2 = conv_[1].forward(tape, c2_in, training, update_stats, bound);

  int c3_in = tape.concat_cols({tape.edge_mean(u2, batch.adj), tape.edge_max(u2, batch.adj),
                                tape.edge_mean(u1, batch.adj), tape.edge_max(u1, batch.adj)});
  int u3 = conv_[2].forward(tape, c3_in, training, update_stats, bound);

  int pooled = tape.concat_cols({tape.segment_mean(u3, batch.seg_off),
                                 tape.segment_max(u3, batch.seg_off),
                                 tape.segment_sum(u3, batch.seg_off)});
  int latent = proj_.forward(tape, pooled, training, update_stats, bound);

  BatchOutput out;
  out.latent_node = latent;
  out.alpha_node = alpha_.forward(tape, latent, training, update_stats, bound);
  out.logits_node = cls_.forward(tape, latent, training, update_stats, bound);
  return out;
}

Prediction GnnModel::predict(const Trajectory& noisy) const {
  GraphBatch batch = build_batch({noisy}, cfg_);
  Tape tape;
  BatchOutput o = const_cast<GnnModel*>(this)->forward(tape, batch, false, false, nullptr);
  Prediction p;
  p.alpha_hat = tape.val(o.alpha_node)(0, 0);
  p.class_probs = softmax_rows(tape.val(o.logits_node)).row(0).transpose();
  p.latent = tape.val(o.latent_node).row(0).transpose();
  return p;
}

void GnnModel::save(const std::string& path) const {
  auto* self = const_cast<GnnModel*>(this);
  save_checkpoint(path, cfg_.feature_layout(), cfg_.to_json(), self->tensors());
}

void GnnModel::load(const std::string& path) {
  CheckpointMeta meta = peek_checkpoint(path);
  if (meta.config_json != cfg_.to_json())
    throw std::runtime_error("checkpoint: config mismatch (file " + meta.config_json +
                             " vs model " + cfg_.to_json() + ")");
  load_checkpoint(path, tensors());
}

int conv_self_mean_max(Tape& tape, int x, const AdjCsr& adj, Mlp& mlp, bool training) {
  int in = tape.concat_cols({x, tape.edge_mean(x, adj), tape.edge_max(x, adj)});
  return mlp.forward(tape, in, training, false, nullptr);
}

}  // namespace trajgraph
