#include <trajgraph/featurize.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace trajgraph {

namespace {

constexpr double kEps = 1e-12;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t m = v.size() / 2;
  if (v.size() % 2 == 1) return v[m];
  return 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

Trajectory clip_steps(const Trajectory& traj, double c) {
  if (c <= 0.0) throw std::domain_error("clip_steps: c > 0 required");
  const int n = traj.n(), d = traj.dim();
  if (n < 2) throw std::domain_error("clip_steps: N >= 2 required");
  Eigen::MatrixXd steps(n - 1, d);
  for (int i = 1; i < n; ++i) steps.row(i - 1) = traj.positions.row(i) - traj.positions.row(i - 1);
  std::vector<double> norms(n - 1);
  for (int i = 0; i < n - 1; ++i) norms[i] = steps.row(i).norm();
  double med = median(norms);
  if (med == 0.0) return traj;
  const double thr = c * med;
  bool any = false;
  for (int i = 0; i < n - 1; ++i) {
    if (norms[i] > thr) {
      steps.row(i) *= thr / norms[i];
      any = true;
    }
  }
  if (!any) return traj;
  Trajectory out = traj;
  for (int i = 1; i < n; ++i) out.positions.row(i) = out.positions.row(i - 1) + steps.row(i - 1);
  return out;
}

int feature_count(int d) { return 1 + 9 * d; }

Eigen::MatrixXd node_features(const Trajectory& traj) {
  const int n = traj.n(), d = traj.dim();
  if (n < 2) throw std::domain_error("node_features: N >= 2 required");

  Eigen::MatrixXd centered = traj.positions;
  Eigen::RowVectorXd origin = traj.positions.row(0);
  centered.rowwise() -= origin;

  Eigen::MatrixXd steps(n - 1, d);
  for (int i = 1; i < n; ++i) steps.row(i - 1) = centered.row(i) - centered.row(i - 1);

  // Pooled statistics across all dimensions.
  const long m = static_cast<long>(n - 1) * d;
  double step_mean = steps.sum() / static_cast<double>(m);
  double step_var = (steps.array() - step_mean).square().sum() / static_cast<double>(std::max<long>(m - 1, 1));
  double std_steps = std::sqrt(step_var);

  const long mp = static_cast<long>(n) * d;
  double pos_mean = centered.sum() / static_cast<double>(mp);
  double pos_var = (centered.array() - pos_mean).square().sum() / static_cast<double>(std::max<long>(mp - 1, 1));
  double std_pos = std::sqrt(pos_var);

  double mean_step = 0.0;
  for (int i = 0; i < n - 1; ++i) mean_step += steps.row(i).norm();
  mean_step /= static_cast<double>(n - 1);

  const double denom[3] = {std::max(std_steps, kEps), std::max(std_pos, kEps),
                           std::max(mean_step, kEps)};

  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(n, feature_count(d));
  for (int i = 0; i < n; ++i) f(i, 0) = static_cast<double>(i + 1) / n;
  for (int v = 0; v < 3; ++v)
    f.block(0, 1 + v * d, n, d) = centered / denom[v];
  // Cumulants are computed once on raw steps, then scaled per normalisation.
  Eigen::MatrixXd cum_abs = Eigen::MatrixXd::Zero(n, d);
  Eigen::MatrixXd cum_sq = Eigen::MatrixXd::Zero(n, d);
  for (int i = 1; i < n; ++i) {
    cum_abs.row(i) = cum_abs.row(i - 1) + steps.row(i - 1).cwiseAbs();
    cum_sq.row(i) = cum_sq.row(i - 1) + steps.row(i - 1).cwiseAbs2();
  }
  for (int v = 0; v < 3; ++v) {
    f.block(0, 1 + (3 + v) * d, n, d) = cum_abs / denom[v];
    f.block(0, 1 + (6 + v) * d, n, d) = cum_sq / (denom[v] * denom[v]);
  }
  return f;
}

Eigen::MatrixXd feature_powers(const Eigen::MatrixXd& features, int p_max) {
  if (p_max < 1) throw std::domain_error("feature_powers: p_max >= 1 required");
  const int n = static_cast<int>(features.rows());
  const int nx = static_cast<int>(features.cols());
  Eigen::MatrixXd out(n, nx * p_max);
  out.leftCols(nx) = features;
  for (int p = 2; p <= p_max; ++p)
    out.middleCols((p - 1) * nx, nx) = out.middleCols((p - 2) * nx, nx).cwiseProduct(features);
  return out;
}

}  // namespace trajgraph
