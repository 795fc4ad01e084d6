#pragma once
// Node-feature construction. Canonical column order (n_x = 1 + 9d):
//   0                 : t_i = i/N (i 1-based)
//   1      .. d       : positions centered at r1, / pooled step std
//   d+1    .. 2d      : positions centered at r1, / pooled position std
//   2d+1   .. 3d      : positions centered at r1, / mean step norm
//   3d+1   .. 4d      : cumulative sum_{m<i} |dx_m|, / pooled step std
//   4d+1   .. 5d      : same, / pooled position std
//   5d+1   .. 6d      : same, / mean step norm
//   6d+1   .. 7d      : cumulative sum_{m<i} dx_m^2, / (pooled step std)^2
//   7d+1   .. 8d      : same, / (pooled position std)^2
//   8d+1   .. 9d      : same, / (mean step norm)^2
// Node 1 cumulants are zero. Denominators are max(stat, 1e-12).
#include <trajgraph/trajectory.hpp>

namespace trajgraph {

// Displacements whose Euclidean norm exceeds c * median step norm are
// rescaled to the threshold (direction kept); positions rebuilt from r1.
// All-zero steps return the input unchanged.
Trajectory clip_steps(const Trajectory& traj, double c);

int feature_count(int d);  // 1 + 9d

Eigen::MatrixXd node_features(const Trajectory& traj);

// Horizontal concat of element-wise powers 1..p_max.
Eigen::MatrixXd feature_powers(const Eigen::MatrixXd& features, int p_max);

}  // namespace trajgraph
