#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <string>

namespace trajgraph {

// Class order of the five inferred models fixes the classification label
// indices and the confusion-matrix layout everywhere.
enum class Model : int {
  ATTM = 0,
  CTRW = 1,
  FBM = 2,
  LW = 3,
  SBM = 4,
  BM = 5,
  OU = 6,
  SEGMENTED = 7,
};

constexpr int kNumClasses = 5;

std::string model_name(Model m);
bool model_from_name(const std::string& name, Model& out);

// Valid anomalous-exponent range per model.
void alpha_range(Model m, double& lo, double& hi);
bool alpha_valid(Model m, double alpha);

struct Trajectory {
  Eigen::MatrixXd positions;  // N x d, uniform grid, r1 at t=0
  double dt = 1.0;
  Model model = Model::BM;
  double alpha = 1.0;
  double noise_amplitude = 0.0;
  std::uint64_t seed = 0;
  // Segmented probe only: the two segment models and the fraction of points
  // drawn from the first.
  Model model_a = Model::FBM;
  Model model_b = Model::ATTM;
  double fraction_a = 1.0;

  int n() const { return static_cast<int>(positions.rows()); }
  int dim() const { return static_cast<int>(positions.cols()); }
};

}  // namespace trajgraph
