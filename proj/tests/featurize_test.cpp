#include <doctest.h>

#include <trajgraph/featurize.hpp>
#include <trajgraph/rw_sim.hpp>

#include <cmath>

using namespace trajgraph;

namespace {

Trajectory from_1d(std::initializer_list<double> vals) {
  Trajectory t;
  t.positions.resize(static_cast<long>(vals.size()), 1);
  long i = 0;
  for (double v : vals) t.positions(i++, 0) = v;
  return t;
}

// Positions rounded to a coarse dyadic grid so that adding a dyadic offset is
// exact in floating point (no rounding anywhere in pos + c).
Trajectory dyadic_bm(int n, int d, std::uint64_t seed) {
  Trajectory t = simulate(Model::BM, 1.0, n, d, 1.0, seed);
  t.positions = (t.positions * 1048576.0).array().round() / 1048576.0;
  return t;
}

}  // namespace

TEST_CASE("feature count law") {
  CHECK(feature_count(1) == 10);
  CHECK(feature_count(2) == 19);
  CHECK(feature_count(3) == 28);
  Trajectory t = simulate(Model::BM, 1.0, 17, 3, 1.0, 2);
  CHECK(node_features(t).cols() == 28);
  CHECK(node_features(t).rows() == 17);
}

TEST_CASE("time column and first-node cumulants") {
  Trajectory t = simulate(Model::FBM, 0.7, 25, 2, 1.0, 3);
  Eigen::MatrixXd f = node_features(t);
  const int n = 25, d = 2;
  for (int i = 0; i < n; ++i) CHECK(f(i, 0) == doctest::Approx((i + 1.0) / n).epsilon(1e-15));
  // Node 1: centered positions and all cumulative columns are exactly zero.
  for (int c = 1; c < feature_count(d); ++c) CHECK(f(0, c) == 0.0);
}

TEST_CASE("constant trajectory features stay finite and zero") {
  Trajectory t;
  t.positions = Eigen::MatrixXd::Constant(10, 3, 5.0);
  Eigen::MatrixXd f = node_features(t);
  CHECK(f.allFinite());
  for (int i = 0; i < 10; ++i) {
    CHECK(f(i, 0) == doctest::Approx((i + 1.0) / 10));
    for (int c = 1; c < 28; ++c) CHECK(f(i, c) == 0.0);
  }
}

TEST_CASE("zero step-std path on a uniform 1D ramp") {
  // Steps (1,1,1): their ddof-1 std is 0, so the step-std normalisation hits
  // the epsilon guard; the other two denominators are regular.
  Trajectory t = from_1d({0, 1, 2, 3});
  Eigen::MatrixXd f = node_features(t);
  REQUIRE(f.cols() == 10);
  CHECK(f.allFinite());
  // Variant A (pooled step std -> eps): huge but finite centered positions.
  CHECK(f(3, 1) == doctest::Approx(3.0 / 1e-12));
  // Variant B: pooled position std of (0,1,2,3) with ddof 1.
  double std_pos = std::sqrt((2.25 + 0.25 + 0.25 + 2.25) / 3.0);
  CHECK(f(2, 2) == doctest::Approx(2.0 / std_pos).epsilon(1e-12));
  // Variant C: mean step norm is 1, positions pass through.
  CHECK(f(1, 3) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f(3, 3) == doctest::Approx(3.0).epsilon(1e-12));
  // Cumulative |step| and step^2 under variant C: 0,1,2,3.
  for (int i = 0; i < 4; ++i) {
    CHECK(f(i, 6) == doctest::Approx(static_cast<double>(i)).epsilon(1e-12));
    CHECK(f(i, 9) == doctest::Approx(static_cast<double>(i)).epsilon(1e-12));
  }
}

TEST_CASE("translation leaves features bit-identical") {
  // With an exactly-representable shift the centering subtraction cancels the
  // offset without rounding, so every column matches bit for bit; the
  // step-derived 6d block is the load-bearing contract.
  Trajectory t = dyadic_bm(40, 3, 4);
  Trajectory shifted = t;
  shifted.positions.array() += 4096.0;
  Eigen::MatrixXd f0 = node_features(t);
  Eigen::MatrixXd f1 = node_features(shifted);
  const int d = 3;
  CHECK(f0.rightCols(6 * d) == f1.rightCols(6 * d));
  CHECK(f0 == f1);
}

TEST_CASE("scaling the trajectory does not change features") {
  Trajectory t = simulate(Model::FBM, 1.2, 30, 2, 1.0, 5);
  SUBCASE("power-of-two scale: exact") {
    Trajectory s = t;
    s.positions *= 2.0;
    CHECK(node_features(s) == node_features(t));
  }
  SUBCASE("generic scale: to rounding") {
    Trajectory s = t;
    s.positions *= 3.0;
    Eigen::MatrixXd a = node_features(s), b = node_features(t);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12 * b.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("cumulative columns are non-decreasing") {
  Trajectory t = simulate(Model::LW, 1.3, 200, 3, 1.0, 6);
  Eigen::MatrixXd f = node_features(t);
  const int d = 3;
  for (int c = 1 + 3 * d; c < 1 + 9 * d; ++c)
    for (int i = 1; i < t.n(); ++i) CHECK(f(i, c) >= f(i - 1, c));
}

TEST_CASE("step clipping") {
  SUBCASE("known 1D example") {
    Trajectory t = from_1d({0, 1, 2, 102, 103});  // steps 1,1,100,1
    Trajectory c = clip_steps(t, 10.0);
    // Median step 1, threshold 10: the outlier shrinks to 10.
    Eigen::VectorXd want(5);
    want << 0, 1, 2, 12, 13;
    CHECK(c.positions.col(0) == want);
  }
  SUBCASE("gaussian steps pass through untouched") {
    Trajectory t = simulate(Model::BM, 1.0, 1000, 3, 1.0, 8);
    Trajectory c = clip_steps(t, 10.0);
    CHECK(c.positions == t.positions);
  }
  SUBCASE("heavy-tail steps are capped at c times the median") {
    // Unit steps with occasional huge excursions; median survives clipping.
    Trajectory t;
    t.positions.resize(101, 1);
    t.positions(0, 0) = 0.0;
    for (int i = 1; i <= 100; ++i) {
      double step = (i % 25 == 0) ? 300.0 : ((i % 2 == 0) ? 1.0 : -1.0);
      t.positions(i, 0) = t.positions(i - 1, 0) + step;
    }
    Trajectory c = clip_steps(t, 10.0);
    CHECK(c.positions != t.positions);  // the outliers really were clipped
    std::vector<double> norms;
    for (int i = 1; i < c.n(); ++i)
      norms.push_back((c.positions.row(i) - c.positions.row(i - 1)).norm());
    std::vector<double> sorted = norms;
    std::sort(sorted.begin(), sorted.end());
    double med = 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
    CHECK(med == doctest::Approx(1.0));
    for (double v : norms) CHECK(v <= 10.0 * med * (1 + 1e-12));
  }
  SUBCASE("all-zero steps return the input") {
    Trajectory t;
    t.positions = Eigen::MatrixXd::Constant(5, 2, 3.0);
    CHECK(clip_steps(t, 10.0).positions == t.positions);
  }
  SUBCASE("direction is preserved") {
    Trajectory t;
    t.positions.resize(4, 2);
    t.positions << 0, 0, 1, 1, 2, 2, 102, 102;
    Trajectory c = clip_steps(t, 10.0);
    Eigen::RowVector2d last = c.positions.row(3) - c.positions.row(2);
    CHECK(last(0) == doctest::Approx(last(1)));       // still along (1,1)
    CHECK(last(0) > 0);
  }
  CHECK_THROWS_AS(clip_steps(from_1d({0, 1}), 0.0), std::domain_error);
}

TEST_CASE("feature powers concatenate element-wise powers") {
  Eigen::MatrixXd f(2, 3);
  f << 1, -2, 3, -1, 0.5, 2;
  CHECK(feature_powers(f, 1) == f);
  Eigen::MatrixXd p2 = feature_powers(f, 2);
  REQUIRE(p2.cols() == 6);
  CHECK(p2.leftCols(3) == f);
  CHECK(p2(0, 4) == doctest::Approx(4.0));
  CHECK(p2(1, 3) == doctest::Approx(1.0));
  Eigen::MatrixXd p3 = feature_powers(f, 3);
  REQUIRE(p3.cols() == 9);
  CHECK(p3(0, 7) == doctest::Approx(-8.0));
  CHECK(p3(1, 8) == doctest::Approx(8.0));

  Trajectory t = simulate(Model::BM, 1.0, 10, 3, 1.0, 10);
  CHECK(feature_powers(node_features(t), 3).cols() == 84);
  CHECK_THROWS_AS(feature_powers(f, 0), std::domain_error);
}

TEST_CASE("short trajectories are rejected") {
  Trajectory t;
  t.positions = Eigen::MatrixXd::Zero(1, 2);
  CHECK_THROWS_AS(node_features(t), std::domain_error);
  CHECK_THROWS_AS(clip_steps(t, 10.0), std::domain_error);
}
