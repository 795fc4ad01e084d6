#pragma once
// Trajectory generators for the five anomalous-diffusion models plus the
// Brownian and Ornstein-Uhlenbeck baselines, the localisation-noise model,
// and the statistical oracles (ensemble MSD, log-log exponent fit, Hill
// tail estimator) the tests check them against.
//
// Conventions shared by every generator:
//   - r1 = 0 at t = 0, positions on the uniform grid t_i = (i-1)*dt;
//   - unit length scales (the feature normalisation divides them out);
//   - one RNG stream per trajectory, derived from the seed field.
#include <trajgraph/rng.hpp>
#include <trajgraph/trajectory.hpp>

#include <cstdio>
#include <string>
#include <vector>

namespace trajgraph {

// Unit-variance fractional-Gaussian-noise autocovariance
//   gamma(k) = 0.5 (|k+1|^a - 2|k|^a + |k-1|^a).
// Throws std::domain_error outside 0 < alpha < 2.
double fgn_autocovariance(double alpha, long lag);

// Exact fGn sample: applies the (unique) lower-triangular Cholesky transform
// of the Toeplitz covariance to z via the Durbin-Levinson recursion, O(m^2)
// time and O(m) memory. Tests cross-check against a dense LLT factor.
std::vector<double> fgn_sample(double alpha, const std::vector<double>& z);

Trajectory simulate(Model model, double alpha, int n, int d, double dt, std::uint64_t seed);

// First floor(fraction_a*n) points from model_a, remainder continues from the
// last position under model_b; one sequential RNG stream, so fraction_a=1 and
// fraction_a=0 reproduce the pure simulations bit for bit.
Trajectory simulate_segmented(Model model_a, Model model_b, double alpha, int n, int d,
                              double dt, double fraction_a, std::uint64_t seed);

// Pooled sample standard deviation of per-dimension increments (mean
// subtracted, denominator M-1). This is the jump-size scale the noise
// amplitude multiplies and featurize's first normalisation.
double jump_size_std(const Trajectory& traj);

// Adds i.i.d. Gaussian noise, std = amplitude * jump_size_std(traj), same on
// every dimension. amplitude = 0 returns the input bitwise.
Trajectory add_noise(const Trajectory& traj, double amplitude, std::uint64_t seed);

// --- statistical oracles -------------------------------------------------

// From-origin ensemble MSD: msd(tau) = mean over trajectories of
// |r_{1+tau} - r_1|^2 / d, for tau = 1..max_lag (default n-1).
// All trajectories must share n, d and dt. Throws on an empty ensemble.
void ensemble_msd(const std::vector<Trajectory>& trajs, std::vector<double>& lags,
                  std::vector<double>& msd, int max_lag = -1);

// Least-squares slope of log(msd) vs log(lag) over lag in [lag_lo, lag_hi].
// Throws std::domain_error when any included msd value is zero.
double fit_alpha_loglog(const std::vector<double>& lags, const std::vector<double>& msd,
                        double lag_lo, double lag_hi);

// Hill estimator of the survival-tail index over the top tail_fraction order
// statistics; density exponent = index + 1.
double hill_tail_index(std::vector<double> samples, double tail_fraction);

// CTRW waiting-time draws, exposed for the tail-exponent oracle.
std::vector<double> ctrw_waiting_times(double alpha, int count, double dt, std::uint64_t seed);

// --- batch file IO --------------------------------------------------------
// Record format: header `model,alpha,noise,N,d,seed[,fraction_a]` then N
// lines of d comma-separated floats at round-trip precision. The optional
// 7th header field appears only for segmented trajectories (model printed as
// "name_a+name_b"). Plain or gzip, decided by filename suffix ".gz".
// Unlabeled inputs may carry model "?" and alpha "nan".

// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double v);

void write_batch(const std::string& path, const std::vector<Trajectory>& trajs);

struct ParseError {
  long line;  // 1-based line number of the offending record
  std::string message;
};

// Throws ParseError on malformed input.
std::vector<Trajectory> read_batch(const std::string& path);

}  // namespace trajgraph
