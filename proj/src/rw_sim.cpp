#include <trajgraph/rw_sim.hpp>

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace trajgraph {

std::string model_name(Model m) {
  switch (m) {
    case Model::ATTM: return "attm";
    case Model::CTRW: return "ctrw";
    case Model::FBM: return "fbm";
    case Model::LW: return "lw";
    case Model::SBM: return "sbm";
    case Model::BM: return "bm";
    case Model::OU: return "ou";
    case Model::SEGMENTED: return "segmented";
  }
  return "?";
}

bool model_from_name(const std::string& name, Model& out) {
  static const std::pair<const char*, Model> table[] = {
      {"attm", Model::ATTM}, {"ctrw", Model::CTRW}, {"fbm", Model::FBM},
      {"lw", Model::LW},     {"sbm", Model::SBM},   {"bm", Model::BM},
      {"ou", Model::OU},     {"segmented", Model::SEGMENTED}};
  for (const auto& [n, m] : table) {
    if (name == n) {
      out = m;
      return true;
    }
  }
  return false;
}

void alpha_range(Model m, double& lo, double& hi) {
  switch (m) {
    case Model::ATTM:
    case Model::CTRW: lo = 0.05; hi = 1.0; break;
    case Model::LW: lo = 1.0; hi = 1.95; break;
    case Model::FBM:
    case Model::SBM: lo = 0.05; hi = 1.95; break;
    case Model::BM: lo = 1.0; hi = 1.0; break;
    case Model::OU:
    case Model::SEGMENTED: lo = 0.05; hi = 1.95; break;
  }
}

bool alpha_valid(Model m, double alpha) {
  double lo, hi;
  alpha_range(m, lo, hi);
  return alpha >= lo && alpha <= hi;
}

double fgn_autocovariance(double alpha, long lag) {
  if (!(alpha > 0.0 && alpha < 2.0)) throw std::domain_error("fgn_autocovariance: alpha outside (0,2)");
  if (lag < 0) lag = -lag;
  double k = static_cast<double>(lag);
  return 0.5 * (std::pow(k + 1.0, alpha) - 2.0 * std::pow(k, alpha) +
                std::pow(std::abs(k - 1.0), alpha));
}

std::vector<double> fgn_sample(double alpha, const std::vector<double>& z) {
  const long m = static_cast<long>(z.size());
  std::vector<double> x(m);
  if (m == 0) return x;
  std::vector<double> gamma(m);
  for (long k = 0; k < m; ++k) gamma[k] = fgn_autocovariance(alpha, k);

  // Durbin-Levinson: phi holds the order-n predictor coefficients, v the
  // innovation variance; x[n] = prediction mean + sqrt(v) * z[n].
  std::vector<double> phi(m, 0.0), phi_prev(m, 0.0);
  double v = gamma[0];
  x[0] = std::sqrt(v) * z[0];
  for (long n = 1; n < m; ++n) {
    double acc = gamma[n];
    for (long j = 1; j < n; ++j) acc -= phi_prev[j] * gamma[n - j];
    double phi_nn = acc / v;
    phi[n] = phi_nn;
    for (long j = 1; j < n; ++j) phi[j] = phi_prev[j] - phi_nn * phi_prev[n - j];
    v *= (1.0 - phi_nn * phi_nn);
    if (v < 1e-300) v = 1e-300;
    double mean = 0.0;
    for (long j = 1; j <= n; ++j) mean += phi[j] * x[n - j];
    x[n] = mean + std::sqrt(v) * z[n];
    std::swap(phi, phi_prev);
  }
  return x;
}

namespace {

Eigen::MatrixXd zero_positions(int n, int d) { return Eigen::MatrixXd::Zero(n, d); }

void simulate_bm(Eigen::MatrixXd& pos, double dt, Rng& rng) {
  const int n = static_cast<int>(pos.rows()), d = static_cast<int>(pos.cols());
  const double s = std::sqrt(dt);
  for (int i = 1; i < n; ++i)
    for (int j = 0; j < d; ++j) pos(i, j) = pos(i - 1, j) + s * rng.normal();
}

void simulate_fbm(Eigen::MatrixXd& pos, double alpha, Rng& rng) {
  const int n = static_cast<int>(pos.rows()), d = static_cast<int>(pos.cols());
  std::vector<double> z(n - 1);
  for (int j = 0; j < d; ++j) {
    for (auto& v : z) v = rng.normal();
    std::vector<double> g = fgn_sample(alpha, z);
    double acc = 0.0;
    for (int i = 1; i < n; ++i) {
      acc += g[i - 1];
      pos(i, j) = acc;
    }
  }
}

void simulate_sbm(Eigen::MatrixXd& pos, double alpha, double dt, Rng& rng) {
  // Per-step variance (t_n^a - t_{n-1}^a) integrates K(t) ~ t^(a-1) exactly.
  const int n = static_cast<int>(pos.rows()), d = static_cast<int>(pos.cols());
  for (int i = 1; i < n; ++i) {
    double var = std::pow(i * dt, alpha) - std::pow((i - 1) * dt, alpha);
    double s = std::sqrt(var);
    for (int j = 0; j < d; ++j) pos(i, j) = pos(i - 1, j) + s * rng.normal();
  }
}

double pareto_wait(double alpha, double tau_min, Rng& rng) {
  return tau_min * std::pow(rng.uniform(), -1.0 / alpha);
}

void simulate_ctrw(Eigen::MatrixXd& pos, double alpha, double dt, Rng& rng) {
  // Grid sampling: position at t_i is the walker position after the last
  // renewal event at or before t_i; waiting times are Pareto with density
  // exponent alpha+1, jumps are unit Gaussians.
  const int n = static_cast<int>(pos.rows()), d = static_cast<int>(pos.cols());
  std::vector<double> cur(d, 0.0);
  double t_event = pareto_wait(alpha, dt, rng);
  for (int i = 1; i < n; ++i) {
    double t_grid = i * dt;
    while (t_event <= t_grid) {
      for (int j = 0; j < d; ++j) cur[j] += rng.normal();
      t_event += pareto_wait(alpha, dt, rng);
    }
    for (int j = 0; j < d; ++j) pos(i, j) = cur[j];
  }
}

void simulate_attm(Eigen::MatrixXd& pos, double alpha, double dt, Rng& rng) {
  // Regime I with gamma = 1, sigma = alpha: D has density alpha*D^(alpha-1)
  // on (0,1] (sampled as U^(1/alpha)), dwell time 1/D. A grid step may span
  // several dwells; its variance is the integral of D over the step.
  const int n = static_cast<int>(pos.rows()), d = static_cast<int>(pos.cols());
  double D = std::pow(rng.uniform(), 1.0 / alpha);
  double t_switch = 1.0 / D;
  double t = 0.0;
  for (int i = 1; i < n; ++i) {
    double t_end = i * dt;
    double var = 0.0;
    while (t_switch < t_end) {
      var += D * (t_switch - t);
      t = t_switch;
      D = std::pow(rng.uniform(), 1.0 / alpha);
      t_switch = t + 1.0 / D;
    }
    var += D * (t_end - t);
    t = t_end;
    double s = std::sqrt(var);
    for (int j = 0; j < d; ++j) pos(i, j) = pos(i - 1, j) + s * rng.normal();
  }
}

void unit_direction(std::vector<double>& u, Rng& rng) {
  const int d = static_cast<int>(u.size());
  if (d == 1) {
    u[0] = rng.uniform() < 0.5 ? -1.0 : 1.0;
    return;
  }
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (int j = 0; j < d; ++j) {
      u[j] = rng.normal();
      norm2 += u[j] * u[j];
    }
  } while (norm2 < 1e-24);
  double inv = 1.0 / std::sqrt(norm2);
  for (int j = 0; j < d; ++j) u[j] *= inv;
}

void simulate_lw(Eigen::MatrixXd& pos, double alpha, double dt, Rng& rng) {
  // Constant-speed flights (v = 1), duration Pareto with tail index
  // sigma = 3 - alpha, fresh random direction per flight. Steps inside one
  // flight have equal length v*dt; flight changes are integrated mid-step.
  const int n = static_cast<int>(pos.rows()), d = static_cast<int>(pos.cols());
  const double sigma = 3.0 - alpha;
  std::vector<double> u(d);
  unit_direction(u, rng);
  double t_switch = pareto_wait(sigma, dt, rng);
  double t = 0.0;
  std::vector<double> cur(d, 0.0);
  for (int i = 1; i < n; ++i) {
    double t_end = i * dt;
    while (t_switch < t_end) {
      for (int j = 0; j < d; ++j) cur[j] += u[j] * (t_switch - t);
      t = t_switch;
      unit_direction(u, rng);
      t_switch = t + pareto_wait(sigma, dt, rng);
    }
    for (int j = 0; j < d; ++j) cur[j] += u[j] * (t_end - t);
    t = t_end;
    for (int j = 0; j < d; ++j) pos(i, j) = cur[j];
  }
}

void simulate_ou(Eigen::MatrixXd& pos, Rng& rng) {
  // Euler scheme X_{n+1} = X_n (1 - dt) + sqrt(dt) eps, eps ~ N(0, 0.1 I),
  // dt = 0.01, one Euler step per grid point.
  const int n = static_cast<int>(pos.rows()), d = static_cast<int>(pos.cols());
  const double delta = 0.01;
  const double s = std::sqrt(delta) * std::sqrt(0.1);
  for (int i = 1; i < n; ++i)
    for (int j = 0; j < d; ++j)
      pos(i, j) = pos(i - 1, j) * (1.0 - delta) + s * rng.normal();
}

void simulate_into(Eigen::MatrixXd& pos, Model model, double alpha, double dt, Rng& rng) {
  switch (model) {
    case Model::BM: simulate_bm(pos, dt, rng); break;
    case Model::FBM: simulate_fbm(pos, alpha, rng); break;
    case Model::SBM: simulate_sbm(pos, alpha, dt, rng); break;
    case Model::CTRW: simulate_ctrw(pos, alpha, dt, rng); break;
    case Model::ATTM: simulate_attm(pos, alpha, dt, rng); break;
    case Model::LW: simulate_lw(pos, alpha, dt, rng); break;
    case Model::OU: simulate_ou(pos, rng); break;
    default: throw std::domain_error("simulate: unsupported model");
  }
}

}  // namespace

Trajectory simulate(Model model, double alpha, int n, int d, double dt, std::uint64_t seed) {
  if (n < 2) throw std::domain_error("simulate: N >= 2 required");
  if (d < 1 || d > 3) throw std::domain_error("simulate: d in {1,2,3} required");
  if (model == Model::SEGMENTED) throw std::domain_error("simulate: use simulate_segmented");
  if (!alpha_valid(model, alpha)) throw std::domain_error("simulate: alpha outside model range");
  Trajectory traj;
  traj.positions = zero_positions(n, d);
  traj.dt = dt;
  traj.model = model;
  traj.alpha = alpha;
  traj.seed = seed;
  Rng rng(derive_seed(seed, 0x51e9u, 0));
  simulate_into(traj.positions, model, alpha, dt, rng);
  return traj;
}

Trajectory simulate_segmented(Model model_a, Model model_b, double alpha, int n, int d,
                              double dt, double fraction_a, std::uint64_t seed) {
  if (n < 2) throw std::domain_error("simulate_segmented: N >= 2 required");
  if (fraction_a < 0.0 || fraction_a > 1.0)
    throw std::domain_error("simulate_segmented: fraction outside [0,1]");
  if (!alpha_valid(model_a, alpha) || !alpha_valid(model_b, alpha))
    throw std::domain_error("simulate_segmented: alpha invalid for a segment model");
  Trajectory traj;
  traj.positions = zero_positions(n, d);
  traj.dt = dt;
  traj.model = Model::SEGMENTED;
  traj.model_a = model_a;
  traj.model_b = model_b;
  traj.alpha = alpha;
  traj.fraction_a = fraction_a;
  traj.seed = seed;
  const int na = static_cast<int>(std::floor(fraction_a * n));
  Rng rng(derive_seed(seed, 0x51e9u, 0));
  if (na >= 2) {
    Eigen::MatrixXd part = zero_positions(na, d);
    simulate_into(part, model_a, alpha, dt, rng);
    traj.positions.topRows(na) = part;
  }
  const int nb = n - std::max(na, 1) + 1;
  if (nb >= 2) {
    Eigen::MatrixXd part = zero_positions(nb, d);
    simulate_into(part, model_b, alpha, dt, rng);
    const int base = std::max(na, 1) - 1;  // junction row index
    for (int i = 1; i < nb; ++i)
      traj.positions.row(base + i) = traj.positions.row(base) + part.row(i);
  }
  return traj;
}

double jump_size_std(const Trajectory& traj) {
  const int n = traj.n(), d = traj.dim();
  const long m = static_cast<long>(n - 1) * d;
  if (m < 2) return 0.0;
  double mean = 0.0;
  for (int i = 1; i < n; ++i)
    for (int j = 0; j < d; ++j) mean += traj.positions(i, j) - traj.positions(i - 1, j);
  mean /= static_cast<double>(m);
  double ss = 0.0;
  for (int i = 1; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      double dev = traj.positions(i, j) - traj.positions(i - 1, j) - mean;
      ss += dev * dev;
    }
  return std::sqrt(ss / static_cast<double>(m - 1));
}

Trajectory add_noise(const Trajectory& traj, double amplitude, std::uint64_t seed) {
  if (amplitude < 0.0) throw std::domain_error("add_noise: amplitude >= 0 required");
  Trajectory out = traj;
  out.noise_amplitude = amplitude;
  if (amplitude == 0.0) return out;
  const double s = amplitude * jump_size_std(traj);
  Rng rng(derive_seed(seed, 0xA01Eu, 0));
  for (int i = 0; i < out.n(); ++i)
    for (int j = 0; j < out.dim(); ++j) out.positions(i, j) += s * rng.normal();
  return out;
}

void ensemble_msd(const std::vector<Trajectory>& trajs, std::vector<double>& lags,
                  std::vector<double>& msd, int max_lag) {
  if (trajs.empty()) throw std::domain_error("ensemble_msd: empty ensemble");
  const int n = trajs.front().n(), d = trajs.front().dim();
  const double dt = trajs.front().dt;
  for (const auto& t : trajs)
    if (t.n() != n || t.dim() != d || t.dt != dt)
      throw std::domain_error("ensemble_msd: mixed shapes");
  if (max_lag < 1 || max_lag > n - 1) max_lag = n - 1;
  lags.assign(max_lag, 0.0);
  msd.assign(max_lag, 0.0);
  for (const auto& t : trajs) {
    for (int tau = 1; tau <= max_lag; ++tau) {
      double sq = (t.positions.row(tau) - t.positions.row(0)).squaredNorm();
      msd[tau - 1] += sq;
    }
  }
  const double inv = 1.0 / (static_cast<double>(trajs.size()) * d);
  for (int tau = 1; tau <= max_lag; ++tau) {
    lags[tau - 1] = tau;
    msd[tau - 1] *= inv;
  }
}

double fit_alpha_loglog(const std::vector<double>& lags, const std::vector<double>& msd,
                        double lag_lo, double lag_hi) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  long m = 0;
  for (std::size_t i = 0; i < lags.size(); ++i) {
    if (lags[i] < lag_lo || lags[i] > lag_hi) continue;
    if (msd[i] <= 0.0) throw std::domain_error("fit_alpha_loglog: msd <= 0 in fit window");
    double x = std::log(lags[i]), y = std::log(msd[i]);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
    ++m;
  }
  if (m < 2) throw std::domain_error("fit_alpha_loglog: fewer than 2 points in window");
  double denom = m * sxx - sx * sx;
  if (denom == 0.0) throw std::domain_error("fit_alpha_loglog: degenerate abscissae");
  return (m * sxy - sx * sy) / denom;
}

double hill_tail_index(std::vector<double> samples, double tail_fraction) {
  if (samples.size() < 10) throw std::domain_error("hill_tail_index: too few samples");
  std::sort(samples.begin(), samples.end(), std::greater<double>());
  long k = std::max<long>(1, static_cast<long>(tail_fraction * samples.size()));
  if (k + 1 >= static_cast<long>(samples.size())) k = samples.size() - 2;
  double acc = 0.0;
  for (long i = 0; i < k; ++i) acc += std::log(samples[i] / samples[k]);
  return static_cast<double>(k) / acc;
}

std::vector<double> ctrw_waiting_times(double alpha, int count, double dt, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x3a17u, 0));
  std::vector<double> w(count);
  for (auto& v : w) v = pareto_wait(alpha, dt, rng);
  return w;
}

// --- batch file IO ---------------------------------------------------------

namespace {

bool has_gz_suffix(const std::string& path) {
  return path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

// Minimal line sink/source abstractions over plain and gzip files.
struct LineWriter {
  FILE* f = nullptr;
  gzFile gz = nullptr;
  explicit LineWriter(const std::string& path) {
    if (has_gz_suffix(path)) gz = gzopen(path.c_str(), "wb");
    else f = std::fopen(path.c_str(), "wb");
    if (!f && !gz) throw std::runtime_error("cannot open for write: " + path);
  }
  ~LineWriter() {
    if (f) std::fclose(f);
    if (gz) gzclose(gz);
  }
  void write(const std::string& s) {
    if (f) std::fwrite(s.data(), 1, s.size(), f);
    else gzwrite(gz, s.data(), static_cast<unsigned>(s.size()));
  }
};

struct LineReader {
  FILE* f = nullptr;
  gzFile gz = nullptr;
  long line_no = 0;
  explicit LineReader(const std::string& path) {
    if (has_gz_suffix(path)) gz = gzopen(path.c_str(), "rb");
    else f = std::fopen(path.c_str(), "rb");
    if (!f && !gz) throw std::runtime_error("cannot open for read: " + path);
  }
  ~LineReader() {
    if (f) std::fclose(f);
    if (gz) gzclose(gz);
  }
  bool next(std::string& out) {
    out.clear();
    int c;
    bool any = false;
    for (;;) {
      c = f ? std::fgetc(f) : gzgetc(gz);
      if (c == EOF || c < 0) break;
      any = true;
      if (c == '\n') break;
      out.push_back(static_cast<char>(c));
    }
    if (any) ++line_no;
    return any;
  }
};

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = s.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end && *end == '\0';
}

bool parse_long(const std::string& s, long& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtol(s.c_str(), &end, 10);
  return end && *end == '\0';
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_batch(const std::string& path, const std::vector<Trajectory>& trajs) {
  LineWriter w(path);
  std::string buf;
  for (const auto& t : trajs) {
    std::string head;
    if (t.model == Model::SEGMENTED)
      head = model_name(t.model_a) + std::string("+") + model_name(t.model_b);
    else
      head = model_name(t.model);
    buf = head + "," + format_double(t.alpha) + "," + format_double(t.noise_amplitude) + "," +
          std::to_string(t.n()) + "," + std::to_string(t.dim()) + "," + std::to_string(t.seed);
    if (t.model == Model::SEGMENTED) buf += "," + format_double(t.fraction_a);
    buf += "\n";
    w.write(buf);
    for (int i = 0; i < t.n(); ++i) {
      buf.clear();
      for (int j = 0; j < t.dim(); ++j) {
        if (j) buf += ",";
        buf += format_double(t.positions(i, j));
      }
      buf += "\n";
      w.write(buf);
    }
  }
}

std::vector<Trajectory> read_batch(const std::string& path) {
  LineReader r(path);
  std::vector<Trajectory> out;
  std::string line;
  while (r.next(line)) {
    if (line.empty()) continue;
    long header_line = r.line_no;
    auto fields = split_csv(line);
    if (fields.size() != 6 && fields.size() != 7)
      throw ParseError{header_line, "header needs 6 or 7 comma-separated fields"};
    Trajectory t;
    bool labeled = fields[0] != "?";
    if (labeled) {
      std::string mname = fields[0];
      auto plus = mname.find('+');
      if (plus != std::string::npos) {
        if (!model_from_name(mname.substr(0, plus), t.model_a))
          throw ParseError{header_line, "unknown segment model: " + mname.substr(0, plus)};
        if (!model_from_name(mname.substr(plus + 1), t.model_b))
          throw ParseError{header_line, "unknown segment model: " + mname.substr(plus + 1)};
        mname = "segmented";
      }
      if (!model_from_name(mname, t.model))
        throw ParseError{header_line, "unknown model name: " + fields[0]};
    } else {
      t.model = Model::BM;
    }
    if (!parse_double(fields[1], t.alpha) && fields[1] != "nan")
      throw ParseError{header_line, "bad alpha field: " + fields[1]};
    if (fields[1] == "nan") t.alpha = std::nan("");
    if (!parse_double(fields[2], t.noise_amplitude))
      throw ParseError{header_line, "bad noise field: " + fields[2]};
    long n = 0, d = 0, seed = 0;
    if (!parse_long(fields[3], n) || n < 2)
      throw ParseError{header_line, "bad N field: " + fields[3]};
    if (!parse_long(fields[4], d) || d < 1 || d > 3)
      throw ParseError{header_line, "bad d field: " + fields[4]};
    if (!parse_long(fields[5], seed))
      throw ParseError{header_line, "bad seed field: " + fields[5]};
    if (fields.size() == 7 && !parse_double(fields[6], t.fraction_a))
      throw ParseError{header_line, "bad fraction field: " + fields[6]};
    t.seed = static_cast<std::uint64_t>(seed);
    t.positions.resize(n, d);
    for (long i = 0; i < n; ++i) {
      if (!r.next(line)) throw ParseError{r.line_no + 1, "unexpected end of file inside record"};
      auto cells = split_csv(line);
      if (static_cast<long>(cells.size()) != d)
        throw ParseError{r.line_no, "expected " + std::to_string(d) + " coordinates"};
      for (long j = 0; j < d; ++j) {
        double v;
        if (!parse_double(cells[j], v)) throw ParseError{r.line_no, "bad coordinate: " + cells[j]};
        t.positions(i, j) = v;
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace trajgraph
