#include "oufield/sde_oracle.hpp"

#include <cmath>
#include <string>

#include "oufield/error.hpp"

namespace oufield {

namespace {

constexpr double kBlowUp = 1e12;
constexpr Eigen::Index kDenseStepLimit = 256;

// -A y product, dense for small systems where it is markedly faster.
class DriftMatrix {
 public:
  explicit DriftMatrix(const SparseOperator& a) : sparse_(&a.matrix()) {
    if (static_cast<Eigen::Index>(a.n()) <= kDenseStepLimit) {
      dense_ = a.dense();
      use_dense_ = true;
    }
  }
  void apply(const Eigen::VectorXd& y, Eigen::VectorXd& out) const {
    if (use_dense_) out.noalias() = dense_ * y;
    else out.noalias() = (*sparse_) * y;
  }

 private:
  const SparseMatrix* sparse_;
  Eigen::MatrixXd dense_;
  bool use_dense_ = false;
};

long step_count(const SimConfig& cfg) {
  return std::max(1L, std::lround(cfg.horizon / cfg.dt));
}

void check_blow_up(const Eigen::VectorXd& y, long step) {
  const double norm = y.norm();
  if (!(norm <= kBlowUp)) {
    throw NumericalError("euler-maruyama: state norm exceeded 1e12 at step " + std::to_string(step));
  }
}

// Advances one OU step in place. `noise` is scratch space.
struct OuStepper {
  const OUSystem& sys;
  DriftMatrix drift;
  double dt;
  double noise_scale;
  Eigen::VectorXd ay;
  Eigen::VectorXd noise;

  OuStepper(const OUSystem& s, double step)
      : sys(s),
        drift(s.a),
        dt(step),
        noise_scale(std::sqrt(s.sigma2 * step)),
        ay(static_cast<Eigen::Index>(s.n())),
        noise(static_cast<Eigen::Index>(s.n())) {}

  void step(Eigen::VectorXd& y, const Eigen::VectorXd& forcing, Rng& rng) {
    drift.apply(y, ay);
    fill_standard_normal(rng, noise);
    if (sys.b) {
      y += (forcing - ay) * dt + noise_scale * ((*sys.b) * noise);
    } else {
      y += (forcing - ay) * dt + noise_scale * noise;
    }
  }
};

Eigen::VectorXd initial_state(const OUSystem& sys, const SimConfig& cfg, OuStepper& stepper, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(sys.n());
  switch (cfg.init) {
    case InitKind::Zero: return Eigen::VectorXd::Zero(n);
    case InitKind::Given:
      if (cfg.y0.size() != n) throw ConfigError("simulate: y0 has the wrong length");
      return cfg.y0;
    case InitKind::Stationary: {
      Eigen::VectorXd y = sparse_solve(sys.a, sys.m);
      const long steps = std::max(1L, std::lround(cfg.spin_up / cfg.dt));
      for (long k = 0; k < steps; ++k) {
        stepper.step(y, sys.m, rng);
        check_blow_up(y, -steps + k);
      }
      return y;
    }
  }
  throw ConfigError("simulate: unknown initial condition");
}

}  // namespace

void SimConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("simulate: dt must be > 0");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("simulate: horizon must be > 0");
  if (dt > horizon) throw ConfigError("simulate: dt must be <= horizon");
  if (n_paths < 1) throw ConfigError("simulate: n_paths must be >= 1");
  if (thin < 1) throw ConfigError("simulate: thin must be >= 1");
  if (init == InitKind::Stationary && !(spin_up > 0.0)) {
    throw ConfigError("simulate: a stationary start needs spin_up > 0");
  }
}

void check_em_stability(const SparseOperator& a, double dt) {
  const double h = dt * a.max_diagonal();
  if (!(h < 0.5)) {
    throw StabilityError("euler-maruyama: dt * max_diag(A) = " + std::to_string(h) + " must be < 0.5");
  }
}

Path simulate_path(const OUSystem& sys, const SimConfig& cfg, Rng& rng) {
  cfg.validate();
  sys.validate(true);
  check_em_stability(sys.a, cfg.dt);
  OuStepper stepper(sys, cfg.dt);
  Eigen::VectorXd y = initial_state(sys, cfg, stepper, rng);
  const long steps = step_count(cfg);
  const long stored = steps / cfg.thin + 1 + (steps % cfg.thin ? 1 : 0);
  Path path;
  path.states.resize(stored, y.size());
  path.times.reserve(static_cast<std::size_t>(stored));
  Eigen::Index row = 0;
  path.states.row(row++) = y.transpose();
  path.times.push_back(0.0);
  for (long k = 1; k <= steps; ++k) {
    stepper.step(y, sys.m, rng);
    check_blow_up(y, k);
    if (k % cfg.thin == 0 || k == steps) {
      path.states.row(row++) = y.transpose();
      path.times.push_back(static_cast<double>(k) * cfg.dt);
    }
  }
  path.states.conservativeResize(row, Eigen::NoChange);
  return path;
}

Eigen::VectorXd time_average_path(const Path& path) {
  if (path.states.rows() == 0) throw DomainError("time average: empty path");
  if (path.states.rows() == 1) return path.states.row(0).transpose();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(path.states.cols());
  for (Eigen::Index r = 1; r < path.states.rows(); ++r) {
    const double h = path.times[static_cast<std::size_t>(r)] - path.times[static_cast<std::size_t>(r - 1)];
    acc += 0.5 * h * (path.states.row(r - 1) + path.states.row(r)).transpose();
  }
  return acc / (path.times.back() - path.times.front());
}

namespace {

// Deterministic SO2 trajectory at every step 0..steps.
std::vector<Eigen::VectorXd> so2_trajectory(const SulfateModel& model, double dt, long steps,
                                            const Eigen::VectorXd* z0) {
  const SparseOperator& az = model.a_z();
  check_em_stability(az, dt);
  DriftMatrix drift(az);
  Eigen::VectorXd z = z0 ? *z0 : model.so2_steady_state();
  if (static_cast<std::size_t>(z.size()) != model.n()) throw ConfigError("simulate: z0 has the wrong length");
  const Eigen::VectorXd source = model.theta().beta * model.emissions();
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(steps + 1));
  out.push_back(z);
  Eigen::VectorXd az_z(z.size());
  for (long k = 1; k <= steps; ++k) {
    drift.apply(z, az_z);
    z += (source - az_z) * dt;
    check_blow_up(z, k);
    out.push_back(z);
  }
  return out;
}

OUSystem so4_system(const SulfateModel& model, const Eigen::VectorXd& forcing) {
  OUSystem sys{model.a_y(), forcing, std::nullopt, model.theta().sigma2};
  return sys;
}

}  // namespace

CoupledPath simulate_coupled(const SulfateModel& model, const SimConfig& cfg, Rng& rng,
                             const Eigen::VectorXd* z0) {
  cfg.validate();
  const long steps = step_count(cfg);
  const auto z = so2_trajectory(model, cfg.dt, steps, z0);
  const double eta = model.theta().eta;
  OUSystem sys = so4_system(model, eta * z.front());
  check_em_stability(sys.a, cfg.dt);
  OuStepper stepper(sys, cfg.dt);
  Eigen::VectorXd y = initial_state(sys, cfg, stepper, rng);

  CoupledPath out;
  const long stored = steps / cfg.thin + 1 + (steps % cfg.thin ? 1 : 0);
  out.so4.states.resize(stored, y.size());
  out.so2.states.resize(stored, y.size());
  Eigen::Index row = 0;
  auto store = [&](long k, const Eigen::VectorXd& zk) {
    out.so4.states.row(row) = y.transpose();
    out.so2.states.row(row) = zk.transpose();
    ++row;
    out.so4.times.push_back(static_cast<double>(k) * cfg.dt);
    out.so2.times.push_back(static_cast<double>(k) * cfg.dt);
  };
  store(0, z.front());
  for (long k = 1; k <= steps; ++k) {
    stepper.step(y, eta * z[static_cast<std::size_t>(k - 1)], rng);
    check_blow_up(y, k);
    if (k % cfg.thin == 0 || k == steps) store(k, z[static_cast<std::size_t>(k)]);
  }
  out.so4.states.conservativeResize(row, Eigen::NoChange);
  out.so2.states.conservativeResize(row, Eigen::NoChange);
  return out;
}

MomentAccumulator::MomentAccumulator(Eigen::Index n)
    : mean_(Eigen::VectorXd::Zero(n)), m2_(Eigen::MatrixXd::Zero(n, n)) {}

void MomentAccumulator::add(const Eigen::VectorXd& x) {
  ++count_;
  const Eigen::VectorXd d = x - mean_;
  mean_ += d / static_cast<double>(count_);
  m2_.noalias() += d * (x - mean_).transpose();
}

EnsembleMoments MomentAccumulator::result() const {
  EnsembleMoments r;
  r.mean = mean_;
  r.count = count_;
  r.cov = count_ > 1 ? Eigen::MatrixXd(m2_ / static_cast<double>(count_ - 1))
                     : Eigen::MatrixXd::Zero(m2_.rows(), m2_.cols());
  r.cov = 0.5 * (r.cov + r.cov.transpose());
  return r;
}

namespace {

// Runs one path with on-the-fly trapezoid averaging; `forcing(k)` is the
// source during step k -> k+1.
template <typename Forcing>
void run_averaged_path(OuStepper& stepper, const OUSystem& sys, const SimConfig& cfg, Rng& rng,
                       Forcing forcing, MomentAccumulator& avg, MomentAccumulator& init,
                       MomentAccumulator& fin) {
  Eigen::VectorXd y = initial_state(sys, cfg, stepper, rng);
  init.add(y);
  const long steps = step_count(cfg);
  Eigen::VectorXd acc = 0.5 * y;
  for (long k = 1; k <= steps; ++k) {
    stepper.step(y, forcing(k - 1), rng);
    if (k % 1024 == 0 || k == steps) check_blow_up(y, k);
    acc += k == steps ? Eigen::VectorXd(0.5 * y) : y;
  }
  avg.add(acc / static_cast<double>(steps));
  fin.add(y);
}

}  // namespace

EnsembleResult simulate_ensemble(const OUSystem& sys, const SimConfig& cfg) {
  cfg.validate();
  sys.validate(true);
  check_em_stability(sys.a, cfg.dt);
  const auto n = static_cast<Eigen::Index>(sys.n());
  MomentAccumulator avg(n), init(n), fin(n);
  OuStepper stepper(sys, cfg.dt);
  for (int p = 0; p < cfg.n_paths; ++p) {
    Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(p));
    run_averaged_path(stepper, sys, cfg, rng, [&](long) -> const Eigen::VectorXd& { return sys.m; },
                      avg, init, fin);
  }
  return {avg.result(), init.result(), fin.result()};
}

EnsembleResult simulate_coupled_ensemble(const SulfateModel& model, const SimConfig& cfg) {
  cfg.validate();
  const long steps = step_count(cfg);
  const auto z = so2_trajectory(model, cfg.dt, steps, nullptr);
  std::vector<Eigen::VectorXd> forcing;
  forcing.reserve(z.size());
  for (const auto& zk : z) forcing.push_back(model.theta().eta * zk);
  OUSystem sys = so4_system(model, forcing.front());
  check_em_stability(sys.a, cfg.dt);
  const auto n = static_cast<Eigen::Index>(model.n());
  MomentAccumulator avg(n), init(n), fin(n);
  OuStepper stepper(sys, cfg.dt);
  for (int p = 0; p < cfg.n_paths; ++p) {
    Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(p));
    run_averaged_path(stepper, sys, cfg, rng,
                      [&](long k) -> const Eigen::VectorXd& { return forcing[static_cast<std::size_t>(k)]; },
                      avg, init, fin);
  }
  return {avg.result(), init.result(), fin.result()};
}

}  // namespace oufield
