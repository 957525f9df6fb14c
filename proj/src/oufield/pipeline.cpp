#include "oufield/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <Eigen/Dense>

#include "oufield/error.hpp"
#include "oufield/forecast.hpp"
#include "oufield/io.hpp"
#include "oufield/ou_dist.hpp"
#include "oufield/output.hpp"
#include "oufield/sde_oracle.hpp"
#include "oufield/service.hpp"

namespace oufield {

using nlohmann::json;

namespace {

std::string sci(double x) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

std::uint64_t effective_seed(const RunConfig& cfg, const RunOptions& opts) {
  return opts.seed ? *opts.seed : cfg.seed;
}

void ensure_out_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

json theta_json(const Theta& t) {
  return {{"gamma", t.gamma}, {"alpha", t.alpha}, {"eta", t.eta}, {"beta", t.beta},
          {"sigma2", t.sigma2}, {"delta", t.delta}, {"T", t.T}};
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::filesystem::path bundle_path(const RunOptions& opts) {
  return opts.bundle ? *opts.bundle : opts.out_dir / "bundle.json";
}

}  // namespace

Theta reference_theta(double delta, double horizon) {
  Theta t;
  t.gamma = 1510.0;
  t.alpha = 0.53;
  t.eta = 0.50;
  t.beta = 3.45;
  t.sigma2 = 24000.0;
  t.delta = delta;
  t.T = horizon;
  return t;
}

std::string run_check(const RunConfig& cfg, const RunOptions& opts) {
  (void)opts;
  const LoadedData data = load_data(cfg);
  const Theta ref = reference_theta(cfg.delta, cfg.T);
  std::ostringstream out;
  out << "grid " << data.grid.nx() << "x" << data.grid.ny() << " (n=" << data.grid.size() << "), dx="
      << data.grid.dx() << " km, dy=" << data.grid.dy() << " km, config " << hash_hex(cfg.hash) << "\n";
  out << "facilities " << data.inventory.facilities.size() << " (" << data.inventory.out_of_domain.size()
      << " out of domain), total in-domain SO2 " << data.inventory.X.sum() << " tons\n";
  for (const auto& w : data.inventory.warnings) out << "warning: " << w << "\n";
  for (const auto& id : data.inventory.out_of_domain) out << "warning: facility " << id << " is out of domain\n";
  std::size_t valid = 0;
  for (auto m : data.mask) valid += m ? 1 : 0;
  out << "sulfate cells valid " << valid << " of " << data.mask.size() << "\n";

  bool ok = true;
  for (const auto& [label, rate] : {std::pair<const char*, double>{"A_y", ref.delta}, {"A_z", ref.eta}}) {
    const OperatorReport rep = inspect_operator(*data.parts, ref.gamma, ref.alpha, rate);
    const double tol = 1e-10 * std::max(rep.flux_norm_inf, 1e-300);
    const bool cons = rep.column_sum_defect <= tol;
    ok = ok && cons;
    out << label << " (gamma=" << ref.gamma << ", alpha=" << ref.alpha << ", rate=" << rate << ")\n";
    out << "  D row-sum defect        " << sci(rep.diffusion_row_sum_defect) << "\n";
    out << "  column-sum defect       " << sci(rep.column_sum_defect) << " (limit " << sci(tol) << ") "
        << (cons ? "ok" : "FAIL") << "\n";
    out << "  M-matrix sign pattern   " << (rep.m_matrix_pattern ? "yes" : "no") << "\n";
    if (rep.eigenvalue_checked) {
      out << "  min real eigenvalue     " << rep.min_real_eigenvalue << " (rate " << rate << ")\n";
    } else {
      out << "  min real eigenvalue     skipped (n above dense threshold)\n";
    }
  }
  if (!ok) throw NumericalError("check: operator column-sum defect exceeds tolerance\n" + out.str());
  return out.str();
}

std::string run_fit(const RunConfig& cfg, const RunOptions& opts) {
  const LoadedData data = load_data(cfg);
  const InferenceData inf = make_inference_data(cfg, data);
  McmcConfig mc = cfg.mcmc;
  mc.threads = opts.threads;
  const std::uint64_t seed = effective_seed(cfg, opts);
  const std::vector<std::uint64_t> seeds(static_cast<std::size_t>(mc.chains), seed);
  const std::vector<Trace> traces = run_chains(mc, inf, cfg.priors, seeds);

  ensure_out_dir(opts.out_dir);
  const std::string hash = hash_hex(cfg.hash);
  for (const auto& t : traces) {
    const std::string stem = "chain_" + std::to_string(t.chain_id);
    write_trace_csv(opts.out_dir / (stem + ".csv"), t);
    write_text_file(opts.out_dir / (stem + ".json"), trace_sidecar(t, seed, hash).dump(2) + "\n");
  }
  const auto rows = summarize_traces(traces);
  std::string table = format_summary_table(rows);
  table = "config " + hash + "  seed " + std::to_string(seed) + "\n" + table;

  json fit;
  fit["config_hash"] = hash;
  fit["seed"] = seed;
  fit["chains"] = mc.chains;
  fit["iterations"] = mc.iterations;
  fit["burn_in"] = mc.burn_in;
  json summary = json::array();
  for (const auto& r : rows) {
    json row = {{"parameter", r.parameter}, {"interpretation", r.interpretation}, {"mean", r.mean},
                {"ci95", {r.lo, r.hi}}};
    row["rhat"] = std::isnan(r.rhat) ? json(nullptr) : json(r.rhat);
    row["ess"] = std::isnan(r.ess) ? json(nullptr) : json(r.ess);
    summary.push_back(row);
  }
  fit["summary"] = summary;
  try {
    const DicResult d = dic(traces, inf);
    fit["dic"] = {{"dic", d.dic}, {"dbar", d.dbar}, {"p_d", d.p_d}, {"d_at_mean", d.d_at_mean}};
    char line[160];
    std::snprintf(line, sizeof line, "DIC %.6g (Dbar %.6g, pD %.6g)\n", d.dic, d.dbar, d.p_d);
    table += line;
  } catch (const Error& e) {
    fit["dic"] = nullptr;
    table += std::string("DIC unavailable: ") + e.what() + "\n";
  }
  write_text_file(opts.out_dir / "fit.json", fit.dump(2) + "\n");
  write_text_file(opts.out_dir / "summary.txt", table);

  ModelBundle b;
  b.grid = cfg.grid;
  b.boundary = cfg.boundary;
  b.wind = data.wind;
  b.facilities = data.inventory.facilities;
  b.population = data.population.pop;
  b.trace = thin_rows(pooled_thetas(traces), cfg.bundle_max_rows);
  b.delta = cfg.delta;
  b.T = cfg.T;
  b.config_hash = hash;
  b.seed = seed;
  b.finalize();
  b.save(opts.out_dir / "bundle.json");
  return table;
}

std::string run_forecast(const RunConfig& cfg, const RunOptions& opts) {
  const ModelBundle b = ModelBundle::load(bundle_path(opts));
  const std::uint64_t seed = effective_seed(cfg, opts);
  std::map<std::string, double> reductions;
  if (cfg.forecast.facilities.empty()) {
    for (const auto& f : b.facilities) reductions[f.id] = cfg.forecast.fraction;
  } else {
    for (const auto& id : cfg.forecast.facilities) reductions[id] = cfg.forecast.fraction;
  }
  const Scenario sc = Scenario::make(b.inventory, reductions, "config");
  ForecastOptions fo;
  fo.n_draws = cfg.forecast.n_draws;
  fo.seed = seed;
  fo.include_noise = cfg.forecast.include_noise;
  fo.threads = opts.threads;
  const ForecastContext ctx = b.context();
  const ExposureSummary s =
      summarize_exposure(forecast_reduction(ctx, apply_scenario(b.inventory, sc), fo), b.population, sc.label);

  json out;
  out["config_hash"] = hash_hex(cfg.hash);
  out["bundle_config_hash"] = b.config_hash;
  out["seed"] = seed;
  out["scenario"] = {{"label", sc.label}, {"reductions", sc.reductions}};
  out["n_draws"] = s.n_draws;
  out["include_noise"] = fo.include_noise;
  out["mean_field"] = vec_json(s.mean_field);
  out["exposure"] = {{"mean", s.mean}, {"lo", s.lo}, {"hi", s.hi}, {"std_error", s.std_error}};
  out["per_draw_exposures"] = s.per_draw;
  if (!cfg.forecast.candidates.empty()) {
    json ranking = json::array();
    for (const auto& r : rank_facilities(ctx, b.inventory, cfg.forecast.candidates, cfg.forecast.fraction,
                                         b.population, fo)) {
      ranking.push_back({{"id", r.label}, {"mean", r.mean}, {"lo", r.lo}, {"hi", r.hi}});
    }
    out["ranking"] = ranking;
  }
  ensure_out_dir(opts.out_dir);
  const std::string text = out.dump(2) + "\n";
  write_text_file(opts.out_dir / "forecast.json", text);
  return text;
}

std::string run_simulate(const RunConfig& cfg, const RunOptions& opts) {
  const LoadedData data = load_data(cfg);
  Theta theta = reference_theta(cfg.delta, cfg.T);
  std::string source = "reference";
  if (cfg.simulate.theta) {
    theta = *cfg.simulate.theta;
    source = "config";
  } else if (std::filesystem::is_regular_file(bundle_path(opts))) {
    theta = ModelBundle::load(bundle_path(opts)).posterior_mean;
    source = "bundle posterior mean";
  }
  const std::uint64_t seed = effective_seed(cfg, opts);
  SulfateModel model(data.parts, data.inventory.X, theta);

  SimConfig sc;
  sc.dt = cfg.simulate.dt;
  sc.horizon = cfg.T;
  sc.n_paths = cfg.simulate.n_paths;
  sc.seed = seed;
  sc.init = InitKind::Stationary;
  sc.spin_up = 10.0 / cfg.delta;
  sc.thin = cfg.simulate.thin;

  ensure_out_dir(opts.out_dir);
  const Eigen::Index n = static_cast<Eigen::Index>(model.n());
  std::ostringstream fields;
  fields << "path";
  for (Eigen::Index k = 0; k < n; ++k) fields << ",cell_" << k;
  fields << "\n";
  MomentAccumulator acc(n);
  for (int p = 0; p < sc.n_paths; ++p) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(p));
    const CoupledPath path = simulate_coupled(model, sc, rng);
    const Eigen::VectorXd avg = time_average_path(path.so4);
    acc.add(avg);
    fields << p;
    for (Eigen::Index k = 0; k < n; ++k) fields << ',' << format_double(avg[k]);
    fields << "\n";
    if (p == 0) {
      std::ostringstream ps;
      ps << "t";
      for (Eigen::Index k = 0; k < n; ++k) ps << ",so4_" << k;
      for (Eigen::Index k = 0; k < n; ++k) ps << ",so2_" << k;
      ps << "\n";
      for (Eigen::Index r = 0; r < path.so4.states.rows(); ++r) {
        ps << format_double(path.so4.times[static_cast<std::size_t>(r)]);
        for (Eigen::Index k = 0; k < n; ++k) ps << ',' << format_double(path.so4.states(r, k));
        for (Eigen::Index k = 0; k < n; ++k) ps << ',' << format_double(path.so2.states(r, k));
        ps << "\n";
      }
      write_text_file(opts.out_dir / "simulate_path.csv", ps.str());
    }
  }
  write_text_file(opts.out_dir / "simulate_fields.csv", fields.str());
  const EnsembleMoments m = acc.result();
  const Eigen::VectorXd mu = model.so4_mean();
  json out;
  out["config_hash"] = hash_hex(cfg.hash);
  out["seed"] = seed;
  out["theta_source"] = source;
  out["theta"] = theta_json(theta);
  out["dt"] = sc.dt;
  out["n_paths"] = sc.n_paths;
  out["analytic_mean"] = vec_json(mu);
  out["ensemble_mean"] = vec_json(m.mean);
  const std::string text = out.dump(2) + "\n";
  write_text_file(opts.out_dir / "simulate.json", text);
  std::ostringstream summary;
  summary << "simulated " << sc.n_paths << " coupled paths (dt=" << sc.dt << ", theta from " << source << ")\n";
  summary << "max |ensemble mean - analytic mean| = " << sci((m.mean - mu).cwiseAbs().maxCoeff()) << "\n";
  return summary.str();
}

namespace {

struct ValidationLine {
  std::string name;
  bool pass = false;
  std::string detail;
};

SparseOperator normalized(const SparseOperator& op) {
  const double d = op.max_diagonal();
  if (!(d > 0.0)) return op;
  return SparseOperator(op.matrix() / d, op.symmetric());
}

}  // namespace

std::string run_validate(const std::optional<RunConfig>& cfg, const RunOptions& opts) {
  const std::uint64_t seed = cfg ? effective_seed(*cfg, opts) : (opts.seed ? *opts.seed : 1);
  std::shared_ptr<const TransportComponents> parts;
  std::string where;
  if (cfg) {
    const LoadedData data = load_data(*cfg);
    parts = data.parts;
    where = "config grid " + std::to_string(data.grid.nx()) + "x" + std::to_string(data.grid.ny());
  } else {
    const Grid g = Grid::build(4, 4, {}, 1.0, 1.0);
    parts = std::make_shared<TransportComponents>(assemble_components(g, FaceWind::uniform(g, 1.0, 0.5)));
    where = "built-in 4x4 grid";
  }
  std::vector<ValidationLine> lines;
  const auto n = static_cast<Eigen::Index>(parts->diffusion.n());

  {
    const OperatorReport rep = inspect_operator(*parts, 1510.0, 0.53, 50.0);
    const bool ok = rep.column_sum_defect <= 1e-10 * rep.flux_norm_inf && rep.diffusion_row_sum_defect <= 1e-10 &&
                    rep.m_matrix_pattern && (!rep.eigenvalue_checked || rep.min_real_eigenvalue >= 50.0 - 1e-8);
    lines.push_back({"operator structure", ok,
                     "column-sum defect " + sci(rep.column_sum_defect) + ", min eig " + sci(rep.min_real_eigenvalue)});
  }

  // Rescaled operators keep Euler-Maruyama cheap: unit max diagonal for D and C.
  const SparseOperator d_hat = normalized(parts->diffusion);
  const SparseOperator c_hat = normalized(parts->advection);
  const SparseOperator a = assemble_transport(d_hat, c_hat, 2.0, 1.0, 2.0);

  {
    Rng rng = make_rng(seed, 9001);
    double worst = 0.0;
    for (int trial = 0; trial < 30; ++trial) {
      const int m = 2 + trial % 29;
      Eigen::MatrixXd r(m, m);
      for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = standard_normal(rng);
      Eigen::MatrixXd s = r * r.transpose() / m + Eigen::MatrixXd::Identity(m, m);
      Eigen::MatrixXd k(m, m);
      for (Eigen::Index i = 0; i < k.size(); ++i) k.data()[i] = standard_normal(rng);
      const Eigen::MatrixXd am = s + (k - k.transpose());  // positive-definite symmetric part
      const Eigen::MatrixXd q = Eigen::MatrixXd::Identity(m, m);
      const Eigen::MatrixXd x = solve_lyapunov(am, q);
      worst = std::max(worst, lyapunov_residual(am, x, q) / q.norm());
    }
    const Eigen::MatrixXd q = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd x = solve_lyapunov(a.dense(), q);
    worst = std::max(worst, lyapunov_residual(a.dense(), x, q) / q.norm());
    lines.push_back({"lyapunov residual", worst <= 1e-8, "max relative residual " + sci(worst)});
  }

  {
    const SparseOperator as = assemble_transport(d_hat, c_hat, 2.0, 0.0, 2.0);
    const Eigen::MatrixXd sigma = solve_lyapunov(as.dense(), Eigen::MatrixXd::Identity(n, n));
    const double err = (sigma * 2.0 * as.dense() - Eigen::MatrixXd::Identity(n, n)).norm();
    lines.push_back({"symmetric CAR shortcut", err <= 1e-8 * std::sqrt(static_cast<double>(n)),
                     "||Sigma (2/sigma2) A - I||_F = " + sci(err)});
  }

  {
    bool ok = true;
    double worst_ratio = 0.0;
    for (double delta : {1.0, 5.0, 50.0}) {
      for (double horizon : {0.1, 1.0}) {
        const SparseOperator ab = assemble_transport(d_hat, c_hat, 1.0, 0.0, delta);
        OUSystem sys{ab, Eigen::VectorXd::Zero(n), std::nullopt, 1.0};
        const Eigen::MatrixXd psi = time_avg_exact(sys, horizon).covariance();
        const Eigen::MatrixXd phi = time_avg_sar(sys, horizon).dense_covariance();
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(psi - phi);
        const double gap = svd.singularValues()(0);
        const double bound = phi_error_bound(delta, horizon);
        worst_ratio = std::max(worst_ratio, gap / bound);
        // Attained exactly along the constant vector, where D has eigenvalue 0.
        ok = ok && gap <= bound * (1.0 + 1e-9);
      }
    }
    lines.push_back({"Psi - Phi error bound", ok, "max gap / bound = " + sci(worst_ratio)});
  }

  {
    OUSystem sys{a, Eigen::VectorXd::Zero(n), std::nullopt, 1.0};
    SimConfig sc;
    sc.dt = 2e-3;
    sc.horizon = 1.0;
    sc.n_paths = 50000;
    sc.seed = seed;
    sc.init = InitKind::Stationary;
    sc.spin_up = 2.0;
    const EnsembleResult ens = simulate_ensemble(sys, sc);
    const Eigen::MatrixXd psi = time_avg_exact(sys, 1.0).covariance();
    const Eigen::MatrixXd sigma = stationary(sys).dense_covariance();
    const double e_psi = (ens.time_average.cov - psi).norm() / psi.norm();
    const double e_sigma = (ens.initial.cov - sigma).norm() / sigma.norm();
    lines.push_back({"Psi vs Monte Carlo", e_psi <= 0.05,
                     "relative Frobenius error " + sci(e_psi) + " over 50000 paths"});
    lines.push_back({"Sigma vs Monte Carlo", e_sigma <= 0.05, "relative Frobenius error " + sci(e_sigma)});
  }

  std::ostringstream out;
  out << "validate on " << where << " (seed " << seed << ")\n";
  bool all = true;
  for (const auto& l : lines) {
    all = all && l.pass;
    out << (l.pass ? "PASS " : "FAIL ") << l.name << ": " << l.detail << "\n";
  }
  if (!all) throw NumericalError("validate: at least one check failed\n" + out.str());
  return out.str();
}

}  // namespace oufield
