#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "fixtures.hpp"
#include "oufield/error.hpp"
#include "oufield/forecast.hpp"

using namespace oufield;

namespace {

Theta theta_of(double gamma, double alpha, double eta, double beta, double sigma2, double delta = 3.0) {
  Theta t;
  t.gamma = gamma;
  t.alpha = alpha;
  t.eta = eta;
  t.beta = beta;
  t.sigma2 = sigma2;
  t.delta = delta;
  t.T = 1.0;
  return t;
}

EmissionsInventory inventory_on(const Grid& g, const std::vector<std::tuple<std::string, int, int, double>>& plants) {
  std::vector<Facility> fs;
  for (const auto& [id, i, j, tons] : plants) {
    const LonLat c = g.cell_center(i, j);
    fs.push_back({id, id, c.lon, c.lat, tons});
  }
  return rasterize_emissions(fs, g);
}

}  // namespace

TEST_CASE("scenario arithmetic") {
  const Grid g = Grid::build(3, 3, {-90.0, 38.0}, 10.0, 10.0);
  const auto inv = inventory_on(g, {{"A", 0, 0, 10000.0}, {"B", 2, 1, 100.0}, {"C", 2, 1, 200.0}});
  CHECK(apply_scenario(inv, Scenario::make(inv, {{"A", 0.0}, {"B", 0.0}})).norm() == 0.0);
  CHECK(apply_scenario(inv, Scenario::make(inv, {{"A", 0.8}}))[static_cast<Eigen::Index>(g.index(0, 0))] ==
        doctest::Approx(8000.0));
  CHECK(apply_scenario(inv, Scenario::make(inv, {{"B", 1.0}, {"C", 0.5}}))[static_cast<Eigen::Index>(g.index(2, 1))] ==
        doctest::Approx(200.0));
  SUBCASE("committed fractions shrink what remains") {
    const Eigen::VectorXd x = apply_scenario(inv, Scenario::make(inv, {{"A", 0.5}}), {{"A", 0.8}});
    CHECK(x[static_cast<Eigen::Index>(g.index(0, 0))] == doctest::Approx(1000.0));
  }
  SUBCASE("invalid scenarios") {
    CHECK_THROWS_AS(Scenario::make(inv, {{"A", 1.5}}), DomainError);
    CHECK_THROWS_AS(Scenario::make(inv, {{"A", -0.1}}), DomainError);
    CHECK_THROWS_AS(Scenario::make(inv, {{"Z", 0.5}}), DomainError);
  }
}

TEST_CASE("population exposure") {
  Eigen::VectorXd pop(2), field(2);
  pop << 1.0, 3.0;
  field << 2.0, 6.0;
  CHECK(population_exposure(field, pop) == doctest::Approx(5.0));
  CHECK(population_exposure(Eigen::VectorXd::Constant(4, 2.5), Eigen::VectorXd::Constant(4, 7.0)) == doctest::Approx(2.5));
  Eigen::VectorXd point = Eigen::VectorXd::Zero(4);
  point[2] = 10.0;
  CHECK(population_exposure(Eigen::VectorXd::LinSpaced(4, 1.0, 4.0), point) == doctest::Approx(3.0));
  CHECK_THROWS(population_exposure(field, Eigen::VectorXd::Zero(2)));
}

TEST_CASE("quantile interpolates between order statistics") {
  CHECK(quantile({4.0, 1.0, 3.0, 2.0}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({1.0, 2.0, 3.0}, 0.0) == 1.0);
  CHECK(quantile({1.0, 2.0, 3.0}, 1.0) == 3.0);
}

TEST_CASE("reduction draws") {
  const auto parts = testing_support::components(5, 5, 1.0, 1.0, 0.5);
  Eigen::VectorXd xs = Eigen::VectorXd::Zero(25);
  xs[7] = 100.0;
  xs[18] = 40.0;
  const Theta t = theta_of(1.0, 1.0, 0.5, 2.0, 0.5);
  SUBCASE("degenerate trace without noise returns the mean") {
    Theta quiet = t;
    quiet.sigma2 = 1e-20;
    const ForecastContext ctx{parts, Eigen::VectorXd::Zero(25), {quiet}};
    ForecastOptions o;
    o.n_draws = 5;
    const Eigen::VectorXd mu = mean_reduction_field(parts, quiet, xs);
    for (const auto& f : forecast_reduction(ctx, xs, o)) CHECK((f - mu).cwiseAbs().maxCoeff() <= 1e-8);
  }
  SUBCASE("Monte Carlo mean within 3 SE entrywise") {
    const ForecastContext ctx{parts, Eigen::VectorXd::Zero(25), {t}};
    ForecastOptions o;
    o.n_draws = 2000;
    o.seed = 3;
    const auto fields = forecast_reduction(ctx, xs, o);
    const Eigen::VectorXd mu = mean_reduction_field(parts, t, xs);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(25), sq = Eigen::VectorXd::Zero(25);
    for (const auto& f : fields) {
      mean += f;
      sq += f.cwiseProduct(f);
    }
    mean /= 2000.0;
    const Eigen::VectorXd se = ((sq / 2000.0 - mean.cwiseProduct(mean)) / 1999.0).cwiseSqrt();
    // Total mass at 3 SE; each of the 25 cells at a Bonferroni-adjusted 4 SE.
    std::vector<double> totals;
    for (const auto& f : fields) totals.push_back(f.sum());
    double tm = 0.0, tq = 0.0;
    for (double v : totals) {
      tm += v;
      tq += v * v;
    }
    tm /= 2000.0;
    const double tse = std::sqrt((tq / 2000.0 - tm * tm) / 1999.0);
    CHECK(std::abs(tm - mu.sum()) <= 3.0 * tse);
    for (int k = 0; k < 25; ++k) CHECK(std::abs(mean[k] - mu[k]) <= 4.0 * se[k] + 1e-12);
  }
  SUBCASE("zero intervention gives zero fields") {
    const ForecastContext ctx{parts, Eigen::VectorXd::Zero(25), {t}};
    ForecastOptions o;
    o.n_draws = 4;
    for (const auto& f : forecast_reduction(ctx, Eigen::VectorXd::Zero(25), o)) CHECK(f.norm() == 0.0);
  }
  SUBCASE("draws depend only on the seed, not on threads") {
    const ForecastContext ctx{parts, Eigen::VectorXd::Zero(25), {t, theta_of(2.0, 0.5, 0.7, 3.0, 1.0)}};
    ForecastOptions o;
    o.n_draws = 50;
    o.seed = 9;
    const auto a = forecast_reduction(ctx, xs, o);
    o.threads = 3;
    const auto b = forecast_reduction(ctx, xs, o);
    for (int k = 0; k < 50; ++k) CHECK((a[k] - b[k]).norm() == 0.0);
    o.seed = 10;
    CHECK((forecast_reduction(ctx, xs, o)[0] - a[0]).norm() > 0.0);
  }
  SUBCASE("bad inputs") {
    ForecastOptions o;
    CHECK_THROWS(forecast_reduction(ForecastContext{parts, {}, {}}, xs, o));
    o.n_draws = 0;
    CHECK_THROWS(forecast_reduction(ForecastContext{parts, {}, {t}}, xs, o));
  }
}

TEST_CASE("mean reduction fields are linear") {
  const auto parts = testing_support::components(6, 5, 1.0, 2.0, -1.0);
  const Theta t = theta_of(1510.0, 0.53, 0.5, 3.45, 1.0, 50.0);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(30), b = Eigen::VectorXd::Zero(30);
  a[3] = 1000.0;
  b[22] = 2500.0;
  const Eigen::VectorXd ma = mean_reduction_field(parts, t, a), mb = mean_reduction_field(parts, t, b);
  CHECK((mean_reduction_field(parts, t, 0.3 * a) - 0.3 * ma).norm() <= 1e-10 * (0.3 * ma).norm());
  CHECK((mean_reduction_field(parts, t, a + b) - (ma + mb)).norm() <= 1e-10 * (ma + mb).norm());
}

TEST_CASE("ranking") {
  const Grid g = Grid::build(5, 5, {-90.0, 38.0}, 1.0, 1.0);
  auto parts = std::make_shared<TransportComponents>(assemble_components(g, FaceWind::uniform(g, 0.0, 0.0)));
  const ForecastContext ctx{parts, Eigen::VectorXd::Zero(25), {theta_of(1.0, 1.0, 0.5, 2.0, 0.5)}};
  ForecastOptions o;
  o.n_draws = 300;
  o.seed = 4;
  SUBCASE("single candidate") {
    const auto inv = inventory_on(g, {{"A", 1, 1, 100.0}});
    CHECK(rank_facilities(ctx, inv, {"A"}, 0.8, Eigen::VectorXd::Ones(25), o).size() == 1);
  }
  SUBCASE("mirror-image facilities tie within 3 SE") {
    const auto inv = inventory_on(g, {{"W", 0, 2, 100.0}, {"E", 4, 2, 100.0}});
    const auto r = rank_facilities(ctx, inv, {"W", "E"}, 0.8, Eigen::VectorXd::Ones(25), o);
    const double se = std::hypot(r[0].std_error, r[1].std_error);
    CHECK(std::abs(r[0].mean - r[1].mean) <= 3.0 * se);
  }
  SUBCASE("the larger emitter upwind of the population dominates") {
    auto windy = std::make_shared<TransportComponents>(assemble_components(g, FaceWind::uniform(g, 3.0, 0.0)));
    const ForecastContext wctx{windy, Eigen::VectorXd::Zero(25), {theta_of(1.0, 1.0, 0.5, 2.0, 0.5)}};
    const auto inv = inventory_on(g, {{"Big", 2, 2, 200.0}, {"Small", 2, 0, 100.0}});
    Eigen::VectorXd pop = Eigen::VectorXd::Constant(25, 1.0);
    pop[static_cast<Eigen::Index>(g.index(3, 2))] = 500.0;
    pop[static_cast<Eigen::Index>(g.index(4, 2))] = 500.0;
    const auto r = rank_facilities(wctx, inv, {"Small", "Big"}, 0.8, pop, o);
    CHECK(r[0].label == "Big");
    CHECK(r[0].mean > 2.0 * r[1].mean);
  }
  SUBCASE("ties break by id") {
    const ForecastContext quiet{parts, Eigen::VectorXd::Zero(25), {theta_of(1.0, 0.0, 0.5, 2.0, 1e-30)}};
    const auto inv = inventory_on(g, {{"b", 2, 2, 50.0}, {"a", 2, 2, 50.0}});
    const auto r = rank_facilities(quiet, inv, {"b", "a"}, 0.5, Eigen::VectorXd::Ones(25), o);
    CHECK(r[0].label == "a");
  }
}

TEST_CASE("exposure summary") {
  std::vector<Eigen::VectorXd> fields;
  for (int k = 1; k <= 5; ++k) fields.push_back(Eigen::VectorXd::Constant(3, k));
  const ExposureSummary s = summarize_exposure(fields, Eigen::VectorXd::Ones(3), "x");
  CHECK(s.mean == doctest::Approx(3.0));
  CHECK(s.n_draws == 5);
  CHECK(s.lo == doctest::Approx(1.1));
  CHECK(s.hi == doctest::Approx(4.9));
  CHECK(s.std_error == doctest::Approx(std::sqrt(2.5 / 5)));
  CHECK((s.mean_field - Eigen::VectorXd::Constant(3, 3.0)).norm() <= 1e-12);
}
