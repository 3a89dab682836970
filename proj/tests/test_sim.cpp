#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "mac/io.hpp"
#include "mac/sim.hpp"
#include "oracles.hpp"

using mac::DisturbanceSpec;
using mac::NoiseKind;
using mac::SimProblem;
using mac::StateFeedbackSpec;
using mac::SymMatrix;

namespace {

StateFeedbackSpec delayed_integrator_input(double gamma) {
  StateFeedbackSpec spec;
  spec.Q = SymMatrix::Identity(2);
  spec.R = SymMatrix::Identity(1);
  spec.gamma = gamma;
  spec.x0 = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd A(2, 2), Bp(2, 1), Bm(2, 1);
  A << 1, 1, 0, 0;
  Bp << 0, 1;
  Bm << 0, -1;
  spec.models = {{A, Bp, "plus"}, {A, Bm, "minus"}};
  return spec;
}

mac::SynthesisCertificate input_cert() {
  static const auto so = mac::synthesize(
      mac::SweepTarget{delayed_integrator_input(6.0)}, 6.0, 1, {});
  REQUIRE(so.feasible);
  return *so.cert;
}

mac::OutputFeedbackSpec pole_cancellation() {
  const double z0 = 1.01;
  mac::OutputFeedbackSpec spec;
  spec.Q = SymMatrix(0.01 * Eigen::MatrixXd::Identity(2, 2));
  spec.R = SymMatrix(0.01 * Eigen::MatrixXd::Identity(1, 1));
  spec.gamma = 20.0;
  Eigen::MatrixXd A(2, 2), B(2, 1), G(2, 2), D(1, 1);
  A << 1, 1, 0, 1;
  B << 0, 1;
  G = 0.01 * Eigen::MatrixXd::Identity(2, 2);
  D << 0.1;
  Eigen::MatrixXd Cmp(1, 2), Cnmp(1, 2);
  Cmp << z0 - 1.0 / z0, z0;
  Cnmp << 1.0 / z0 - z0, 1.0 / z0;
  spec.models = {{A, B, G, Cmp, D, "mp"}, {A, B, G, Cnmp, D, "nmp"}};
  return spec;
}

}  // namespace

TEST_CASE("zero-noise equilibrium stays at zero with the tie-rule gain") {
  const auto spec = delayed_integrator_input(6.0);
  const auto cert = input_cert();
  const SimProblem sim = SimProblem::state_feedback(spec, 0);
  DisturbanceSpec dist;
  dist.kind = NoiseKind::Zero;
  const auto res = mac::run(sim, cert, dist, 20);
  for (const auto& row : res.rows) {
    CHECK(row.x.norm() == 0.0);
    CHECK(row.u.norm() == 0.0);
    for (double r : row.r) CHECK(r == 0.0);
  }
}

TEST_CASE("an impulse reveals the input sign within two steps") {
  const auto spec = delayed_integrator_input(6.0);
  const auto cert = input_cert();
  // true model is "minus" (index 1)
  const SimProblem sim = SimProblem::state_feedback(spec, 1);
  DisturbanceSpec dist;
  dist.kind = NoiseKind::Impulse;
  const auto res = mac::run(sim, cert, dist, 10);
  // From step 2 on, the accrued cost of the true model never falls below
  // the wrong one: the wrong model needs larger disturbances to explain
  // the data.
  for (size_t t = 2; t < res.rows.size(); ++t) {
    CHECK(res.rows[t].r[1] >= res.rows[t].r[0] - 1e-12);
  }
  CHECK(res.rows.back().r[1] > res.rows.back().r[0] + 1e-9);
}

TEST_CASE("the supervisor identifies the true model after 50 noisy steps") {
  const auto spec = delayed_integrator_input(6.0);
  const auto cert = input_cert();
  const SimProblem sim = SimProblem::state_feedback(spec, 1);
  DisturbanceSpec dist;
  dist.kind = NoiseKind::Gaussian;
  dist.seed = 7;
  const auto res = mac::run(sim, cert, dist, 50);
  REQUIRE_FALSE(res.trapped);
  const auto& last = res.rows.back();
  CHECK(last.r[1] > last.r[0]);
}

TEST_CASE("run is deterministic and one step equals N=1") {
  const auto spec = delayed_integrator_input(6.0);
  const auto cert = input_cert();
  const SimProblem sim = SimProblem::state_feedback(spec, 0);
  DisturbanceSpec dist;
  dist.kind = NoiseKind::Gaussian;
  dist.seed = 123;

  const auto a = mac::run(sim, cert, dist, 200);
  const auto b = mac::run(sim, cert, dist, 200);
  REQUIRE(a.rows.size() == b.rows.size());
  for (size_t t = 0; t < a.rows.size(); ++t) {
    CHECK((a.rows[t].x - b.rows[t].x).norm() == 0.0);
    CHECK((a.rows[t].u - b.rows[t].u).norm() == 0.0);
    CHECK(a.rows[t].vbar == b.rows[t].vbar);
  }

  const auto one = mac::run(sim, cert, dist, 1);
  REQUIRE(one.rows.size() == 1);
  CHECK((one.rows[0].x - a.rows[0].x).norm() == 0.0);
  CHECK(one.rows[0].cumcost == a.rows[0].cumcost);
}

TEST_CASE("batch runs match sequential runs bitwise, serial or parallel") {
  const auto spec = delayed_integrator_input(6.0);
  const auto cert = input_cert();
  const SimProblem sim = SimProblem::state_feedback(spec, 0);
  DisturbanceSpec base;
  base.kind = NoiseKind::Gaussian;
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8};
  const auto par = mac::run_batch(sim, cert, base, seeds, 100, true);
  const auto ser = mac::run_batch(sim, cert, base, seeds, 100, false);
  REQUIRE(par.size() == seeds.size());
  for (size_t i = 0; i < seeds.size(); ++i) {
    DisturbanceSpec d = base;
    d.seed = seeds[i];
    const auto solo = mac::run(sim, cert, d, 100);
    REQUIRE(par[i].rows.size() == solo.rows.size());
    for (size_t t = 0; t < solo.rows.size(); ++t) {
      CHECK(par[i].rows[t].cumcost == solo.rows[t].cumcost);
      CHECK(ser[i].rows[t].cumcost == solo.rows[t].cumcost);
    }
  }
}

TEST_CASE("accrued principal cost equals the physical state-feedback cost") {
  const auto spec = delayed_integrator_input(6.0);
  const auto cert = input_cert();
  const SimProblem sim = SimProblem::state_feedback(spec, 1);
  DisturbanceSpec dist;
  dist.kind = NoiseKind::Gaussian;
  dist.seed = 99;
  const auto res = mac::run(sim, cert, dist, 100);

  double physical = 0.0;
  for (const auto& row : res.rows) {
    physical += row.x.dot(spec.Q.mat() * row.x) +
                row.u.dot(spec.R.mat() * row.u) -
                spec.gamma * spec.gamma * row.w.squaredNorm();
  }
  CHECK(res.rows.back().cumcost ==
        doctest::Approx(physical).epsilon(1e-8));
}

TEST_CASE("trace columns are recomputable from the raw columns") {
  const auto spec = delayed_integrator_input(6.0);
  const auto cert = input_cert();
  const SimProblem sim = SimProblem::state_feedback(spec, 0);
  DisturbanceSpec dist;
  dist.kind = NoiseKind::Gaussian;
  dist.seed = 5;
  const auto res = mac::run(sim, cert, dist, 60);
  const auto prob = sim.principal;

  mac::InfoState st = mac::InfoState::zero(prob);
  Eigen::VectorXd z = prob.z0;
  for (size_t t = 0; t < res.rows.size(); ++t) {
    const auto& row = res.rows[t];
    mac::StageTriple triple;
    triple.z = z;
    triple.u = row.u;
    triple.d = row.dory;
    st = mac::info_update(st, triple, prob.models);
    for (size_t m = 0; m < prob.models.size(); ++m) {
      CHECK(row.r[m] == doctest::Approx(st.r[m]).epsilon(1e-9));
    }
    CHECK(row.vbar ==
          doctest::Approx(mac::value_bound(cert, row.z, st.r))
              .epsilon(1e-9));
    const auto eg = mac::empirical_gain(sim, res.rows, static_cast<int>(t));
    if (row.empgain.has_value()) {
      CHECK(eg.has_value());
      CHECK(*row.empgain == doctest::Approx(*eg).epsilon(1e-9));
    }
    z = row.z;
  }
}

TEST_CASE("empirical gain is absent exactly when the denominator vanishes") {
  const auto spec = delayed_integrator_input(6.0);
  const auto cert = input_cert();
  const SimProblem sim = SimProblem::state_feedback(spec, 0);
  DisturbanceSpec dist;
  dist.kind = NoiseKind::Zero;
  const auto res = mac::run(sim, cert, dist, 5);
  for (const auto& row : res.rows) CHECK_FALSE(row.empgain.has_value());

  // single nonzero step: gamma_1 = (|x0|_Q^2 + |u0|_R^2) / (gamma^2 |w0|^2)
  DisturbanceSpec imp;
  imp.kind = NoiseKind::Impulse;
  const auto res2 = mac::run(sim, cert, imp, 2);
  REQUIRE(res2.rows[0].empgain.has_value());
  CHECK(*res2.rows[0].empgain ==
        doctest::Approx(0.0 / (36.0 * 2.0)).epsilon(1e-12));
  REQUIRE(res2.rows[1].empgain.has_value());
  const double num = res2.rows[1].x.squaredNorm() +
                     res2.rows[1].u.squaredNorm();
  CHECK(*res2.rows[1].empgain ==
        doctest::Approx(num / (36.0 * 2.0)).epsilon(1e-9));
}

TEST_CASE("empirical gain settles below the certified level") {
  const auto spec = delayed_integrator_input(6.0);
  const auto cert = input_cert();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const SimProblem sim = SimProblem::state_feedback(spec, seed % 2);
    DisturbanceSpec dist;
    dist.kind = NoiseKind::Gaussian;
    dist.seed = seed;
    const auto res = mac::run(sim, cert, dist, 400);
    REQUIRE_FALSE(res.trapped);
    REQUIRE(res.rows.back().empgain.has_value());
    CHECK(*res.rows.back().empgain <= spec.gamma);
  }
}

TEST_CASE("jury_check hand cases") {
  Eigen::MatrixXd k(1, 2);
  k << 0.5, 0.2;
  CHECK(mac::jury_check(k, 1));
  k << -0.5, 0.0;
  CHECK_FALSE(mac::jury_check(k, 1));
  CHECK(mac::jury_check(-k, 1));
  CHECK_THROWS_AS(mac::jury_check(Eigen::MatrixXd::Zero(1, 3), 1),
                  mac::Unsupported);
}

TEST_CASE("jury_check agrees with the eigenvalue oracle on 500 random gains") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> unif(-3.0, 3.0);
  Eigen::MatrixXd B(2, 1);
  B << 0, 1;
  int checked = 0;
  while (checked < 500) {
    const int i = (rng() % 2 == 0) ? 1 : -1;
    Eigen::MatrixXd K(1, 2);
    K << unif(rng), unif(rng);
    Eigen::MatrixXd A(2, 2);
    A << 1, i, 0, 0;
    const double rho = oracles::spectral_radius(A - B * K);
    if (std::abs(rho - 1.0) < 1e-9) continue;  // skip boundary draws
    CHECK(mac::jury_check(K, i) == (rho < 1.0));
    ++checked;
  }
}

TEST_CASE("value_trace basics") {
  const auto spec = delayed_integrator_input(6.0);
  const auto cert = input_cert();
  const SimProblem sim = SimProblem::state_feedback(spec, 0);
  DisturbanceSpec dist;
  dist.kind = NoiseKind::Zero;
  const auto res = mac::run(sim, cert, dist, 3);
  const auto vt = mac::value_trace(sim, cert, res);
  REQUIRE(vt.size() == 4);
  CHECK(vt[0] == doctest::Approx(0.0));  // z0 = 0, r = 0
}

TEST_CASE("pole-cancellation loop is bounded with periodic dissipation") {
  const auto spec = pole_cancellation();
  auto ro = mac::output_feedback_reduce(spec);
  REQUIRE(ro.status == mac::ReduceStatus::Ok);
  const auto so = mac::synthesize(mac::SweepTarget{spec}, 20.0, 4, []() {
    mac::SolveConfig cfg;
    cfg.verify_tol = 1e-6;
    return cfg;
  }());
  REQUIRE_MESSAGE(so.feasible, so.detail);
  const auto& cert = *so.cert;

  const SimProblem sim = SimProblem::output_feedback(
      spec, std::move(*ro.reduction), 1, Eigen::VectorXd::Zero(2));
  DisturbanceSpec dist;
  dist.kind = NoiseKind::Gaussian;
  dist.seed = 3;
  const auto res = mac::run(sim, cert, dist, 1000);
  REQUIRE_FALSE(res.trapped);
  double max_x = 0.0;
  for (const auto& row : res.rows) {
    max_x = std::max(max_x, row.x.cwiseAbs().maxCoeff());
  }
  CHECK(max_x < 1e6);

  const auto vt = mac::value_trace(sim, cert, res);
  double scale = 1.0;
  for (double v : vt) scale = std::max(scale, std::abs(v));
  for (size_t k = cert.tau; k < vt.size(); k += cert.tau) {
    CHECK(vt[k] <= vt[k - cert.tau] + 1e-7 * scale);
  }
}

TEST_CASE("observer bank tracks the true state once the loop settles") {
  const auto spec = pole_cancellation();
  std::mt19937_64 rng(62);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto ro = mac::output_feedback_reduce(spec);
  REQUIRE(ro.status == mac::ReduceStatus::Ok);
  mac::SolveConfig cfg;
  cfg.verify_tol = 1e-6;
  const auto so = mac::synthesize(mac::SweepTarget{spec}, 20.0, 4, cfg);
  REQUIRE(so.feasible);

  for (int trial = 0; trial < 50; ++trial) {
    auto ro2 = mac::output_feedback_reduce(spec);
    const Eigen::VectorXd x0(Eigen::Vector2d(gauss(rng), gauss(rng)));
    const SimProblem sim = SimProblem::output_feedback(
        spec, std::move(*ro2.reduction), 1, x0);
    DisturbanceSpec dist;
    dist.kind = NoiseKind::Zero;
    const auto res = mac::run(sim, *so.cert, dist, 120);
    REQUIRE_FALSE(res.trapped);
    const auto& last = res.rows.back();
    const Eigen::VectorXd xhat_true = last.z.segment(2, 2);
    CHECK((xhat_true - last.x).norm() <=
          1e-6 * std::max(1.0, x0.norm()) + 1e-9);
  }
}

TEST_CASE("worst-case adversary mode stays within the certified value") {
  const auto spec = delayed_integrator_input(6.0);
  const auto cert = input_cert();
  mac::StateFeedbackSpec nonzero = spec;
  nonzero.x0 = Eigen::Vector2d(1.0, -0.5);
  const SimProblem sim = SimProblem::state_feedback(nonzero, 0);
  DisturbanceSpec dist;
  dist.kind = NoiseKind::WorstCase;
  const auto res = mac::run(sim, cert, dist, 300);
  REQUIRE_FALSE(res.trapped);
  const double bound =
      mac::value_bound(cert, nonzero.x0, {0.0, 0.0});
  double worst_prefix = -1e300;
  for (const auto& row : res.rows) {
    worst_prefix = std::max(worst_prefix, row.cumcost);
  }
  CHECK(worst_prefix <= bound + 1e-6 * std::max(1.0, std::abs(bound)));
}

TEST_CASE("csv trace export carries the fixed header") {
  const auto spec = delayed_integrator_input(6.0);
  const auto cert = input_cert();
  const SimProblem sim = SimProblem::state_feedback(spec, 0);
  DisturbanceSpec dist;
  dist.kind = NoiseKind::Gaussian;
  dist.seed = 11;
  const auto res = mac::run(sim, cert, dist, 4);
  const std::string path = "/tmp/mac_test_trace.csv";
  mac::write_trace_csv(path, sim, res);
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  CHECK(header ==
        "t,x_1,x_2,u_1,d_1,d_2,w_1,w_2,r_plus,r_minus,vbar,cumcost,empgain");
  int lines = 0;
  std::string line;
  while (std::getline(f, line)) ++lines;
  CHECK(lines == 4);
  std::remove(path.c_str());
}
