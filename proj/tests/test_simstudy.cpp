#include <doctest.h>

#include <cmath>

#include "gformula/config.hpp"
#include "gformula/error.hpp"
#include "gformula/simstudy.hpp"
#include "helpers.hpp"

using namespace gformula;

TEST_CASE("generator moments") {
  RngStream rng(200);
  const std::size_t n = 200000;
  const auto table = generate_dgm(n, rng);

  double sum_l0 = 0.0;
  double sq_l0 = 0.0;
  double sum_a0 = 0.0;
  double sum_l1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum_l0 += table.cell(i, 0);
    sq_l0 += table.cell(i, 0) * table.cell(i, 0);
    sum_a0 += table.cell(i, 1);
    sum_l1 += table.cell(i, 2);
  }
  const double nd = static_cast<double>(n);
  const double mean_l0 = sum_l0 / nd;
  CHECK(std::abs(mean_l0) < 4.0 / std::sqrt(nd));
  CHECK(sq_l0 / nd - mean_l0 * mean_l0 == doctest::Approx(1.0).epsilon(0.02));
  // E expit(L0) = 1/2 by symmetry
  CHECK(sum_a0 / nd == doctest::Approx(0.5).epsilon(0.01));
  // E L1 = E A0 + E L0
  CHECK(sum_l1 / nd == doctest::Approx(sum_a0 / nd + mean_l0).epsilon(0.03));
}

TEST_CASE("analytic truth of a regime") {
  CHECK(dgm_truth(dgm_regime("a", 1, 1, 1)) == 3.0);
  CHECK(dgm_truth(dgm_regime("b", 0, 0, 0)) == 0.0);
  CHECK(dgm_truth(dgm_regime("c", 1, 0, 1)) == 2.0);
}

TEST_CASE("mi monte-carlo standard error") {
  CHECK(mi_monte_carlo_se(0.0, 10) == 0.0);
  CHECK(mi_monte_carlo_se(0.04, 100) == doctest::Approx(0.02));
  CHECK(mi_monte_carlo_se(0.04, 50) / mi_monte_carlo_se(0.04, 100) ==
        doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(mi_monte_carlo_se(-0.1, 10), Error);
}

TEST_CASE("toy oracle tracks its analytic targets at reduced size") {
  ToyConfig config;
  config.n_obs = 100;
  config.n_syn = 100;
  config.m = 5;
  config.sigma2 = 2.0;
  config.n_replicates = 4000;
  config.seed = 201;
  const auto report = toy_normal_mean(config);

  CHECK(report.analytic_var ==
        doctest::Approx(2.0 / (100.0 * 5.0) + 1.2 * 2.0 / 100.0).epsilon(1e-12));
  CHECK(report.mean_vsyn == doctest::Approx(report.analytic_var).epsilon(0.08));
  CHECK(report.empirical_var_point == doctest::Approx(report.analytic_var).epsilon(0.15));
  CHECK(report.mean_rubin - report.mean_vsyn ==
        doctest::Approx(2.0 * 2.0 / 100.0).epsilon(1e-9));
  CHECK(report.max_identity_error < 1e-15);
  CHECK(std::abs(report.negative_frequency - report.prob_negative) < 0.03);
}

TEST_CASE("study reports are identical across thread counts") {
  StudyConfig config;
  config.label = "tiny";
  config.n_obs = 120;
  config.n_syn = 80;
  config.m_initial = 6;
  config.n_replicates = 12;
  config.seed = 202;
  config.estimators = EstimatorSet::mi;

  config.threads = 1;
  const auto serial = run_study(config);
  config.threads = 2;
  const auto threaded = run_study(config);

  // estimator statistics are bit-identical; the config echo differs only in
  // the requested thread count
  const auto a = study_report_to_json(serial, false)["estimators"].dump();
  const auto b = study_report_to_json(threaded, false)["estimators"].dump();
  CHECK(a == b);
}

TEST_CASE("study with both estimators produces sane aggregates") {
  StudyConfig config;
  config.label = "smoke";
  config.n_obs = 150;
  config.n_syn = 150;
  config.m_initial = 8;
  config.n_replicates = 30;
  config.seed = 203;
  config.n_boot = 30;
  config.estimators = EstimatorSet::both;

  const auto report = run_study(config);
  REQUIRE(report.estimators.size() == 2);
  for (const auto& er : report.estimators) {
    CHECK(er.n_used == 30);
    CHECK(std::abs(er.bias) < 1.0);
    CHECK(er.empirical_se > 0.0);
    CHECK(er.z_coverage >= 0.0);
    CHECK(er.z_coverage <= 100.0);
  }
  const auto& mi = report.estimators[0];
  CHECK(mi.mean_m >= 8.0);
  CHECK(mi.max_m >= 8.0);
}

TEST_CASE("missing-data study replicates run end to end") {
  StudyConfig config;
  config.label = "mcar-smoke";
  config.n_obs = 150;
  config.n_syn = 100;
  config.m_initial = 6;
  config.pi = 0.1;
  config.chain_iterations = 3;
  config.n_replicates = 10;
  config.seed = 204;
  const auto report = run_study(config);
  REQUIRE(report.estimators.size() == 1);
  CHECK(report.estimators[0].name == "mi+chained");
  CHECK(report.estimators[0].n_used == 10);
}

TEST_CASE("abb variant swaps the first confounder family") {
  StudyConfig config;
  config.label = "variant-smoke";
  config.n_obs = 150;
  config.n_syn = 100;
  config.m_initial = 6;
  config.n_replicates = 8;
  config.seed = 205;
  const auto report = abb_variant_study(config);
  CHECK(report.config.l0_family == ModelFamily::abb);
  CHECK(report.config.label == "variant-smoke-abb");
  CHECK(report.estimators[0].n_used == 8);
}

TEST_CASE("the mc estimator refuses incomplete-data studies") {
  StudyConfig config;
  config.pi = 0.2;
  config.estimators = EstimatorSet::mc_bootstrap;
  CHECK_THROWS_AS(run_study(config), Error);
}

TEST_CASE("report table formatting carries the headline columns") {
  StudyConfig config;
  config.label = "fmt";
  config.n_obs = 120;
  config.n_syn = 80;
  config.m_initial = 5;
  config.n_replicates = 6;
  config.seed = 206;
  const auto report = run_study(config);
  const auto table = format_report_table(report);
  CHECK(table.find("bias") != std::string::npos);
  CHECK(table.find("emp.SE") != std::string::npos);
  CHECK(table.find("fmt/mi") != std::string::npos);

  ToyConfig toy;
  toy.n_replicates = 200;
  const auto toy_text = format_toy_report(toy_normal_mean(toy));
  CHECK(toy_text.find("analytic Var(point)") != std::string::npos);
}
