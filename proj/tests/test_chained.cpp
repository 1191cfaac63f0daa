#include <doctest.h>

#include <cmath>

#include "gformula/chained.hpp"
#include "gformula/error.hpp"
#include "gformula/simstudy.hpp"
#include "helpers.hpp"

using namespace gformula;

namespace {

const std::vector<std::string>& affected() {
  static const std::vector<std::string> cols{"L1", "A1", "L2", "A2", "Y"};
  return cols;
}

}  // namespace

TEST_CASE("complete input passes through as identical copies") {
  RngStream rng(70);
  const auto table = generate_dgm(120, rng);
  const auto completed = chained_impute(table, {}, 3, RngStream(71));
  REQUIRE(completed.size() == 3);
  for (const auto& copy : completed) {
    REQUIRE(copy.n_rows() == table.n_rows());
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
      for (std::size_t c = 0; c < table.n_cols(); ++c) {
        CHECK(copy.cell(r, c) == table.cell(r, c));
        CHECK(copy.observed(r, c));
      }
    }
  }
}

TEST_CASE("observed cells are never altered and nothing stays missing") {
  RngStream rng(72);
  const auto table = generate_dgm(400, rng);
  RngStream mcar(73);
  const auto masked = apply_mcar(table, 0.3, affected(), mcar);
  REQUIRE(masked.n_missing_cells() > 0);

  ChainConfig config;
  config.n_iterations = 3;
  const auto completed = chained_impute(masked, config, 2, RngStream(74), 2);
  for (const auto& done : completed) {
    CHECK(done.n_missing_cells() == 0);
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
      for (std::size_t c = 0; c < table.n_cols(); ++c) {
        if (masked.observed(r, c)) {
          CHECK(done.cell(r, c) == masked.cell(r, c));
        }
      }
    }
  }
  // binary columns remain binary after imputation
  for (const auto& done : completed) {
    for (std::size_t r = 0; r < done.n_rows(); ++r) {
      CHECK((done.cell(r, 3) == 0.0 || done.cell(r, 3) == 1.0));
      CHECK((done.cell(r, 5) == 0.0 || done.cell(r, 5) == 1.0));
    }
  }
}

TEST_CASE("mcar masking hits the target rate") {
  RngStream rng(75);
  const auto table = generate_dgm(4000, rng);

  RngStream zero(76);
  const auto untouched = apply_mcar(table, 0.0, affected(), zero);
  CHECK(untouched.n_missing_cells() == 0);

  RngStream half(77);
  const auto masked = apply_mcar(table, 0.5, affected(), half);
  const double cells = 5.0 * 4000.0;
  const double rate = static_cast<double>(masked.n_missing_cells()) / cells;
  const double se = std::sqrt(0.5 * 0.5 / cells);
  CHECK(std::abs(rate - 0.5) < 3.0 * se);

  // complete-row fraction (1-pi)^5 = 0.03125
  std::size_t complete_rows = 0;
  for (std::size_t r = 0; r < masked.n_rows(); ++r) {
    bool complete = true;
    for (std::size_t c = 0; c < masked.n_cols(); ++c) {
      complete = complete && masked.observed(r, c);
    }
    complete_rows += complete ? 1 : 0;
  }
  const double fraction = static_cast<double>(complete_rows) / 4000.0;
  const double se_frac = std::sqrt(0.03125 * (1 - 0.03125) / 4000.0);
  CHECK(std::abs(fraction - 0.03125) < 4.0 * se_frac);

  CHECK_THROWS_AS(apply_mcar(table, 1.0, affected(), half), Error);
}

TEST_CASE("mcar masking leaves complete cases distributionally intact") {
  RngStream rng(95);
  const auto table = generate_dgm(60000, rng);
  RngStream mcar(96);
  const auto masked = apply_mcar(table, 0.3, affected(), mcar);

  const auto column_moments = [](const LongitudinalTable& t, std::size_t col, bool complete_only) {
    double sum = 0.0;
    double sq = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < t.n_rows(); ++r) {
      if (complete_only) {
        bool complete = true;
        for (std::size_t c = 0; c < t.n_cols(); ++c) {
          complete = complete && t.observed(r, c);
        }
        if (!complete) {
          continue;
        }
      }
      sum += t.cell(r, col);
      sq += t.cell(r, col) * t.cell(r, col);
      ++n;
    }
    const double mean = sum / static_cast<double>(n);
    return std::make_tuple(mean, sq / static_cast<double>(n) - mean * mean, n);
  };

  // about (1-0.3)^5 = 17% of rows stay complete; their distribution matches
  // the full sample because the masking ignores the values
  for (const std::size_t col : {0u, 2u, 6u}) {
    const auto [mean_all, var_all, n_all] = column_moments(table, col, false);
    const auto [mean_cc, var_cc, n_cc] = column_moments(masked, col, true);
    CHECK(n_cc > 8000);
    const double se = std::sqrt(var_all / static_cast<double>(n_cc));
    CHECK(std::abs(mean_cc - mean_all) < 4.0 * se);
    CHECK(var_cc == doctest::Approx(var_all).epsilon(0.08));
  }
}

TEST_CASE("monotone missingness matches a one-pass sequential oracle in distribution") {
  // Only the outcome of a bivariate chain is missing: the chained sweeps and
  // a single fit-draw-impute pass target the same predictive law.
  const Schema schema({{"x", ColumnKind::continuous, ColumnRole::baseline_confounder, 0},
                       {"y", ColumnKind::continuous, ColumnRole::outcome, 1}});
  const std::size_t n = 500;
  RngStream rng(78);
  LongitudinalTable table(schema, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.normal();
    table.set_cell(i, 0, x);
    table.set_cell(i, 1, 1.0 + 2.0 * x + rng.normal());
  }
  std::vector<std::size_t> holes;
  for (std::size_t i = 0; i < n; i += 3) {
    holes.push_back(i);
    table.set_missing(i, 1);
  }
  CHECK(missingness_pattern(table) == MissingnessPattern::monotone);

  const std::size_t m = 300;
  const auto completed = chained_impute(table, {}, m, RngStream(79), 2);

  // test-only oracle: fit y ~ x on observed rows, posterior draw, impute once
  const DesignSpec spec{"y", {"x"}, ModelFamily::normal_linear};
  const auto observed_rows = [&table](std::size_t r) { return table.observed(r, 1); };
  const auto model = fit(spec, table, observed_rows);
  RngStream oracle_rng(80);
  std::vector<double> oracle_values;
  for (std::size_t rep = 0; rep < m; ++rep) {
    const auto draw = posterior_draw(model, oracle_rng);
    for (const std::size_t r : holes) {
      Eigen::VectorXd x(1);
      x << table.cell(r, 0);
      oracle_values.push_back(predictive_draw(draw, x, oracle_rng));
    }
  }
  std::vector<double> chained_values;
  for (const auto& done : completed) {
    for (const std::size_t r : holes) {
      chained_values.push_back(done.cell(r, 1));
    }
  }

  const auto moments = [](const std::vector<double>& xs) {
    double mean = 0.0;
    for (const double v : xs) mean += v;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (const double v : xs) var += (v - mean) * (v - mean);
    var /= static_cast<double>(xs.size() - 1);
    return std::make_pair(mean, var);
  };
  const auto [mean_oracle, var_oracle] = moments(oracle_values);
  const auto [mean_chain, var_chain] = moments(chained_values);
  // both paths share the hole covariates, so the mean difference is pure
  // draw/noise variation: sd about 0.008 here, tolerance 6 sigma
  CHECK(std::abs(mean_chain - mean_oracle) < 0.05);
  CHECK(var_chain == doctest::Approx(var_oracle).epsilon(0.15));
}

TEST_CASE("two-stage pipeline with no missing data reduces to synthetic imputation") {
  RngStream rng(81);
  const auto table = generate_dgm(250, rng);
  const auto spec = auto_sequential_spec(dgm_schema(), ModelFamily::normal_linear);
  const std::vector<Regime> regimes{dgm_regime("all-1", 1, 1, 1), dgm_regime("all-0", 0, 0, 0)};

  const auto direct = impute_synthetic(table, spec, regimes, 10, 250, RngStream(82));
  const auto staged = two_stage_synthetic(table, {}, spec, regimes, 10, 250, RngStream(82));
  REQUIRE(direct.records.size() == staged.records.size());
  for (std::size_t m = 0; m < direct.records.size(); ++m) {
    CHECK(direct.records[m].block_mean[0] == staged.records[m].block_mean[0]);
    CHECK(direct.records[m].block_mean[1] == staged.records[m].block_mean[1]);
    CHECK(direct.records[m].block_mean_variance[0] == staged.records[m].block_mean_variance[0]);
  }
}

TEST_CASE("two-stage pipeline handles real missingness end to end") {
  RngStream rng(83);
  const auto table = generate_dgm(300, rng);
  RngStream mcar(84);
  const auto masked = apply_mcar(table, 0.1, affected(), mcar);
  const auto spec = auto_sequential_spec(dgm_schema(), ModelFamily::normal_linear);
  const std::vector<Regime> regimes{dgm_regime("all-1", 1, 1, 1), dgm_regime("all-0", 0, 0, 0)};

  ChainConfig chain;
  chain.n_iterations = 5;
  TwoStageImputer engine(masked, chain, spec, regimes, 300, RngStream(85), {});
  auto run = run_imputations(engine, 25, false, 2);
  const auto pooled = pool_contrast(run, engine, 0, 1, ContrastRoute::direct, 20);
  CHECK(std::abs(pooled.point - 3.0) < 1.2);
  CHECK(pooled.variance > 0.0);

  // stage 2 never rewrites stage-1 rows: originals in retained sets match
  MiOptions keep;
  keep.retain_datasets = true;
  TwoStageImputer keeper(masked, chain, spec, regimes, 300, RngStream(85), keep);
  auto kept = run_imputations(keeper, 2, true);
  for (const auto& dataset : kept.retained) {
    for (std::size_t r = 0; r < masked.n_rows(); ++r) {
      for (std::size_t c = 0; c < masked.n_cols(); ++c) {
        if (masked.observed(r, c)) {
          CHECK(dataset.cell(r, c) == masked.cell(r, c));
        }
      }
    }
  }
}

TEST_CASE("heavy missingness converges with long chains") {
  RngStream rng(86);
  const auto table = generate_dgm(200, rng);
  RngStream mcar(87);
  const auto masked = apply_mcar(table, 0.5, affected(), mcar);
  ChainConfig config;
  config.n_iterations = 50;
  const auto completed = chained_impute(masked, config, 2, RngStream(88), 2);
  CHECK(completed.size() == 2);
  CHECK(completed[0].n_missing_cells() == 0);
}

TEST_CASE("chain trace records sweep means") {
  RngStream rng(89);
  const auto table = generate_dgm(150, rng);
  RngStream mcar(90);
  const auto masked = apply_mcar(table, 0.2, {"L1", "Y"}, mcar);
  ChainConfig config;
  config.n_iterations = 4;
  ChainTrace trace;
  chained_impute(masked, config, 2, RngStream(91), 1, &trace);
  CHECK(trace.rows.size() == 2 * 4 * 2);  // m x iterations x incomplete variables
  const auto csv = trace.to_csv();
  CHECK(csv.find("m,iteration,variable,mean_imputed") == 0);
  CHECK(csv.find("L1") != std::string::npos);
}

TEST_CASE("a fully missing variable is rejected") {
  auto table = testing_support::example_table();
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    table.set_missing(r, 2);
  }
  CHECK_THROWS_AS(chained_impute(table, {}, 2, RngStream(92)), Error);
}
