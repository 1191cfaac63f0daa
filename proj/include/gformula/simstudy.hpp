#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gformula/chained.hpp"
#include "gformula/mi.hpp"
#include "gformula/models.hpp"
#include "gformula/rng.hpp"
#include "gformula/table.hpp"

namespace gformula {

// Columns L0, A0, L1, A1, L2, A2, Y with the standard three-period layout.
Schema dgm_schema();

// L0 ~ N(0,1); A0 ~ Bern(expit(L0)); L1 ~ N(A0+L0,1); A1 ~ Bern(expit(A0+L1));
// L2 ~ N(A1+L1,1); A2 ~ Bern(expit(A1+L2)); Y ~ N(A2+L2,1).
LongitudinalTable generate_dgm(std::size_t n, RngStream& rng);

Regime dgm_regime(const std::string& name, double a0, double a1, double a2);

// E(Y^{a0,a1,a2}) = a0 + a1 + a2 under the generator above.
double dgm_truth(const Regime& regime);

enum class EstimatorSet { mi, mc_bootstrap, both };

struct StudyConfig {
  std::string label = "study";
  std::size_t n_obs = 500;
  std::size_t n_syn = 500;
  std::size_t m_initial = 50;
  double pi = 0.0;  // MCAR probability on L1, A1, L2, A2, Y
  std::size_t n_replicates = 1000;
  EstimatorSet estimators = EstimatorSet::mi;
  std::uint64_t seed = 1;
  double truth = 3.0;  // analytic, never estimated
  int max_batches = 20;
  int chain_iterations = 5;
  ModelFamily l0_family = ModelFamily::normal_linear;  // MI pipeline first model
  ContrastRoute contrast_route = ContrastRoute::direct;
  std::size_t n_boot = 200;
  unsigned threads = 0;
};

struct EstimatorReport {
  std::string name;
  double bias = 0.0;
  double empirical_se = 0.0;
  double mean_estimated_se = 0.0;
  double t_coverage = 0.0;        // percent
  double z_coverage = 0.0;        // percent
  double rubin_z_coverage = 0.0;  // percent; MI only, shows Rubin's-rule bias here
  double mean_m = 0.0;
  double max_m = 0.0;
  std::size_t negative_vsyn_count = 0;
  std::size_t n_failed = 0;
  std::size_t n_used = 0;
};

struct StudyReport {
  StudyConfig config;
  std::vector<EstimatorReport> estimators;
  double wall_seconds = 0.0;  // excluded from determinism comparisons
};

StudyReport run_study(const StudyConfig& config);

// Scenario-4-style study with the first confounder imputed via the
// approximate Bayesian bootstrap.
StudyReport abb_variant_study(StudyConfig config);

// Monte-Carlo SE of an MI point estimate: sqrt(B/M).
double mi_monte_carlo_se(double between, std::size_t m);

// Known-variance normal-mean oracle: draws mu_m ~ N(Ybar, sigma2/n_obs),
// imputes n_syn outcomes per imputation, and compares the synthetic variance
// rule against the analytic variance sigma2/(n_syn*M) + (1+1/M)*sigma2/n_obs.
struct ToyConfig {
  std::size_t n_obs = 100;
  std::size_t n_syn = 100;
  std::size_t m = 5;
  double sigma2 = 1.0;
  std::size_t n_replicates = 10000;
  std::uint64_t seed = 1;
};

struct ToyReport {
  ToyConfig config;
  double empirical_var_point = 0.0;
  double mean_vsyn = 0.0;
  double analytic_var = 0.0;
  double mean_rubin = 0.0;
  double negative_frequency = 0.0;      // fraction of replicates with V_syn < 0
  double max_identity_error = 0.0;      // max |rubin - synthetic - 2V| over replicates
  double prob_negative = 0.0;           // chi-square bound, exact threshold
  double prob_negative_approx = 0.0;    // chi-square bound, M/(r+1) shorthand
};

ToyReport toy_normal_mean(const ToyConfig& config);

std::string format_report_table(const StudyReport& report);
std::string format_toy_report(const ToyReport& report);

}  // namespace gformula
