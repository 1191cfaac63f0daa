#include "gformula/simstudy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "gformula/error.hpp"
#include "gformula/mc.hpp"
#include "gformula/parallel.hpp"
#include "gformula/pooling.hpp"

namespace gformula {

namespace {

double mean_of(const std::vector<double>& xs) {
  double sum = 0.0;
  for (const double x : xs) {
    sum += x;
  }
  return xs.empty() ? 0.0 : sum / static_cast<double>(xs.size());
}

double sample_sd(const std::vector<double>& xs) {
  if (xs.size() < 2) {
    return 0.0;
  }
  const double mu = mean_of(xs);
  double ss = 0.0;
  for (const double x : xs) {
    const double d = x - mu;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

struct MiReplicate {
  double point = 0.0;
  double se = 0.0;
  bool t_covered = false;
  bool z_covered = false;
  bool rubin_z_covered = false;
  std::size_t m_used = 0;
  bool negative_vsyn = false;
  bool ok = false;
};

struct McReplicate {
  double point = 0.0;
  double se = 0.0;
  bool z_covered = false;
  bool ok = false;
};

const std::vector<std::string>& mcar_columns() {
  static const std::vector<std::string> cols{"L1", "A1", "L2", "A2", "Y"};
  return cols;
}

}  // namespace

Schema dgm_schema() {
  return Schema({
      {"L0", ColumnKind::continuous, ColumnRole::baseline_confounder, 0},
      {"A0", ColumnKind::binary, ColumnRole::treatment, 0},
      {"L1", ColumnKind::continuous, ColumnRole::timevarying_confounder, 1},
      {"A1", ColumnKind::binary, ColumnRole::treatment, 1},
      {"L2", ColumnKind::continuous, ColumnRole::timevarying_confounder, 2},
      {"A2", ColumnKind::binary, ColumnRole::treatment, 2},
      {"Y", ColumnKind::continuous, ColumnRole::outcome, 3},
  });
}

LongitudinalTable generate_dgm(std::size_t n, RngStream& rng) {
  if (n < 1) {
    throw Error::validation("generate_dgm requires n >= 1");
  }
  LongitudinalTable table(dgm_schema(), n);
  for (std::size_t i = 0; i < n; ++i) {
    const double l0 = rng.normal();
    const double a0 = rng.bernoulli(expit(l0)) ? 1.0 : 0.0;
    const double l1 = a0 + l0 + rng.normal();
    const double a1 = rng.bernoulli(expit(a0 + l1)) ? 1.0 : 0.0;
    const double l2 = a1 + l1 + rng.normal();
    const double a2 = rng.bernoulli(expit(a1 + l2)) ? 1.0 : 0.0;
    const double y = a2 + l2 + rng.normal();
    table.set_cell(i, 0, l0);
    table.set_cell(i, 1, a0);
    table.set_cell(i, 2, l1);
    table.set_cell(i, 3, a1);
    table.set_cell(i, 4, l2);
    table.set_cell(i, 5, a2);
    table.set_cell(i, 6, y);
  }
  return table;
}

Regime dgm_regime(const std::string& name, double a0, double a1, double a2) {
  Regime r;
  r.name = name;
  r.assignments = {{"A0", a0}, {"A1", a1}, {"A2", a2}};
  return r;
}

double dgm_truth(const Regime& regime) {
  double sum = 0.0;
  for (const auto& [name, value] : regime.assignments) {
    sum += value;
  }
  return sum;
}

double mi_monte_carlo_se(double between, std::size_t m) {
  if (m < 1) {
    throw Error::validation("mi_monte_carlo_se requires m >= 1");
  }
  if (between < 0.0) {
    throw Error::validation("between-imputation variance cannot be negative");
  }
  return std::sqrt(between / static_cast<double>(m));
}

StudyReport run_study(const StudyConfig& config) {
  if (config.n_replicates < 1) {
    throw Error::validation("run_study requires n_replicates >= 1");
  }
  const auto start = std::chrono::steady_clock::now();

  const bool run_mi =
      config.estimators == EstimatorSet::mi || config.estimators == EstimatorSet::both;
  const bool run_mc =
      config.estimators == EstimatorSet::mc_bootstrap || config.estimators == EstimatorSet::both;
  if (run_mc && config.pi > 0.0) {
    throw Error::validation("the Monte-Carlo bootstrap estimator requires complete data");
  }

  const Regime regime_a = dgm_regime("all-1", 1, 1, 1);
  const Regime regime_b = dgm_regime("all-0", 0, 0, 0);
  const std::vector<Regime> regimes{regime_a, regime_b};

  const Schema schema = dgm_schema();
  const SequentialModelSpec mi_spec = auto_sequential_spec(schema, config.l0_family);
  const SequentialModelSpec mc_spec = auto_sequential_spec(schema, ModelFamily::empirical);

  ChainConfig chain;
  chain.n_iterations = config.chain_iterations;

  std::vector<MiReplicate> mi_reps(config.n_replicates);
  std::vector<McReplicate> mc_reps(config.n_replicates);

  const RngStream root(config.seed);
  parallel_for(config.n_replicates, config.threads, [&](std::size_t r) {
    RngStream rep = root.split(r);
    RngStream data_stream = rep.split(0);
    LongitudinalTable table = generate_dgm(config.n_obs, data_stream);

    if (run_mi) {
      MiReplicate& out = mi_reps[r];
      try {
        MiOptions options;
        PooledResult pooled;
        ImputationRun run;
        if (config.pi > 0.0) {
          RngStream mcar_stream = rep.split(1);
          const LongitudinalTable masked =
              apply_mcar(table, config.pi, mcar_columns(), mcar_stream);
          TwoStageImputer engine(masked, chain, mi_spec, regimes, config.n_syn, rep.split(2),
                                 options);
          run = run_imputations(engine, config.m_initial, false);
          pooled = pool_contrast(run, engine, 0, 1, config.contrast_route, config.max_batches);
        } else {
          SyntheticImputer engine(table, mi_spec, regimes, config.n_syn, rep.split(2), options);
          run = run_imputations(engine, config.m_initial, false);
          pooled = pool_contrast(run, engine, 0, 1, config.contrast_route, config.max_batches);
        }
        out.point = pooled.point;
        out.se = pooled.se;
        out.t_covered = pooled.ci_t.first <= config.truth && config.truth <= pooled.ci_t.second;
        out.z_covered = pooled.ci_z.first <= config.truth && config.truth <= pooled.ci_z.second;
        out.m_used = pooled.m_used;
        out.negative_vsyn = pooled.negative_initial;
        const PooledResult rubin = pool_rubin(contrast_stats(run, 0, 1));
        out.rubin_z_covered =
            rubin.ci_z.first <= config.truth && config.truth <= rubin.ci_z.second;
        out.ok = true;
      } catch (const Error&) {
        out.ok = false;
      }
    }

    if (run_mc) {
      McReplicate& out = mc_reps[r];
      try {
        const McEstimate est = bootstrap_contrast_mc(table, mc_spec, regime_a, regime_b,
                                                     config.n_syn, config.n_boot, rep.split(3));
        out.point = est.point;
        out.se = est.bootstrap_se.value_or(0.0);
        out.z_covered = est.ci && est.ci->first <= config.truth && config.truth <= est.ci->second;
        out.ok = true;
      } catch (const Error&) {
        out.ok = false;
      }
    }
  });

  StudyReport report;
  report.config = config;

  const auto aggregate_mi = [&](const std::vector<MiReplicate>& reps) {
    EstimatorReport er;
    er.name = config.pi > 0.0 ? "mi+chained" : "mi";
    std::vector<double> points;
    std::vector<double> ses;
    std::size_t t_cov = 0;
    std::size_t z_cov = 0;
    std::size_t rubin_cov = 0;
    double m_sum = 0.0;
    double m_max = 0.0;
    for (const auto& rep : reps) {
      if (!rep.ok) {
        ++er.n_failed;
        continue;
      }
      points.push_back(rep.point);
      ses.push_back(rep.se);
      t_cov += rep.t_covered ? 1 : 0;
      z_cov += rep.z_covered ? 1 : 0;
      rubin_cov += rep.rubin_z_covered ? 1 : 0;
      m_sum += static_cast<double>(rep.m_used);
      m_max = std::max(m_max, static_cast<double>(rep.m_used));
      er.negative_vsyn_count += rep.negative_vsyn ? 1 : 0;
    }
    er.n_used = points.size();
    if (er.n_used == 0) {
      throw Error::numeric("every MI replicate failed");
    }
    const double n = static_cast<double>(er.n_used);
    er.bias = mean_of(points) - config.truth;
    er.empirical_se = sample_sd(points);
    er.mean_estimated_se = mean_of(ses);
    er.t_coverage = 100.0 * static_cast<double>(t_cov) / n;
    er.z_coverage = 100.0 * static_cast<double>(z_cov) / n;
    er.rubin_z_coverage = 100.0 * static_cast<double>(rubin_cov) / n;
    er.mean_m = m_sum / n;
    er.max_m = m_max;
    return er;
  };

  const auto aggregate_mc = [&](const std::vector<McReplicate>& reps) {
    EstimatorReport er;
    er.name = "mc+bootstrap";
    std::vector<double> points;
    std::vector<double> ses;
    std::size_t z_cov = 0;
    for (const auto& rep : reps) {
      if (!rep.ok) {
        ++er.n_failed;
        continue;
      }
      points.push_back(rep.point);
      ses.push_back(rep.se);
      z_cov += rep.z_covered ? 1 : 0;
    }
    er.n_used = points.size();
    if (er.n_used == 0) {
      throw Error::numeric("every MC replicate failed");
    }
    er.bias = mean_of(points) - config.truth;
    er.empirical_se = sample_sd(points);
    er.mean_estimated_se = mean_of(ses);
    er.z_coverage = 100.0 * static_cast<double>(z_cov) / static_cast<double>(er.n_used);
    return er;
  };

  if (run_mi) {
    report.estimators.push_back(aggregate_mi(mi_reps));
  }
  if (run_mc) {
    report.estimators.push_back(aggregate_mc(mc_reps));
  }
  for (const auto& er : report.estimators) {
    if (er.n_failed * 100 > config.n_replicates) {
      throw Error::numeric(er.name + ": " + std::to_string(er.n_failed) + " of " +
                           std::to_string(config.n_replicates) + " replicates failed (>1%)");
    }
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

StudyReport abb_variant_study(StudyConfig config) {
  config.l0_family = ModelFamily::abb;
  if (config.label.find("abb") == std::string::npos) {
    config.label += "-abb";
  }
  return run_study(config);
}

ToyReport toy_normal_mean(const ToyConfig& config) {
  if (config.sigma2 <= 0.0) {
    throw Error::validation("toy oracle requires sigma2 > 0");
  }
  if (config.m < 2 || config.n_obs < 1 || config.n_syn < 1 || config.n_replicates < 1) {
    throw Error::validation("invalid toy configuration");
  }
  const double sigma = std::sqrt(config.sigma2);
  const double n_obs = static_cast<double>(config.n_obs);
  const double n_syn = static_cast<double>(config.n_syn);
  const double md = static_cast<double>(config.m);
  const double within = config.sigma2 / n_syn;  // known sigma2: exact within-variance

  std::vector<double> points(config.n_replicates);
  std::vector<double> vsyns(config.n_replicates);
  std::vector<double> rubins(config.n_replicates);
  std::vector<std::uint8_t> negative(config.n_replicates, 0);
  std::vector<double> identity_err(config.n_replicates, 0.0);

  const RngStream root(config.seed);
  parallel_for(config.n_replicates, 0, [&](std::size_t rep) {
    RngStream stream = root.split(rep);
    double sum = 0.0;
    for (std::size_t i = 0; i < config.n_obs; ++i) {
      sum += sigma * stream.normal();
    }
    const double ybar = sum / n_obs;

    std::vector<double> mu_m(config.m);
    for (std::size_t m = 0; m < config.m; ++m) {
      const double mu_tilde = ybar + sigma / std::sqrt(n_obs) * stream.normal();
      double block = 0.0;
      for (std::size_t i = 0; i < config.n_syn; ++i) {
        block += mu_tilde + sigma * stream.normal();
      }
      mu_m[m] = block / n_syn;
    }

    const double point = mean_of(mu_m);
    double ss = 0.0;
    for (const double v : mu_m) {
      const double d = v - point;
      ss += d * d;
    }
    const double between = ss / (md - 1.0);
    const double vsyn = synthetic_variance(between, within, config.m);
    const double rubin = rubin_variance(between, within, config.m);
    points[rep] = point;
    vsyns[rep] = vsyn;
    rubins[rep] = rubin;
    negative[rep] = vsyn < 0.0 ? 1 : 0;
    identity_err[rep] = std::abs(rubin - vsyn - 2.0 * within);
  });

  ToyReport report;
  report.config = config;
  const double sd = sample_sd(points);
  report.empirical_var_point = sd * sd;
  report.mean_vsyn = mean_of(vsyns);
  report.mean_rubin = mean_of(rubins);
  report.analytic_var = config.sigma2 / (n_syn * md) + (1.0 + 1.0 / md) * config.sigma2 / n_obs;
  std::size_t neg = 0;
  for (const auto flag : negative) {
    neg += flag;
  }
  report.negative_frequency = static_cast<double>(neg) / static_cast<double>(config.n_replicates);
  report.max_identity_error = *std::max_element(identity_err.begin(), identity_err.end());
  report.prob_negative = prob_negative_vsyn(config.m, n_syn, n_obs);
  report.prob_negative_approx = prob_negative_vsyn_approx(config.m, n_syn, n_obs);
  return report;
}

std::string format_report_table(const StudyReport& report) {
  char line[256];
  std::string out;
  std::snprintf(line, sizeof(line), "%-14s %5s %8s %8s %8s %7s %7s %7s %6s %5s %5s\n",
                "scenario", "M", "bias", "emp.SE", "est.SE", "t-cov", "z-cov", "rubinZ", "meanM",
                "maxM", "negV");
  out += line;
  for (const auto& er : report.estimators) {
    std::snprintf(line, sizeof(line),
                  "%-14s %5zu %8.3f %8.3f %8.3f %7.1f %7.1f %7.1f %6.1f %5.0f %5zu\n",
                  (report.config.label + "/" + er.name).c_str(), report.config.m_initial, er.bias,
                  er.empirical_se, er.mean_estimated_se, er.t_coverage, er.z_coverage,
                  er.rubin_z_coverage, er.mean_m, er.max_m, er.negative_vsyn_count);
    out += line;
  }
  std::snprintf(line, sizeof(line),
                "(n_obs=%zu, n_syn=%zu, pi=%.2f, replicates=%zu, seed=%llu, %.1fs)\n",
                report.config.n_obs, report.config.n_syn, report.config.pi,
                report.config.n_replicates,
                static_cast<unsigned long long>(report.config.seed), report.wall_seconds);
  out += line;
  return out;
}

std::string format_toy_report(const ToyReport& report) {
  char line[256];
  std::string out;
  std::snprintf(line, sizeof(line), "toy normal-mean oracle (n_obs=%zu, n_syn=%zu, M=%zu, %zu replicates)\n",
                report.config.n_obs, report.config.n_syn, report.config.m,
                report.config.n_replicates);
  out += line;
  std::snprintf(line, sizeof(line), "  empirical Var(point)   %.6f\n", report.empirical_var_point);
  out += line;
  std::snprintf(line, sizeof(line), "  mean V_syn             %.6f\n", report.mean_vsyn);
  out += line;
  std::snprintf(line, sizeof(line), "  analytic Var(point)    %.6f\n", report.analytic_var);
  out += line;
  std::snprintf(line, sizeof(line), "  mean Rubin variance    %.6f\n", report.mean_rubin);
  out += line;
  std::snprintf(line, sizeof(line), "  P(V_syn<0) empirical   %.4f\n", report.negative_frequency);
  out += line;
  std::snprintf(line, sizeof(line), "  P(V_syn<0) chi-square  %.4f (shorthand %.4f)\n",
                report.prob_negative, report.prob_negative_approx);
  out += line;
  std::snprintf(line, sizeof(line), "  max identity error     %.3e\n", report.max_identity_error);
  out += line;
  return out;
}

}  // namespace gformula
