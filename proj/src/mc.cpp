#include "gformula/mc.hpp"

#include <cmath>

#include "gformula/error.hpp"
#include "gformula/parallel.hpp"

namespace gformula {

namespace {

double mean_of(const std::vector<double>& xs) {
  double sum = 0.0;
  for (const double x : xs) {
    sum += x;
  }
  return sum / static_cast<double>(xs.size());
}

double sample_variance(const std::vector<double>& xs) {
  const double mu = mean_of(xs);
  double ss = 0.0;
  for (const double x : xs) {
    const double d = x - mu;
    ss += d * d;
  }
  return ss / static_cast<double>(xs.size() - 1);
}

void check_complete_original(const LongitudinalTable& table) {
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    if (!table.original(r)) {
      continue;
    }
    for (std::size_t c = 0; c < table.n_cols(); ++c) {
      if (table.missing(r, c)) {
        throw Error::validation(
            "Monte-Carlo estimator requires complete data; found a missing cell in column " +
            table.schema().column(c).name);
      }
    }
  }
}

}  // namespace

std::vector<double> simulate_regime(const SequentialModelSpec& spec,
                                    const std::vector<FittedModel>& fits, const Regime& regime,
                                    std::size_t n_syn, RngStream& rng) {
  if (n_syn < 1) {
    throw Error::validation("simulate_regime requires n_syn >= 1");
  }
  if (fits.size() != spec.models.size()) {
    throw Error::validation("fit list does not match the sequential model spec");
  }
  if (spec.models.empty()) {
    throw Error::validation("empty sequential model spec");
  }
  for (std::size_t k = 0; k < fits.size(); ++k) {
    if (fits[k].family != spec.models[k].family) {
      throw Error::validation("fit family mismatch at model for " + spec.models[k].target);
    }
  }

  // Resolve every column name mentioned by the spec or the regime to a slot
  // in a flat working row; the trajectory is simulated into that row.
  struct Step {
    std::size_t target;
    std::vector<std::size_t> predictors;
    ParameterDraw draw;
  };
  std::vector<std::string> names;
  auto slot_of = [&names](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) {
        return i;
      }
    }
    names.push_back(name);
    return names.size() - 1;
  };

  std::vector<Step> steps;
  steps.reserve(spec.models.size());
  for (std::size_t k = 0; k < spec.models.size(); ++k) {
    Step s;
    s.target = slot_of(spec.models[k].target);
    for (const auto& p : spec.models[k].predictors) {
      s.predictors.push_back(slot_of(p));
    }
    s.draw = mle_draw(fits[k]);
    steps.push_back(std::move(s));
  }
  std::vector<std::pair<std::size_t, double>> treatment_slots;
  for (const auto& [name, value] : regime.assignments) {
    treatment_slots.emplace_back(slot_of(name), value);
  }

  // Every predictor must be a treatment or an earlier target, otherwise the
  // fits are out of time order for this regime.
  {
    std::vector<bool> defined(names.size(), false);
    for (const auto& [slot, value] : treatment_slots) {
      defined[slot] = true;
    }
    for (const auto& step : steps) {
      for (const std::size_t p : step.predictors) {
        if (!defined[p]) {
          throw Error::validation("predictor " + names[p] +
                                  " is not available when its model runs; fits out of time order");
        }
      }
      defined[step.target] = true;
    }
  }

  std::vector<double> outcomes(n_syn);
  std::vector<double> row(names.size(), 0.0);
  Eigen::VectorXd covariates;
  for (std::size_t i = 0; i < n_syn; ++i) {
    for (const auto& [slot, value] : treatment_slots) {
      row[slot] = value;
    }
    double last = 0.0;
    for (const auto& step : steps) {
      covariates.resize(static_cast<Eigen::Index>(step.predictors.size()));
      for (std::size_t j = 0; j < step.predictors.size(); ++j) {
        covariates[static_cast<Eigen::Index>(j)] = row[step.predictors[j]];
      }
      last = predictive_draw(step.draw, covariates, rng);
      row[step.target] = last;
    }
    outcomes[i] = last;  // the outcome model is last in causal order
  }
  return outcomes;
}

McEstimate estimate_contrast_mc(const LongitudinalTable& table, const SequentialModelSpec& spec,
                                const Regime& regime_a, const Regime& regime_b, std::size_t n_syn,
                                RngStream rng, const McOptions& options) {
  check_complete_original(table);
  validate_regime(regime_a, table.schema());
  validate_regime(regime_b, table.schema());
  const auto filter = [&table](std::size_t r) { return table.original(r); };
  const auto fits = fit_sequential(spec, table, filter, options.fit);

  RngStream stream_a = rng.split(1);
  RngStream stream_b = options.common_random_numbers ? rng.split(1) : rng.split(2);
  const auto ya = simulate_regime(spec, fits, regime_a, n_syn, stream_a);
  const auto yb = simulate_regime(spec, fits, regime_b, n_syn, stream_b);

  McEstimate est;
  est.regimes = {regime_a.name, regime_b.name};
  est.n_syn = n_syn;
  est.point = mean_of(ya) - mean_of(yb);
  return est;
}

McEstimate bootstrap_contrast_mc(const LongitudinalTable& table, const SequentialModelSpec& spec,
                                 const Regime& regime_a, const Regime& regime_b,
                                 std::size_t n_syn, std::size_t n_boot, RngStream rng,
                                 const McOptions& options) {
  if (n_boot < 2) {
    throw Error::validation("bootstrap requires n_boot >= 2");
  }
  check_complete_original(table);

  McEstimate est = estimate_contrast_mc(table, spec, regime_a, regime_b, n_syn,
                                        rng.split(0xB00F), options);

  std::vector<std::size_t> original_rows;
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    if (table.original(r)) {
      original_rows.push_back(r);
    }
  }
  const std::size_t n = original_rows.size();

  std::vector<double> replicate(n_boot, 0.0);
  std::vector<std::uint8_t> ok(n_boot, 0);
  parallel_for(n_boot, options.threads, [&](std::size_t b) {
    RngStream stream = rng.split(b);
    std::vector<std::size_t> resample(n);
    for (std::size_t i = 0; i < n; ++i) {
      resample[i] = original_rows[stream.uniform_index(n)];
    }
    try {
      const auto boot_table = table.select_rows(resample);
      const auto result = estimate_contrast_mc(boot_table, spec, regime_a, regime_b, n_syn,
                                               stream.split(1), options);
      replicate[b] = result.point;
      ok[b] = 1;
    } catch (const Error&) {
      ok[b] = 0;
    }
  });

  std::vector<double> points;
  points.reserve(n_boot);
  for (std::size_t b = 0; b < n_boot; ++b) {
    if (ok[b]) {
      points.push_back(replicate[b]);
    }
  }
  est.n_boot = n_boot;
  est.n_boot_failed = n_boot - points.size();
  if (est.n_boot_failed * 10 > n_boot) {
    throw Error::numeric(std::to_string(est.n_boot_failed) + " of " + std::to_string(n_boot) +
                         " bootstrap replicates failed");
  }
  const double se = points.size() >= 2 ? std::sqrt(sample_variance(points)) : 0.0;
  est.bootstrap_se = se;
  est.ci = std::make_pair(est.point - 1.96 * se, est.point + 1.96 * se);
  return est;
}

double mc_standard_error(const std::vector<double>& outcomes_a,
                         const std::vector<double>& outcomes_b) {
  if (outcomes_a.size() < 2 || outcomes_b.size() < 2) {
    throw Error::validation("mc_standard_error requires at least 2 simulated outcomes per regime");
  }
  const double va = sample_variance(outcomes_a) / static_cast<double>(outcomes_a.size());
  const double vb = sample_variance(outcomes_b) / static_cast<double>(outcomes_b.size());
  return std::sqrt(va + vb);
}

}  // namespace gformula
