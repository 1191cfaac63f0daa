#include "gformula/mi.hpp"

#include <cmath>

#include "gformula/error.hpp"
#include "gformula/parallel.hpp"

namespace gformula {

namespace {

void check_original_complete(const LongitudinalTable& table) {
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    if (!table.original(r)) {
      continue;
    }
    for (std::size_t c = 0; c < table.n_cols(); ++c) {
      if (table.missing(r, c)) {
        throw Error::validation("synthetic imputation expects complete original rows; column " +
                                table.schema().column(c).name + " has a missing cell");
      }
    }
  }
}

}  // namespace

namespace detail {

std::vector<std::pair<std::size_t, std::size_t>> augment_blocks(LongitudinalTable& table,
                                                                const std::vector<Regime>& regimes,
                                                                std::size_t n_syn) {
  if (regimes.empty()) {
    throw Error::validation("at least one regime is required");
  }
  std::vector<std::pair<std::size_t, std::size_t>> blocks;
  blocks.reserve(regimes.size());
  for (const auto& regime : regimes) {
    const std::size_t begin = table.n_rows();
    table = augment(table, regime, n_syn);
    blocks.emplace_back(begin, table.n_rows());
  }
  return blocks;
}

ImputationRecord sequential_block_pass(const SequentialModelSpec& spec,
                                       const std::vector<FittedModel>& fits,
                                       const LongitudinalTable& augmented,
                                       const std::vector<std::pair<std::size_t, std::size_t>>& blocks,
                                       bool shared_draws, RngStream& stream,
                                       LongitudinalTable* keep) {
  const auto& schema = augmented.schema();
  const std::size_t outcome = schema.outcome_index();

  struct Step {
    std::size_t target;
    std::vector<std::size_t> predictors;
  };
  std::vector<Step> steps;
  steps.reserve(spec.models.size());
  for (const auto& m : spec.models) {
    Step s;
    s.target = schema.index_of(m.target);
    for (const auto& p : m.predictors) {
      s.predictors.push_back(schema.index_of(p));
    }
    steps.push_back(std::move(s));
  }

  std::vector<ParameterDraw> draws;
  draws.reserve(fits.size());
  if (shared_draws) {
    for (const auto& f : fits) {
      draws.push_back(posterior_draw(f, stream));
    }
  }

  LongitudinalTable working = augmented;
  ImputationRecord record;
  record.block_mean.reserve(blocks.size());
  record.block_mean_variance.reserve(blocks.size());

  Eigen::VectorXd covariates;
  for (const auto& [begin, end] : blocks) {
    if (!shared_draws) {
      draws.clear();
      for (const auto& f : fits) {
        draws.push_back(posterior_draw(f, stream));
      }
    }
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t r = begin; r < end; ++r) {
      for (std::size_t k = 0; k < steps.size(); ++k) {
        const auto& step = steps[k];
        covariates.resize(static_cast<Eigen::Index>(step.predictors.size()));
        for (std::size_t j = 0; j < step.predictors.size(); ++j) {
          const std::size_t col = step.predictors[j];
          if (working.missing(r, col)) {
            throw Error::numeric("augmented cell still missing during sequential pass (column " +
                                 schema.column(col).name + ")");
          }
          covariates[static_cast<Eigen::Index>(j)] = working.cell(r, col);
        }
        working.set_cell(r, step.target, predictive_draw(draws[k], covariates, stream));
      }
      const double y = working.cell(r, outcome);
      sum += y;
      sum_sq += y * y;
    }
    const double n = static_cast<double>(end - begin);
    const double mean = sum / n;
    const double var = n > 1.0 ? std::max(sum_sq - n * mean * mean, 0.0) / (n - 1.0) : 0.0;
    record.block_mean.push_back(mean);
    record.block_mean_variance.push_back(var / n);
  }

  for (std::size_t r = 0; r < working.n_rows(); ++r) {
    if (working.original(r)) {
      continue;
    }
    for (std::size_t c = 0; c < working.n_cols(); ++c) {
      if (working.missing(r, c)) {
        throw Error::numeric("augmented cell still missing after sequential pass (column " +
                             schema.column(c).name + ")");
      }
    }
  }
  if (keep != nullptr) {
    *keep = std::move(working);
  }
  return record;
}

}  // namespace detail

SyntheticImputer::SyntheticImputer(const LongitudinalTable& observed,
                                   const SequentialModelSpec& spec, std::vector<Regime> regimes,
                                   std::size_t n_syn, RngStream base, MiOptions options)
    : spec_(spec),
      regimes_(std::move(regimes)),
      n_syn_(n_syn),
      base_(base),
      options_(options),
      augmented_(observed) {
  if (n_syn_ < 2) {
    throw Error::validation("synthetic imputation requires n_syn >= 2");
  }
  check_original_complete(observed);
  validate_sequential_spec(spec_, observed.schema());
  blocks_ = detail::augment_blocks(augmented_, regimes_, n_syn_);
  for (const auto& r : regimes_) {
    regime_names_.push_back(r.name);
  }
  const auto filter = [this](std::size_t r) { return augmented_.original(r); };
  fits_ = fit_sequential(spec_, augmented_, filter, options_.fit);
}

ImputationRecord SyntheticImputer::impute_once(std::uint64_t m, LongitudinalTable* keep) const {
  // split(1) keeps the stream layout identical to the two-stage pipeline,
  // whose stage-1 chain owns split(0); with no missing data the two paths
  // then produce bit-identical imputations.
  RngStream stream = base_.split(m).split(1);
  return detail::sequential_block_pass(spec_, fits_, augmented_, blocks_, options_.shared_draws,
                                       stream, keep);
}

void extend_run(ImputationRun& run, const ImputationEngine& engine, std::size_t batch,
                unsigned threads) {
  if (batch < 1) {
    throw Error::validation("extend_run requires a positive batch size");
  }
  const std::size_t offset = run.records.size();
  const bool retain = !run.retained.empty() && run.retained.size() == offset;
  run.records.resize(offset + batch);
  if (retain) {
    run.retained.resize(offset + batch, LongitudinalTable{});
  }
  const std::uint64_t m_begin = run.next_m;
  parallel_for(batch, threads, [&](std::size_t i) {
    LongitudinalTable* keep = retain ? &run.retained[offset + i] : nullptr;
    run.records[offset + i] = engine.impute_once(m_begin + i, keep);
  });
  run.next_m = m_begin + batch;
}

ImputationRun run_imputations(const ImputationEngine& engine, std::size_t m, bool retain,
                              unsigned threads) {
  if (m < 2) {
    throw Error::validation("at least 2 imputations are required");
  }
  ImputationRun run;
  run.regime_names = engine.regime_names();
  run.n_syn = engine.n_syn();
  run.records.resize(m);
  if (retain) {
    run.retained.resize(m, LongitudinalTable{});
  }
  parallel_for(m, threads, [&](std::size_t i) {
    LongitudinalTable* keep = retain ? &run.retained[i] : nullptr;
    run.records[i] = engine.impute_once(i, keep);
  });
  run.next_m = m;
  return run;
}

ImputationRun impute_synthetic(const LongitudinalTable& observed, const SequentialModelSpec& spec,
                               const std::vector<Regime>& regimes, std::size_t m,
                               std::size_t n_syn, RngStream base, const MiOptions& options,
                               unsigned threads) {
  SyntheticImputer engine(observed, spec, regimes, n_syn, base, options);
  return run_imputations(engine, m, options.retain_datasets, threads);
}

double point_estimate(const ImputationRun& run, std::size_t regime) {
  if (run.records.empty()) {
    throw Error::validation("empty imputation run");
  }
  if (regime >= run.regime_names.size()) {
    throw Error::validation("regime index out of range");
  }
  double sum = 0.0;
  for (const auto& rec : run.records) {
    sum += rec.block_mean[regime];
  }
  return sum / static_cast<double>(run.records.size());
}

ImputationStats regime_stats(const ImputationRun& run, std::size_t regime) {
  if (regime >= run.regime_names.size()) {
    throw Error::validation("regime index out of range");
  }
  ImputationStats stats;
  stats.estimates.reserve(run.records.size());
  stats.withins.reserve(run.records.size());
  for (const auto& rec : run.records) {
    stats.estimates.push_back(rec.block_mean[regime]);
    stats.withins.push_back(rec.block_mean_variance[regime]);
  }
  return stats;
}

ImputationStats contrast_stats(const ImputationRun& run, std::size_t regime_a,
                               std::size_t regime_b) {
  if (regime_a >= run.regime_names.size() || regime_b >= run.regime_names.size()) {
    throw Error::validation("regime index out of range");
  }
  ImputationStats stats;
  stats.estimates.reserve(run.records.size());
  stats.withins.reserve(run.records.size());
  for (const auto& rec : run.records) {
    stats.estimates.push_back(rec.block_mean[regime_a] - rec.block_mean[regime_b]);
    stats.withins.push_back(rec.block_mean_variance[regime_a] +
                            rec.block_mean_variance[regime_b]);
  }
  return stats;
}

PooledResult pool_regime_mean(ImputationRun& run, const ImputationEngine& engine,
                              std::size_t regime, int max_batches, unsigned threads) {
  const std::size_t batch = run.records.size();
  return pool_with_extension([&] { return regime_stats(run, regime); },
                             [&] { extend_run(run, engine, batch, threads); }, max_batches);
}

PooledResult pool_contrast(ImputationRun& run, const ImputationEngine& engine,
                           std::size_t regime_a, std::size_t regime_b, ContrastRoute route,
                           int max_batches, unsigned threads) {
  const std::size_t batch = run.records.size();
  const auto extend = [&] { extend_run(run, engine, batch, threads); };

  if (route == ContrastRoute::direct) {
    return pool_with_extension([&] { return contrast_stats(run, regime_a, regime_b); }, extend,
                               max_batches);
  }

  // sum_regimes: the variance is the sum of the per-regime synthetic
  // variances; the t df still comes from the per-imputation contrasts.
  if (max_batches < 1) {
    throw Error::validation("pool_contrast requires max_batches >= 1");
  }
  int batches = 0;
  bool was_negative = false;
  for (;;) {
    const auto stats_a = regime_stats(run, regime_a);
    const auto stats_b = regime_stats(run, regime_b);
    const auto bw_a = between_within(stats_a.estimates, stats_a.withins);
    const auto bw_b = between_within(stats_b.estimates, stats_b.withins);
    const std::size_t m = stats_a.estimates.size();
    const double vsyn_a = synthetic_variance(bw_a.between, bw_a.within, m);
    const double vsyn_b = synthetic_variance(bw_b.between, bw_b.within, m);
    const double variance = contrast_variance(vsyn_a, vsyn_b);

    PooledResult out = pool_synthetic(contrast_stats(run, regime_a, regime_b));
    out.variance = variance;
    out.se = std::sqrt(std::max(variance, 0.0));
    out.batches_added = static_cast<std::size_t>(batches);
    out.negative_initial = was_negative;
    double t_df = out.df;
    if (std::isfinite(t_df) && t_df < 1.0) {
      t_df = 1.0;
      out.df_floored = true;
    }
    const double tq = student_t_quantile_975(t_df);
    out.ci_t = {out.point - tq * out.se, out.point + tq * out.se};
    out.ci_z = {out.point - 1.96 * out.se, out.point + 1.96 * out.se};
    if (variance > 0.0) {
      return out;
    }
    if (out.degenerate) {
      out.variance = 0.0;
      out.se = 0.0;
      out.ci_t = {out.point, out.point};
      out.ci_z = {out.point, out.point};
      return out;
    }
    was_negative = true;
    if (batches >= max_batches) {
      throw Error::numeric("summed synthetic variance still non-positive after " +
                           std::to_string(batches) + " extension batches");
    }
    extend();
    ++batches;
  }
}

}  // namespace gformula
