#include "gformula/models.hpp"

#include <algorithm>
#include <cmath>

#include "gformula/error.hpp"

namespace gformula {

namespace {

struct DesignData {
  Eigen::MatrixXd x;  // with leading intercept column
  Eigen::VectorXd y;
};

std::vector<std::size_t> usable_rows(const LongitudinalTable& table, const RowFilter& filter) {
  std::vector<std::size_t> rows;
  rows.reserve(table.n_rows());
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    if (!filter || filter(r)) {
      rows.push_back(r);
    }
  }
  return rows;
}

DesignData build_design(const DesignSpec& spec, const LongitudinalTable& table,
                        const std::vector<std::size_t>& rows) {
  const auto& schema = table.schema();
  const std::size_t target = schema.index_of(spec.target);
  std::vector<std::size_t> cols;
  cols.reserve(spec.predictors.size());
  for (const auto& name : spec.predictors) {
    cols.push_back(schema.index_of(name));
  }

  DesignData data;
  data.x.resize(rows.size(), cols.size() + 1);
  data.y.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    if (!table.observed(r, target)) {
      throw Error::validation("missing target cell for " + spec.target + " at row " +
                              std::to_string(r));
    }
    data.y[i] = table.cell(r, target);
    data.x(i, 0) = 1.0;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (!table.observed(r, cols[j])) {
        throw Error::validation("missing predictor " + spec.predictors[j] + " at row " +
                                std::to_string(r));
      }
      data.x(i, j + 1) = table.cell(r, cols[j]);
    }
  }
  return data;
}

Eigen::MatrixXd lower_cholesky(const Eigen::MatrixXd& cov, const std::string& context) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) {
    return llt.matrixL();
  }
  // Semi-definite covariances (noiseless fits) get a vanishing jitter.
  Eigen::MatrixXd bumped = cov;
  const double bump = 1e-12 * (1.0 + cov.diagonal().maxCoeff());
  bumped.diagonal().array() += bump;
  Eigen::LLT<Eigen::MatrixXd> retry(bumped);
  if (retry.info() != Eigen::Success) {
    throw Error::numeric("covariance not positive semi-definite in " + context);
  }
  return retry.matrixL();
}

FittedModel fit_normal_linear(const DesignSpec& spec, const DesignData& data) {
  const Eigen::Index n = data.x.rows();
  const Eigen::Index p = data.x.cols();
  if (n < p + 1) {
    throw Error::validation("model for " + spec.target + " has " + std::to_string(n) +
                            " usable rows for " + std::to_string(p) + " parameters");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(data.x);
  if (qr.rank() < p) {
    throw Error::numeric("rank-deficient design for " + spec.target);
  }
  FittedModel model;
  model.family = ModelFamily::normal_linear;
  model.beta = qr.solve(data.y);
  const double rss = (data.y - data.x * model.beta).squaredNorm();
  model.residual_df = static_cast<int>(n - p);
  model.sigma2 = std::max(rss, 0.0) / static_cast<double>(model.residual_df);
  const Eigen::MatrixXd xtx = data.x.transpose() * data.x;
  model.covariance_factor = xtx.inverse();
  model.covariance_chol = lower_cholesky(model.covariance_factor, "fit of " + spec.target);
  model.n_rows_used = static_cast<std::size_t>(n);
  return model;
}

FittedModel fit_logistic(const DesignSpec& spec, const DesignData& data,
                         const FitOptions& options) {
  const Eigen::Index n = data.x.rows();
  const Eigen::Index p = data.x.cols();
  if (n < p + 1) {
    throw Error::validation("model for " + spec.target + " has " + std::to_string(n) +
                            " usable rows for " + std::to_string(p) + " parameters");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (data.y[i] != 0.0 && data.y[i] != 1.0) {
      throw Error::validation("logistic target " + spec.target + " has non-binary value");
    }
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd prob(n);
  bool converged = false;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Eigen::VectorXd eta = data.x * beta;
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = expit(eta[i]);
    }
    const Eigen::VectorXd w = prob.array() * (1.0 - prob.array());
    Eigen::MatrixXd info = data.x.transpose() * w.asDiagonal() * data.x;
    Eigen::VectorXd score = data.x.transpose() * (data.y - prob);
    if (options.ridge > 0.0) {
      info.diagonal().array() += options.ridge;
      score -= options.ridge * beta;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) {
      throw Error::numeric("singular information matrix for " + spec.target);
    }
    const Eigen::VectorXd delta = ldlt.solve(score);
    beta += delta;
    if (!beta.allFinite()) {
      throw Error::numeric("IRLS diverged for " + spec.target + " (possible separation)");
    }
    if (delta.cwiseAbs().maxCoeff() < options.tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw Error::numeric("IRLS did not converge for " + spec.target + " after " +
                         std::to_string(options.max_iterations) +
                         " iterations (possible separation)");
  }

  FittedModel model;
  model.family = ModelFamily::logistic;
  model.beta = beta;
  const Eigen::VectorXd eta = data.x * beta;
  for (Eigen::Index i = 0; i < n; ++i) {
    prob[i] = expit(eta[i]);
  }
  const Eigen::VectorXd w = prob.array() * (1.0 - prob.array());
  Eigen::MatrixXd info = data.x.transpose() * w.asDiagonal() * data.x;
  if (options.ridge > 0.0) {
    info.diagonal().array() += options.ridge;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success) {
    throw Error::numeric("singular information matrix for " + spec.target);
  }
  model.covariance_factor = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  model.covariance_chol = lower_cholesky(model.covariance_factor, "fit of " + spec.target);
  model.n_rows_used = static_cast<std::size_t>(n);
  return model;
}

FittedModel fit_donors(const DesignSpec& spec, const LongitudinalTable& table,
                       const std::vector<std::size_t>& rows) {
  const std::size_t target = table.schema().index_of(spec.target);
  FittedModel model;
  model.family = spec.family;
  model.donors.reserve(rows.size());
  for (const std::size_t r : rows) {
    if (!table.observed(r, target)) {
      throw Error::validation("missing target cell for " + spec.target + " at row " +
                              std::to_string(r));
    }
    model.donors.push_back(table.cell(r, target));
  }
  if (model.donors.empty()) {
    throw Error::validation("no observed donor values for " + spec.target);
  }
  model.n_rows_used = model.donors.size();
  return model;
}

}  // namespace

double expit(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

RowFilter original_rows_of(const LongitudinalTable& table) {
  return [&table](std::size_t r) { return table.original(r); };
}

FittedModel fit(const DesignSpec& spec, const LongitudinalTable& table,
                const RowFilter& row_filter, const FitOptions& options) {
  if ((spec.family == ModelFamily::empirical || spec.family == ModelFamily::abb) &&
      !spec.predictors.empty()) {
    throw Error::validation("family for " + spec.target + " takes no predictors");
  }
  const auto rows = usable_rows(table, row_filter);
  if (rows.empty()) {
    throw Error::validation("no usable rows for " + spec.target);
  }
  switch (spec.family) {
    case ModelFamily::normal_linear:
      return fit_normal_linear(spec, build_design(spec, table, rows));
    case ModelFamily::logistic:
      return fit_logistic(spec, build_design(spec, table, rows), options);
    case ModelFamily::empirical:
    case ModelFamily::abb:
      return fit_donors(spec, table, rows);
  }
  throw Error::validation("unknown model family");
}

ParameterDraw posterior_draw(const FittedModel& model, RngStream& rng) {
  ParameterDraw draw;
  draw.family = model.family;
  switch (model.family) {
    case ModelFamily::normal_linear: {
      if (model.residual_df < 1) {
        throw Error::numeric("posterior draw undefined with zero residual df");
      }
      const double g = rng.chi_squared(static_cast<double>(model.residual_df));
      draw.sigma2 = model.sigma2 * static_cast<double>(model.residual_df) / g;
      Eigen::VectorXd z(model.beta.size());
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        z[i] = rng.normal();
      }
      draw.beta = model.beta + std::sqrt(draw.sigma2) * (model.covariance_chol * z);
      return draw;
    }
    case ModelFamily::logistic: {
      Eigen::VectorXd z(model.beta.size());
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        z[i] = rng.normal();
      }
      draw.beta = model.beta + model.covariance_chol * z;
      return draw;
    }
    case ModelFamily::abb: {
      // First ABB stage: a bootstrap of the donors; the second stage samples
      // from this pool at prediction time.
      draw.donors.reserve(model.donors.size());
      for (std::size_t i = 0; i < model.donors.size(); ++i) {
        draw.donors.push_back(model.donors[rng.uniform_index(model.donors.size())]);
      }
      return draw;
    }
    case ModelFamily::empirical:
      draw.donors = model.donors;
      return draw;
  }
  throw Error::validation("unknown model family");
}

ParameterDraw mle_draw(const FittedModel& model) {
  ParameterDraw draw;
  draw.family = model.family;
  draw.beta = model.beta;
  draw.sigma2 = model.sigma2;
  draw.donors = model.donors;
  return draw;
}

double predictive_draw(const ParameterDraw& draw, const Eigen::VectorXd& covariates,
                       RngStream& rng) {
  switch (draw.family) {
    case ModelFamily::normal_linear:
    case ModelFamily::logistic: {
      if (covariates.size() + 1 != draw.beta.size()) {
        throw Error::validation("covariate vector has " + std::to_string(covariates.size()) +
                                " entries, model expects " + std::to_string(draw.beta.size() - 1));
      }
      double linear = draw.beta[0];
      for (Eigen::Index i = 0; i < covariates.size(); ++i) {
        linear += draw.beta[i + 1] * covariates[i];
      }
      if (draw.family == ModelFamily::logistic) {
        return rng.bernoulli(expit(linear)) ? 1.0 : 0.0;
      }
      if (draw.sigma2 <= 0.0) {
        return linear;
      }
      return linear + std::sqrt(draw.sigma2) * rng.normal();
    }
    case ModelFamily::empirical:
    case ModelFamily::abb:
      if (draw.donors.empty()) {
        throw Error::numeric("predictive draw from empty donor pool");
      }
      return draw.donors[rng.uniform_index(draw.donors.size())];
  }
  throw Error::validation("unknown model family");
}

void validate_sequential_spec(const SequentialModelSpec& spec, const Schema& schema) {
  std::vector<bool> modelled(schema.size(), false);
  std::size_t last_pos = 0;
  bool first = true;
  for (const auto& m : spec.models) {
    const std::size_t target = schema.index_of(m.target);
    if (schema.column(target).role == ColumnRole::treatment) {
      throw Error::validation("treatment column " + m.target + " cannot be a model target");
    }
    if (!first && target <= last_pos) {
      throw Error::validation("model targets out of causal time order at " + m.target);
    }
    first = false;
    last_pos = target;
    modelled[target] = true;
    for (const auto& name : m.predictors) {
      const std::size_t p = schema.index_of(name);
      if (p >= target) {
        throw Error::validation("predictor " + name + " does not precede target " + m.target);
      }
    }
    if ((m.family == ModelFamily::empirical || m.family == ModelFamily::abb) &&
        !m.predictors.empty()) {
      throw Error::validation("family for " + m.target + " takes no predictors");
    }
    if (schema.column(target).kind == ColumnKind::binary &&
        m.family == ModelFamily::normal_linear) {
      throw Error::validation("binary column " + m.target + " needs a logistic or donor family");
    }
  }
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (schema.column(c).role != ColumnRole::treatment && !modelled[c]) {
      throw Error::validation("no model declared for column " + schema.column(c).name);
    }
  }
}

SequentialModelSpec auto_sequential_spec(const Schema& schema,
                                         ModelFamily first_confounder_family) {
  SequentialModelSpec spec;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const auto& col = schema.column(c);
    if (col.role == ColumnRole::treatment) {
      continue;
    }
    DesignSpec m;
    m.target = col.name;
    for (std::size_t p = 0; p < c; ++p) {
      m.predictors.push_back(schema.column(p).name);
    }
    if (col.kind == ColumnKind::binary) {
      m.family = ModelFamily::logistic;
    } else if (m.predictors.empty()) {
      m.family = first_confounder_family;
    } else {
      m.family = ModelFamily::normal_linear;
    }
    if ((m.family == ModelFamily::empirical || m.family == ModelFamily::abb) &&
        !m.predictors.empty()) {
      m.family = ModelFamily::normal_linear;
    }
    spec.models.push_back(std::move(m));
  }
  return spec;
}

std::vector<FittedModel> fit_sequential(const SequentialModelSpec& spec,
                                        const LongitudinalTable& table,
                                        const RowFilter& row_filter, const FitOptions& options) {
  validate_sequential_spec(spec, table.schema());
  std::vector<FittedModel> fits;
  fits.reserve(spec.models.size());
  for (const auto& m : spec.models) {
    fits.push_back(fit(m, table, row_filter, options));
  }
  return fits;
}

}  // namespace gformula
