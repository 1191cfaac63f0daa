#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "gformula/rng.hpp"
#include "gformula/table.hpp"

namespace gformula {

enum class ModelFamily { normal_linear, logistic, empirical, abb };

// One conditional model of the sequential factorisation: target regressed on
// its causal predecessors. empirical/abb are marginal draw families and take
// no predictors.
struct DesignSpec {
  std::string target;
  std::vector<std::string> predictors;
  ModelFamily family = ModelFamily::normal_linear;
};

struct FitOptions {
  int max_iterations = 50;
  double tolerance = 1e-10;
  double ridge = 0.0;  // optional stabiliser for logistic separation; 0 = plain IRLS
};

struct FittedModel {
  ModelFamily family = ModelFamily::normal_linear;
  Eigen::VectorXd beta;               // intercept first
  double sigma2 = 0.0;                // residual variance (normal_linear)
  int residual_df = 0;                // n - p (normal_linear)
  Eigen::MatrixXd covariance_factor;  // (X'X)^-1, or inverse Fisher information at beta
  Eigen::MatrixXd covariance_chol;    // lower Cholesky of covariance_factor
  std::vector<double> donors;         // observed target values (empirical / abb)
  std::size_t n_rows_used = 0;
};

struct ParameterDraw {
  ModelFamily family = ModelFamily::normal_linear;
  Eigen::VectorXd beta;
  double sigma2 = 0.0;
  std::vector<double> donors;  // empirical: fit donors; abb: bootstrap pool
};

using RowFilter = std::function<bool(std::size_t)>;

// Filter keeping only rows with origin = original in `table`; the table must
// outlive the filter.
RowFilter original_rows_of(const LongitudinalTable& table);

FittedModel fit(const DesignSpec& spec, const LongitudinalTable& table,
                const RowFilter& row_filter = {}, const FitOptions& options = {});

// One draw from the (approximate) posterior of the model parameters:
// normal_linear under the standard noninformative prior, logistic via the
// normal approximation at the MLE, abb via a bootstrap of the donor pool,
// empirical returns the fit unchanged.
ParameterDraw posterior_draw(const FittedModel& model, RngStream& rng);

// Parameters fixed at the fit itself (classical Monte-Carlo G-formula path).
ParameterDraw mle_draw(const FittedModel& model);

// covariates = predictor values in spec order, without the intercept.
double predictive_draw(const ParameterDraw& draw, const Eigen::VectorXd& covariates,
                       RngStream& rng);

// Numerically stable logistic function.
double expit(double x);

// Model list for the sequential factorisation: one entry per non-treatment
// column, in causal time order, ending with the outcome.
struct SequentialModelSpec {
  std::vector<DesignSpec> models;
};

void validate_sequential_spec(const SequentialModelSpec& spec, const Schema& schema);

// Mechanical spec: every non-treatment column regressed linearly on all
// preceding columns; a confounder with no predecessors gets
// `first_confounder_family` when continuous.
SequentialModelSpec auto_sequential_spec(const Schema& schema,
                                         ModelFamily first_confounder_family);

std::vector<FittedModel> fit_sequential(const SequentialModelSpec& spec,
                                        const LongitudinalTable& table,
                                        const RowFilter& row_filter = {},
                                        const FitOptions& options = {});

}  // namespace gformula
