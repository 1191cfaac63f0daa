#include "gformula/pooling.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>

#include "gformula/error.hpp"

namespace gformula {

namespace {

double mean_of(const std::vector<double>& xs) {
  double sum = 0.0;
  for (const double x : xs) {
    sum += x;
  }
  return sum / static_cast<double>(xs.size());
}

PooledResult pool_impl(const ImputationStats& stats, PoolRule rule) {
  const auto [b_hat, v_hat] = between_within(stats.estimates, stats.withins);
  const std::size_t m = stats.estimates.size();

  PooledResult out;
  out.rule = rule;
  out.m_used = m;
  out.point = mean_of(stats.estimates);
  out.between = b_hat;
  out.within = v_hat;
  out.variance = rule == PoolRule::synthetic ? synthetic_variance(b_hat, v_hat, m)
                                             : rubin_variance(b_hat, v_hat, m);
  out.se = std::sqrt(std::max(out.variance, 0.0));

  if (rule == PoolRule::synthetic) {
    out.df = raghu_rubin_df(b_hat, v_hat, m);
  } else if (b_hat > 0.0) {
    // Classic Rubin df (M-1)(1 + V/((1+1/M)B))^2.
    const double ratio = v_hat / ((1.0 + 1.0 / static_cast<double>(m)) * b_hat);
    out.df = static_cast<double>(m - 1) * (1.0 + ratio) * (1.0 + ratio);
  }

  double t_df = out.df;
  if (std::isfinite(t_df) && t_df < 1.0) {
    t_df = 1.0;
    out.df_floored = true;
  }
  const double tq = student_t_quantile_975(t_df);
  out.ci_t = {out.point - tq * out.se, out.point + tq * out.se};
  out.ci_z = {out.point - 1.96 * out.se, out.point + 1.96 * out.se};
  out.degenerate = b_hat == 0.0 && v_hat == 0.0;
  return out;
}

}  // namespace

BetweenWithin between_within(const std::vector<double>& estimates,
                             const std::vector<double>& withins) {
  const std::size_t m = estimates.size();
  if (m < 2) {
    throw Error::validation("pooling requires at least 2 imputations, got " + std::to_string(m));
  }
  if (withins.size() != m) {
    throw Error::validation("estimate and within-variance lists differ in length");
  }
  const double mu = mean_of(estimates);
  double ss = 0.0;
  for (const double est : estimates) {
    const double d = est - mu;
    ss += d * d;
  }
  BetweenWithin out;
  out.between = ss / static_cast<double>(m - 1);
  out.within = mean_of(withins);
  return out;
}

double rubin_variance(double between, double within, std::size_t m) {
  return (1.0 + 1.0 / static_cast<double>(m)) * between + within;
}

double synthetic_variance(double between, double within, std::size_t m) {
  return (1.0 + 1.0 / static_cast<double>(m)) * between - within;
}

double raghu_rubin_df(double between, double within, std::size_t m) {
  if (between <= 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  const double md = static_cast<double>(m);
  const double inner = 1.0 - md * within / ((md + 1.0) * between);
  return (md - 1.0) * inner * inner;
}

double chi_squared_cdf(double x, double df) {
  if (x <= 0.0) {
    return 0.0;
  }
  boost::math::chi_squared dist(df);
  return boost::math::cdf(dist, x);
}

double student_t_quantile_975(double df) {
  if (!std::isfinite(df)) {
    return 1.959963984540054;
  }
  boost::math::students_t dist(df);
  return boost::math::quantile(dist, 0.975);
}

double prob_negative_vsyn(std::size_t m, double n_syn, double n_obs) {
  if (m < 2) {
    throw Error::validation("prob_negative requires M >= 2");
  }
  if (n_syn <= 0.0 || n_obs <= 0.0) {
    throw Error::validation("prob_negative requires positive sample sizes");
  }
  const double md = static_cast<double>(m);
  const double ratio = n_syn / n_obs;
  const double threshold = (md - 1.0) / ((1.0 + 1.0 / md) * (ratio + 1.0));
  return chi_squared_cdf(threshold, md - 1.0);
}

double prob_negative_vsyn_approx(std::size_t m, double n_syn, double n_obs) {
  if (m < 2) {
    throw Error::validation("prob_negative requires M >= 2");
  }
  if (n_syn <= 0.0 || n_obs <= 0.0) {
    throw Error::validation("prob_negative requires positive sample sizes");
  }
  const double md = static_cast<double>(m);
  const double ratio = n_syn / n_obs;
  return chi_squared_cdf(md / (ratio + 1.0), md - 1.0);
}

double contrast_variance(double vsyn_a, double vsyn_b) {
  return vsyn_a + vsyn_b;
}

PooledResult pool_synthetic(const ImputationStats& stats) {
  return pool_impl(stats, PoolRule::synthetic);
}

PooledResult pool_rubin(const ImputationStats& stats) {
  return pool_impl(stats, PoolRule::rubin);
}

PooledResult pool_with_extension(const std::function<ImputationStats()>& stats,
                                 const std::function<void()>& extend, int max_batches) {
  if (max_batches < 1) {
    throw Error::validation("pool_with_extension requires max_batches >= 1");
  }
  int batches = 0;
  bool was_negative = false;
  for (;;) {
    PooledResult result = pool_synthetic(stats());
    result.batches_added = static_cast<std::size_t>(batches);
    result.negative_initial = was_negative;
    if (result.variance > 0.0) {
      return result;
    }
    if (result.degenerate) {
      // All imputations identical with zero within-variance: the estimate
      // carries no estimable uncertainty; report variance 0 with the flag.
      result.variance = 0.0;
      result.se = 0.0;
      result.ci_t = {result.point, result.point};
      result.ci_z = {result.point, result.point};
      return result;
    }
    was_negative = true;
    if (batches >= max_batches) {
      throw Error::numeric("synthetic variance still non-positive after " +
                           std::to_string(batches) + " extension batches");
    }
    extend();
    ++batches;
  }
}

}  // namespace gformula
