// SPDX-License-Identifier: Apache-2.0
#include "estimators.hpp"

#include <cmath>

#include "error.hpp"

namespace qmem::est {

namespace {

double as_double(std::uint64_t n) { return static_cast<double>(n); }

// Relative variance contribution of a Poisson count.
double rel_var(std::uint64_t n) { return n == 0 ? 0.0 : 1.0 / as_double(n); }

double binomial_sigma(std::uint64_t successes, std::uint64_t trials) {
  const double n = as_double(trials);
  if (successes == 0 || successes == trials) return kZeroCountSigma / n;
  const double p = as_double(successes) / n;
  return std::sqrt(p * (1.0 - p) / n);
}

void need(bool ok, const char* what) {
  if (!ok) fail(ErrorCode::kInsufficientCounts, what);
}

}  // namespace

EstimateWithError cross_correlation(const sim::Counts& c) {
  need(c.n_trials > 0 && c.n_write > 0, "cross correlation: no trials or no write clicks");
  need(c.read_available && c.n_read > 0, "cross correlation: no unconditional read clicks");
  const double unit = as_double(c.n_trials) / (as_double(c.n_write) * as_double(c.n_read));
  const double g = as_double(c.n_coincidence) * unit;
  double sigma;
  if (c.n_coincidence == 0) {
    sigma = kZeroCountSigma * unit;
  } else {
    sigma = g * std::sqrt(rel_var(c.n_coincidence) + rel_var(c.n_write) + rel_var(c.n_read));
  }
  return {g, sigma, 0.0};
}

EstimateWithError retrieval_conditional(const sim::Counts& c) {
  need(c.n_write > 0, "conditional retrieval: no write clicks");
  return {as_double(c.n_coincidence) / as_double(c.n_write), binomial_sigma(c.n_coincidence, c.n_write), 0.0};
}

EstimateWithError calibrated_retrieval(const EstimateWithError& r, const EstimateWithError& eta,
                                       const EstimateWithError& p_bg, const EstimateWithError& p_w) {
  if (!(eta.value > 0.0 && eta.value <= 1.0))
    fail(ErrorCode::kDomain, "calibrated retrieval: eta_tot must be in (0,1]");
  if (!(p_w.value > 0.0) || !(p_bg.value < p_w.value) || p_bg.value < 0.0)
    fail(ErrorCode::kDomain, "calibrated retrieval: requires 0 <= p_bg < p_w");
  const double ratio = p_bg.value / p_w.value;
  const double keep = 1.0 - ratio;
  const double value = r.value / (eta.value * keep);

  const double sigma_ratio = std::hypot(p_bg.sigma / p_w.value, p_bg.value * p_w.sigma / (p_w.value * p_w.value));
  const double d_r = 1.0 / (eta.value * keep);
  const double d_ratio = value / keep;
  const double stat = std::hypot(d_r * r.sigma, d_ratio * sigma_ratio);
  const double syst = std::hypot(value * eta.sigma / eta.value, d_ratio * p_bg.sigma_syst / p_w.value);
  return {value, stat, syst};
}

EstimateWithError eta_tot(const EstimateWithError& a, const EstimateWithError& b, const EstimateWithError& c) {
  for (const auto* e : {&a, &b, &c})
    if (!(e->value > 0.0 && e->value <= 1.0)) fail(ErrorCode::kDomain, "eta_tot: efficiencies must be in (0,1]");
  const double value = a.value * b.value * c.value;
  const double rel = std::sqrt(std::pow(a.sigma / a.value, 2) + std::pow(b.sigma / b.value, 2) +
                               std::pow(c.sigma / c.value, 2));
  return {value, value * rel, 0.0};
}

EstimateWithError intrinsic_efficiency(const EstimateWithError& rc, const EstimateWithError& g) {
  if (!(g.value > 1.0))
    fail(ErrorCode::kDomain, "intrinsic efficiency: g2 must exceed 1");
  const double keep = 1.0 - 1.0 / g.value;
  const double value = rc.value * keep;
  const double d_g = rc.value / (g.value * g.value);
  return {value, std::hypot(keep * rc.sigma, d_g * g.sigma), keep * rc.sigma_syst};
}

EstimateWithError anticorrelation(const sim::Counts& c) {
  need(c.n_write > 0 && c.n_d1 > 0 && c.n_d2 > 0, "anticorrelation: need heralds and clicks on both detectors");
  const double unit = as_double(c.n_write) / (as_double(c.n_d1) * as_double(c.n_d2));
  const double alpha = as_double(c.n_d12) * unit;
  const double sigma = c.n_d12 == 0 ? kZeroCountSigma * unit
                                    : alpha * std::sqrt(rel_var(c.n_d12) + rel_var(c.n_d1) + rel_var(c.n_d2));
  return {alpha, sigma, 0.0};
}

BellFigures visibility_and_s(double g) {
  if (!(g >= 0.0)) fail(ErrorCode::kDomain, "visibility: g2 must be non-negative");
  BellFigures b;
  b.visibility = (g - 1.0) / (g + 1.0);
  b.s = 2.0 * std::sqrt(2.0) * b.visibility;
  b.violates = b.s > 2.0;
  return b;
}

double background_model(double p_w_raw, std::optional<double> write_power, double constant_background,
                        double leak_fraction) {
  if (p_w_raw < 0 || constant_background < 0 || leak_fraction < 0 || (write_power && *write_power < 0))
    fail(ErrorCode::kDomain, "background model: inputs must be non-negative");
  if (write_power && *write_power == 0.0) return constant_background;
  return constant_background + leak_fraction * p_w_raw;
}

EstimateWithError write_probability(const sim::Counts& c) {
  need(c.n_trials > 0, "write probability: no trials");
  return {as_double(c.n_write) / as_double(c.n_trials), binomial_sigma(c.n_write, c.n_trials), 0.0};
}

EstimateWithError read_probability(const sim::Counts& c) {
  need(c.n_trials > 0 && c.read_available, "read probability: unconditional reads not measured");
  return {as_double(c.n_read) / as_double(c.n_trials), binomial_sigma(c.n_read, c.n_trials), 0.0};
}

EstimateWithError excitation_probability(const EstimateWithError& p_w, double p_bg, double eta) {
  if (!(eta > 0.0) || !(p_bg < 1.0)) fail(ErrorCode::kDomain, "excitation probability: bad eta or p_bg");
  const double s = (p_w.value - p_bg) / (1.0 - p_bg);
  if (!(s < 1.0)) fail(ErrorCode::kDomain, "excitation probability: signal click probability >= 1");
  const double mu = s / (eta * (1.0 - s));
  const double d_s = 1.0 / (eta * (1.0 - s) * (1.0 - s));
  return {mu, d_s * p_w.sigma / (1.0 - p_bg), 0.0};
}

}  // namespace qmem::est
