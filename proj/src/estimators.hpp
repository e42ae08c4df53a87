// SPDX-License-Identifier: Apache-2.0
//
// Estimators for the memory's figures of merit from raw count tallies.
// Uncertainties are first-order propagations of independent Poisson (or
// binomial, for conditional ratios) counting errors. A zero count is given
// the one-sided 68% Poisson upper bound, 1.14, as its error.
#pragma once

#include <optional>

#include "estimate.hpp"
#include "simkernel.hpp"

namespace qmem::est {

inline constexpr double kZeroCountSigma = 1.14;

/// g2 = p_wr / (p_w p_r) = N_wr N / (N_w N_r).
EstimateWithError cross_correlation(const sim::Counts& counts);

/// R = N_wr / N_w with binomial error.
EstimateWithError retrieval_conditional(const sim::Counts& counts);

/// Rc = R / [eta_tot (1 - p_bg / p_w)]. The eta_tot error is reported in
/// sigma_syst; counting errors of R, p_bg and p_w go to sigma.
EstimateWithError calibrated_retrieval(const EstimateWithError& retrieval, const EstimateWithError& eta_tot,
                                       const EstimateWithError& p_bg, const EstimateWithError& p_w);

EstimateWithError eta_tot(const EstimateWithError& escape, const EstimateWithError& transmission,
                          const EstimateWithError& detector);

/// chi = Rc (1 - 1 / g2); requires g2 > 1.
EstimateWithError intrinsic_efficiency(const EstimateWithError& calibrated,
                                       const EstimateWithError& cross_correlation);

/// alpha = N_12 N_herald / (N_1 N_2).
EstimateWithError anticorrelation(const sim::Counts& counts);

struct BellFigures {
  double visibility = 0;
  double s = 0;
  bool violates = false;  // S > 2
};

BellFigures visibility_and_s(double cross_correlation);

/// p_bg = const + leak * p_w_raw. With a known write power of zero only the
/// constant part remains.
double background_model(double p_w_raw, std::optional<double> write_power, double constant_background,
                        double leak_fraction);

/// Probability estimates straight from the counts.
EstimateWithError write_probability(const sim::Counts& counts);
EstimateWithError read_probability(const sim::Counts& counts);

/// Mean pair number recovered from p_w by inverting the click law of
/// sim::signal_click_probability after removing p_bg.
EstimateWithError excitation_probability(const EstimateWithError& p_w, double p_bg, double eta);

}  // namespace qmem::est
