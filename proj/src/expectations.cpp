// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "error.hpp"
#include "simkernel.hpp"

namespace qmem::sim {

Expectations analytic_expectations(const ExperimentConfig& config, double storage_time) {
  config.validate();
  const TrialKernel kernel(config, storage_time);
  const double mu = config.mu();
  const double ratio = mu / (1.0 + mu);
  const double eta = config.detection.total_efficiency();
  const double bw = kernel.write_background();
  const double br = config.detection.read_background;
  const double q = kernel.retrieval_probability();

  Expectations e;
  constexpr double kTail = 1e-12;
  e.n_max = mu > 0.0 ? static_cast<std::uint64_t>(std::ceil(std::log(kTail) / std::log(ratio))) : 0;

  // Per-excitation probability of landing on D1 (equally D2).
  const double a = 0.5 * q * eta;
  // Coherent read-out: Poisson photons independent of n.
  const bool coherent = config.source == PhotonSource::kCoherentReadout;
  const double coherent_d = std::exp(-0.5 * mu * q * eta);

  double p_w = 0, p_r = 0, p_wr = 0, p_w1 = 0, p_w2 = 0, p_w12 = 0;
  double weight = 1.0 - ratio;  // P(n = 0)
  for (std::uint64_t n = 0; n <= e.n_max; ++n, weight *= ratio) {
    const double nd = static_cast<double>(n);
    const double write = 1.0 - (1.0 - bw) * std::pow(1.0 - eta, nd);
    const double silent1 = (1.0 - br) * (coherent ? coherent_d : std::pow(1.0 - a, nd));
    const double silent12 =
        (1.0 - br) * (1.0 - br) * (coherent ? coherent_d * coherent_d : std::pow(1.0 - 2.0 * a, nd));
    const double read = 1.0 - silent12;
    const double click1 = 1.0 - silent1;
    const double both = 1.0 - 2.0 * silent1 + silent12;
    p_w += weight * write;
    p_r += weight * read;
    p_wr += weight * write * read;
    p_w1 += weight * write * click1;
    p_w2 += weight * write * click1;
    p_w12 += weight * write * both;
  }

  e.p_w = p_w;
  e.p_r = p_r;
  e.p_wr = p_wr;
  e.R = p_w > 0 ? p_wr / p_w : 0.0;
  e.g2 = (p_w > 0 && p_r > 0) ? p_wr / (p_w * p_r) : 0.0;
  e.p1 = p_w > 0 ? p_w1 / p_w : 0.0;
  e.p2 = p_w > 0 ? p_w2 / p_w : 0.0;
  e.p12 = p_w > 0 ? p_w12 / p_w : 0.0;
  e.alpha = (e.p1 > 0 && e.p2 > 0) ? e.p12 / (e.p1 * e.p2) : 0.0;
  e.herald_probability =
      1.0 - std::pow(1.0 - p_w, static_cast<double>(config.timing.attempts_per_cycle()));
  return e;
}

}  // namespace qmem::sim
