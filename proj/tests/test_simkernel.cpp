// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "error.hpp"
#include "estimators.hpp"
#include "simkernel.hpp"

namespace qmem::sim {
namespace {

ExperimentConfig lossless(double mu) {
  ExperimentConfig c;
  c.excitation_probability = mu;
  c.chi0 = 1.0;
  c.detection.escape_efficiency = 1.0;
  c.detection.path_transmission = 1.0;
  c.detection.detector_efficiency = 1.0;
  c.detection.constant_background = 0.0;
  c.detection.write_leak_fraction = 0.0;
  c.detection.read_background = 0.0;
  c.decoherence.pumping_efficiency = 1.0;
  c.timing.storage_delays = {0.0};
  return c;
}

// The bundled calibration, restated here so the tests do not depend on the file.
ExperimentConfig calibrated() {
  ExperimentConfig c;
  c.excitation_probability = 0.05278203;
  c.chi0 = 0.7104921;
  c.detection.read_background = 0.001445545;
  c.decoherence.temperature = 2.89563e-5;
  c.decoherence.spin_wave_delta_k = 143.2444;
  c.timing.storage_delays = {1e-5, 3e-4, 6e-4, 1e-3, 1.5e-3, 2e-3, 2.5e-3, 3e-3, 3.5e-3};
  return c;
}

// Test-side enumeration over the geometric pair-number law, written from the
// model definition without the library's kernel.
struct Oracle {
  double p_w = 0, p_r = 0, p_wr = 0, p_w1 = 0, p_w2 = 0, p_w12 = 0;
  double R() const { return p_wr / p_w; }
  double g2() const { return p_wr / (p_w * p_r); }
  double alpha() const { return (p_w12 / p_w) / ((p_w1 / p_w) * (p_w2 / p_w)); }
};

Oracle oracle(const ExperimentConfig& c, double t) {
  const double mu = c.mu();
  const double eta = c.detection.escape_efficiency * c.detection.path_transmission * c.detection.detector_efficiency;
  const double bw = c.detection.constant_background + c.detection.write_leak_fraction * mu * eta / (1 + mu * eta);
  const double br = c.detection.read_background;
  const double q = c.chi0 * phys::retrieval_decay(t, c.decoherence) / phys::retrieval_decay(0, c.decoherence);
  Oracle o;
  const double x = mu / (1 + mu);
  double pn = 1 - x;
  for (int n = 0; n < 400; ++n, pn *= x) {
    const double w = 1 - (1 - bw) * std::pow(1 - eta, n);
    double none1, none12;
    if (c.source == PhotonSource::kCoherentReadout) {
      none1 = (1 - br) * std::exp(-mu * q * eta / 2);
      none12 = (1 - br) * (1 - br) * std::exp(-mu * q * eta);
    } else {
      none1 = (1 - br) * std::pow(1 - q * eta / 2, n);
      none12 = (1 - br) * (1 - br) * std::pow(1 - q * eta, n);
    }
    o.p_w += pn * w;
    o.p_r += pn * (1 - none12);
    o.p_wr += pn * w * (1 - none12);
    o.p_w1 += pn * w * (1 - none1);
    o.p_w2 += pn * w * (1 - none1);
    o.p_w12 += pn * w * (1 - 2 * none1 + none12);
  }
  return o;
}

double binomial_se(double p, double n) { return std::sqrt(p * (1 - p) / n); }

TEST(PairNumber, ZeroMeanAlwaysZero) {
  auto rng = RngStream::substream(1, 0, 0);
  for (int i = 0; i < 10000; ++i) EXPECT_EQ(sample_pair_number(0.0, rng), 0u);
}

TEST(PairNumber, MeanAndVarianceMatchThermalLaw) {
  const double mu = 0.01;
  const int n = 1'000'000;
  auto rng = RngStream::substream(2, 0, 0);
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double k = static_cast<double>(sample_pair_number(mu, rng));
    s += k;
    s2 += k * k;
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  EXPECT_NEAR(mean, mu, 3 * std::sqrt(mu * (1 + mu) / n));
  EXPECT_NEAR(var, mu * (1 + mu), 0.05 * mu);
}

TEST(PairNumber, TailRatioApproachesMuTilde) {
  const double mu = 0.2, x = mu / (1 + mu);
  auto rng = RngStream::substream(3, 0, 0);
  double one = 0, more = 0;
  for (int i = 0; i < 2'000'000; ++i) {
    const auto k = sample_pair_number(mu, rng);
    if (k == 1) ++one;
    if (k >= 2) ++more;
  }
  // Exact ratio x / (1 - x), which tends to x as mu -> 0.
  EXPECT_NEAR(more / one, x / (1 - x), 5 * x * std::sqrt(1 / more + 1 / one));
}

TEST(PairNumber, OutOfRangeIsDomainError) {
  auto rng = RngStream::substream(1, 0, 0);
  EXPECT_THROW(sample_pair_number(1.0, rng), Error);
  EXPECT_THROW(sample_pair_number(-0.1, rng), Error);
}

TEST(Detect, Examples) {
  auto rng = RngStream::substream(4, 0, 0);
  for (int i = 0; i < 10000; ++i) EXPECT_FALSE(detect(0, 0.5, 0.0, rng));
  for (int i = 0; i < 10000; ++i) EXPECT_TRUE(detect(2, 1.0, 0.0, rng));
  const int n = 1'000'000;
  const double eta = 0.71 * 0.395 * 0.627;
  int clicks = 0;
  for (int i = 0; i < n; ++i) clicks += detect(1, eta, 0.0, rng);
  EXPECT_NEAR(clicks / double(n), 0.1758, 3 * binomial_se(eta, n) + 1e-4);
  EXPECT_THROW(detect(1, 1.5, 0.0, rng), Error);
}

TEST(Detect, ClickLawWithBackground) {
  auto rng = RngStream::substream(5, 0, 0);
  const int n = 1'000'000;
  int clicks = 0;
  for (int i = 0; i < n; ++i) clicks += detect(3, 0.2, 0.05, rng);
  const double p = 1 - 0.95 * std::pow(0.8, 3);
  EXPECT_NEAR(clicks / double(n), p, 5 * binomial_se(p, n));
}

TEST(Trial, LosslessLimitGivesExactlyOneReadClick) {
  auto c = lossless(1e-4);
  const auto t = run_correlation(c, 1'000'000, 9);
  const auto& k = t.delays[0];
  ASSERT_GT(k.n_write, 50u);
  EXPECT_EQ(k.n_coincidence, k.n_write);
  EXPECT_EQ(k.n_d1 + k.n_d2, k.n_write);
  EXPECT_EQ(k.n_d12, 0u);
}

TEST(Trial, BackgroundFlagImpliesClick) {
  auto c = calibrated();
  c.detection.constant_background = 0.05;
  TrialKernel kernel(c, 1e-5);
  auto rng = RngStream::substream(6, 0, 0);
  int flagged = 0;
  for (int i = 0; i < 200000; ++i) {
    const auto o = kernel.run(rng);
    EXPECT_EQ(o.storage_time, 1e-5);
    if (o.write_click_is_background) {
      ++flagged;
      EXPECT_TRUE(o.write_click);
    }
  }
  EXPECT_GT(flagged, 0);
}

TEST(Trial, BackgroundOnlyWriteRate) {
  auto c = calibrated();
  c.excitation_probability = 0.0;
  const int n = 1'000'000;
  const auto k = run_correlation(c, n, 10).delays[0];
  EXPECT_NEAR(k.n_write / double(n), 0.0006, 3 * binomial_se(0.0006, n));
}

TEST(Oracle, LibraryEnumerationMatchesTestSideEnumeration) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 50; ++i) {
    auto c = calibrated();
    c.excitation_probability = 0.001 + 0.3 * u(rng);
    c.chi0 = 0.1 + 0.9 * u(rng);
    c.detection.path_transmission = 0.05 + 0.95 * u(rng);
    c.detection.constant_background = 0.01 * u(rng);
    c.detection.read_background = 0.01 * u(rng);
    c.source = i % 5 == 0 ? PhotonSource::kCoherentReadout : PhotonSource::kTwoModeSqueezed;
    const double t = 3e-3 * u(rng);
    const auto e = analytic_expectations(c, t);
    const auto o = oracle(c, t);
    EXPECT_NEAR(e.p_w, o.p_w, 1e-12);
    EXPECT_NEAR(e.p_r, o.p_r, 1e-12);
    EXPECT_NEAR(e.p_wr, o.p_wr, 1e-12);
    EXPECT_NEAR(e.R, o.R(), 1e-10);
    EXPECT_NEAR(e.g2, o.g2(), 1e-8 * o.g2());
    EXPECT_NEAR(e.alpha, o.alpha(), 1e-8);
  }
}

TEST(Oracle, TailBoundSetsEnumerationDepth) {
  auto c = calibrated();
  const auto e = analytic_expectations(c, 0.0);
  const double x = c.mu() / (1 + c.mu());
  EXPECT_LT(std::pow(x, static_cast<double>(e.n_max)), 1e-12);
  EXPECT_GE(std::pow(x, static_cast<double>(e.n_max - 1)), 1e-12);
}

TEST(Oracle, SmallMuLowEfficiencyG2Asymptote) {
  auto c = lossless(0.01);
  c.detection.path_transmission = 1e-4;
  c.chi0 = 1e-2;
  const auto e = analytic_expectations(c, 0.0);
  const double x = 0.01 / 1.01;
  EXPECT_NEAR(e.g2 / (1 + 1 / x), 1.0, 1e-3);
}

TEST(Oracle, RetrievalEqualsQAtLeadingOrder) {
  auto c = lossless(1e-6);
  c.chi0 = 0.37;
  EXPECT_NEAR(analytic_expectations(c, 0.0).R, 0.37, 1e-5);
}

TEST(Oracle, CalibratedFirstDelayRetrieval) {
  const auto e = analytic_expectations(calibrated(), 1e-5);
  EXPECT_NEAR(e.R, 0.127, 0.003);
  EXPECT_NEAR(e.p_r, 0.0094, 0.0002);
  EXPECT_NEAR(e.p_w, 0.010, 0.0005);
}

TEST(Oracle, G2DecreasesWithMuAndStaysAboveTwo) {
  auto c = calibrated();
  c.chi0 = 0.836;
  double prev = 1e9;
  // Below about mu = 0.01 the background floor makes g2 rise with mu.
  for (double mu = 0.01; mu <= 0.08 + 1e-12; mu += 0.005) {
    c.excitation_probability = mu;
    const double g = analytic_expectations(c, 500e-9).g2;
    EXPECT_LT(g, prev);
    EXPECT_GT(g, 2.0);
    prev = g;
  }
}

TEST(MonteCarlo, CalibratedConditionalRetrievalWithinFiveSigma) {
  auto c = calibrated();
  c.timing.storage_delays = {1e-5};
  const double n = 1e6;
  const auto k = run_correlation(c, static_cast<std::uint64_t>(n), 12).delays[0];
  const auto e = analytic_expectations(c, 1e-5);
  const double r = double(k.n_coincidence) / double(k.n_write);
  EXPECT_NEAR(r, e.R, 5 * binomial_se(e.R, double(k.n_write)));
}

TEST(MonteCarlo, RatesMatchOracleForRandomConfigs) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  const double n = 1e6;
  for (int i = 0; i < 10; ++i) {
    auto c = calibrated();
    c.excitation_probability = 0.005 + 0.2 * u(rng);
    c.chi0 = 0.2 + 0.8 * u(rng);
    c.detection.path_transmission = 0.2 + 0.8 * u(rng);
    c.detection.read_background = 0.005 * u(rng);
    const double t = 2e-3 * u(rng);
    c.timing.storage_delays = {t};
    const auto k = run_correlation(c, static_cast<std::uint64_t>(n), 100 + i).delays[0];
    const auto o = oracle(c, t);
    EXPECT_NEAR(k.n_write / n, o.p_w, 5 * binomial_se(o.p_w, n));
    EXPECT_NEAR(k.n_read / n, o.p_r, 5 * binomial_se(o.p_r, n));
    EXPECT_NEAR(k.n_coincidence / n, o.p_wr, 5 * binomial_se(o.p_wr, n));
    EXPECT_NEAR(k.n_d1 / n, o.p_w1, 5 * binomial_se(o.p_w1, n));
    EXPECT_NEAR(k.n_d2 / n, o.p_w2, 5 * binomial_se(o.p_w2, n));
    EXPECT_NEAR(k.n_d12 / n, o.p_w12, 5 * binomial_se(o.p_w12, n));
  }
}

TEST(MonteCarlo, G2DecreasesAcrossMuSweep) {
  auto c = calibrated();
  c.chi0 = 0.836;
  c.timing.storage_delays = {500e-9};
  double prev = 1e9;
  for (double mu : {0.01, 0.02, 0.03, 0.045, 0.06, 0.08}) {
    c.excitation_probability = mu;
    const auto k = run_correlation(c, 3'000'000, 21).delays[0];
    const double g = est::cross_correlation(k).value;
    EXPECT_LT(g, prev) << "mu=" << mu;
    EXPECT_GT(g, 2.0);
    prev = g;
  }
}

TEST(MonteCarlo, SinglePhotonAndCoherentAnticorrelation) {
  auto single = lossless(0.01);
  const auto a = est::anticorrelation(run_correlation(single, 2'000'000, 30).delays[0]);
  const double expected = oracle(single, 0.0).alpha();
  EXPECT_LT(expected, 0.03);
  EXPECT_NEAR(a.value, expected, 3 * a.sigma + 1e-3);

  auto coherent = lossless(0.5);
  coherent.source = PhotonSource::kCoherentReadout;
  const auto b = est::anticorrelation(run_correlation(coherent, 1'000'000, 31).delays[0]);
  EXPECT_NEAR(b.value, 1.0, 3 * b.sigma);
}

TEST(Determinism, SameSeedSameTableAcrossWorkers) {
  auto c = calibrated();
  c.timing.storage_delays = {1e-5, 1e-3};
  const auto a = run_correlation(c, 300000, 77, {1});
  EXPECT_EQ(a, run_correlation(c, 300000, 77, {1}));
  EXPECT_EQ(a, run_correlation(c, 300000, 77, {2}));
  EXPECT_EQ(a, run_correlation(c, 300000, 77, {8}));
  EXPECT_NE(a, run_correlation(c, 300000, 78, {1}));

  const auto f = run_feedback(c, 20000, 77, {1});
  EXPECT_EQ(f, run_feedback(c, 20000, 77, {3}));
}

TEST(Invariants, HoldForRandomConfigs) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 30; ++i) {
    auto c = calibrated();
    c.excitation_probability = 0.9 * u(rng);
    c.chi0 = 0.01 + 0.99 * u(rng);
    c.detection.constant_background = 0.2 * u(rng);
    c.detection.read_background = 0.2 * u(rng);
    c.source = i % 3 == 0 ? PhotonSource::kCoherentReadout : PhotonSource::kTwoModeSqueezed;
    c.timing.storage_delays = {1e-3 * u(rng)};
    const auto corr = run_correlation(c, 20000, i);
    EXPECT_NO_THROW(corr.delays[0].check_invariants());
    const auto fb = run_feedback(c, 500, i);
    EXPECT_NO_THROW(fb.delays[0].check_invariants());
  }
}

TEST(Invariants, CheckRejectsBrokenTables) {
  Counts c;
  c.n_trials = 10;
  c.n_write = 5;
  c.n_coincidence = 6;
  EXPECT_THROW(c.check_invariants(), Error);
  c.n_coincidence = 3;
  c.n_d1 = 1;
  c.n_d2 = 2;
  c.n_d12 = 2;
  EXPECT_THROW(c.check_invariants(), Error);
}

TEST(Feedback, HeraldingProbabilityPerCycle) {
  ExperimentConfig c = lossless(0.0);
  c.detection.constant_background = 0.01;
  const std::uint64_t cycles = 200000;
  const auto k = run_feedback(c, cycles, 40).delays[0];
  EXPECT_EQ(c.timing.attempts_per_cycle(), 154u);
  const double p = 1 - std::pow(0.99, 154);
  EXPECT_NEAR(p, 0.787, 0.0005);
  EXPECT_EQ(k.n_cycles, cycles);
  EXPECT_NEAR(k.n_write / double(cycles), p, 3 * binomial_se(p, double(cycles)));
  EXPECT_FALSE(k.read_available);
  EXPECT_EQ(k.n_read, 0u);
}

TEST(Feedback, ZeroAttemptWindowGivesEmptyTable) {
  auto c = calibrated();
  c.timing.write_window = 0.0;
  const auto t = run_feedback(c, 1000, 1);
  for (const auto& k : t.delays) {
    EXPECT_EQ(k.n_trials, 0u);
    EXPECT_EQ(k.n_write, 0u);
    EXPECT_EQ(k.n_cycles, 1000u);
  }
}

TEST(Feedback, ConditionalRetrievalMatchesOracle) {
  auto c = calibrated();
  c.timing.storage_delays = {1e-5, 2e-3};
  const auto t = run_feedback(c, 200000, 41);
  for (const auto& k : t.delays) {
    const double expected = oracle(c, k.storage_time).R();
    EXPECT_NEAR(k.n_coincidence / double(k.n_write), expected, 5 * binomial_se(expected, double(k.n_write)));
  }
}

TEST(Config, Validation) {
  auto c = calibrated();
  EXPECT_NO_THROW(c.validate());
  c.excitation_probability = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = calibrated();
  c.chi0 = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = calibrated();
  c.timing.mot_duration = 0.1;
  EXPECT_THROW(c.validate(), Error);
  c = calibrated();
  c.write_power = 2e-6;
  c.excitation_slope = 1e4;
  EXPECT_DOUBLE_EQ(c.mu(), 0.02);
  EXPECT_THROW(run_correlation(calibrated(), 0, 1), Error);
}

}  // namespace
}  // namespace qmem::sim
