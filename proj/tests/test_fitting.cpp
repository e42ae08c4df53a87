// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "error.hpp"
#include "fitting.hpp"

namespace qmem::fit {
namespace {

const std::vector<double> kDelays{1e-5, 3e-4, 6e-4, 1e-3, 1.5e-3, 2e-3, 2.5e-3, 3e-3, 3.5e-3};
const std::vector<double> kPowers{0.7e-6, 1e-6, 1.5e-6, 2e-6, 3e-6, 4e-6, 6e-6, 8e-6, 10e-6, 14e-6, 20e-6};

DataSeries exponential_series(double r0, double tau, double sigma, std::mt19937_64* rng = nullptr) {
  std::normal_distribution<double> g(0, 1);
  DataSeries s;
  for (double t : kDelays) s.add(t, r0 * std::exp(-t / tau) + (rng ? sigma * g(*rng) : 0.0), sigma);
  return s;
}

DataSeries reciprocal_series(double a, double tau0, double rel, std::mt19937_64* rng = nullptr) {
  std::normal_distribution<double> g(0, 1);
  DataSeries s;
  for (double p : kPowers) {
    const double w = a / p + tau0;
    s.add(p, w + (rng ? rel * w * g(*rng) : 0.0), rel * w);
  }
  return s;
}

TEST(DataSeries, RejectsBadSigma) {
  DataSeries s;
  EXPECT_THROW(s.add(1, 1, 0), Error);
  EXPECT_THROW(s.add(1, 1, -1), Error);
  EXPECT_THROW(s.add(1, 1, std::numeric_limits<double>::infinity()), Error);
  EXPECT_THROW(s.add(std::nan(""), 1, 1), Error);
}

TEST(Exponential, NoiselessRecovery) {
  const auto r = fit_exponential(exponential_series(0.79, 3.2e-3, 0.01));
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.dof, 7);
  EXPECT_NEAR(r.parameter("R0"), 0.79, 0.79 * 1e-9);
  EXPECT_NEAR(r.parameter("tau"), 3.2e-3, 3.2e-3 * 1e-9);
  EXPECT_LT(r.chi_square, 1e-15);
}

TEST(Exponential, ExplicitNoiseFreeErrorsMatchInformationMatrix) {
  // Independent 2x2 Fisher matrix at the truth.
  const double r0 = 0.79, tau = 3.2e-3, sigma = 0.01;
  double a = 0, b = 0, c = 0;
  for (double t : kDelays) {
    const double e = std::exp(-t / tau);
    const double g0 = e / sigma, g1 = r0 * e * t / (tau * tau) / sigma;
    a += g0 * g0;
    b += g0 * g1;
    c += g1 * g1;
  }
  const double det = a * c - b * b;
  const auto r = fit_exponential(exponential_series(r0, tau, sigma));
  EXPECT_NEAR(r.error("R0"), std::sqrt(c / det), 1e-9 * std::sqrt(c / det));
  EXPECT_NEAR(r.error("tau"), std::sqrt(a / det), 1e-9 * std::sqrt(a / det));
  EXPECT_NEAR(r.covariance(0, 1), -b / det, 1e-9 * std::abs(b / det));
}

TEST(Reciprocal, NoiselessRecoveryAndAsymptote) {
  const auto r = fit_reciprocal(reciprocal_series(1e-13, 38.9e-9, 0.05));
  EXPECT_NEAR(r.parameter("a"), 1e-13, 1e-13 * 1e-9);
  EXPECT_NEAR(r.parameter("tau0"), 38.9e-9, 38.9e-9 * 1e-9);
  const auto m = reciprocal_model();
  EXPECT_EQ(m.value(std::numeric_limits<double>::infinity(), r.parameters), r.parameter("tau0"));
}

TEST(Reciprocal, NoisyEnvelope) {
  std::mt19937_64 rng(4);
  const auto r = fit_reciprocal(reciprocal_series(1e-13, 38.9e-9, 0.05, &rng));
  EXPECT_NEAR(r.error("tau0"), 1.3e-9, 0.3e-9);
  EXPECT_NEAR(r.parameter("tau0"), 38.9e-9, 3 * r.error("tau0"));
}

TEST(Linear, TwoExactPoints) {
  DataSeries s({{1, 3, 0.1}, {2, 5, 0.1}});
  const auto r = fit_linear(s);
  EXPECT_NEAR(r.parameter("slope"), 2, 1e-12);
  EXPECT_NEAR(r.parameter("intercept"), 1, 1e-12);
  EXPECT_EQ(r.dof, 0);
  const auto p = fit_linear(DataSeries({{1, 2, 0.1}, {3, 6, 0.1}}), false);
  EXPECT_NEAR(p.parameter("slope"), 2, 1e-12);
}

TEST(Linear, ReplicatedPointsShrinkErrors) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0, 0.1);
  std::vector<DataPoint> pts;
  for (int i = 0; i < 8; ++i) pts.push_back({double(i), 0.5 * i + 1 + g(rng), 0.1});
  const auto base = fit_linear(DataSeries(pts));
  for (int copies : {2, 4}) {
    std::vector<DataPoint> rep;
    for (int k = 0; k < copies; ++k) rep.insert(rep.end(), pts.begin(), pts.end());
    const auto r = fit_linear(DataSeries(rep));
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_NEAR(r.parameters[i], base.parameters[i], 1e-12);
      EXPECT_NEAR(r.errors[i], base.errors[i] / std::sqrt(double(copies)), 1e-12);
    }
  }
}

TEST(Minimize, QuadraticExactDataOneStep) {
  FitModel q;
  q.parameter_names = {"c0", "c1", "c2"};
  q.value = [](double x, std::span<const double> p) { return p[0] + p[1] * x + p[2] * x * x; };
  q.gradient = [](double x, std::span<const double>, std::span<double> g) {
    g[0] = 1;
    g[1] = x;
    g[2] = x * x;
  };
  q.linear_in_parameters = true;
  DataSeries s;
  for (int i = -5; i <= 5; ++i) s.add(i, 2 - 3 * i + 0.5 * i * i, 0.2);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int k = 0; k < 20; ++k) {
    const auto r = minimize(q, {u(rng), u(rng), u(rng)}, s);
    EXPECT_EQ(r.iterations, 1);
    EXPECT_NEAR(r.parameters[0], 2, 1e-9);
    EXPECT_NEAR(r.parameters[1], -3, 1e-9);
    EXPECT_NEAR(r.parameters[2], 0.5, 1e-9);
  }
}

TEST(Minimize, AnalyticJacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0, 1);
  const std::vector<std::pair<FitModel, std::function<std::vector<double>()>>> cases{
      {exponential_model(), [&] { return std::vector<double>{0.1 + u(rng), 1e-4 + 1e-2 * u(rng)}; }},
      {reciprocal_model(), [&] { return std::vector<double>{1e-14 + 1e-12 * u(rng), 1e-8 + 1e-7 * u(rng)}; }},
      {linear_model(), [&] { return std::vector<double>{-5 + 10 * u(rng), -5 + 10 * u(rng)}; }}};
  for (const auto& [model, draw] : cases) {
    for (int i = 0; i < 100; ++i) {
      const auto p = draw();
      double x = 5e-3 * u(rng);
      if (model.parameter_names[0] == "a") x = 1e-7 + 2e-5 * u(rng);
      if (model.parameter_names[0] == "slope") x = 10 * u(rng);
      std::vector<double> analytic(p.size());
      model.gradient(x, p, analytic);
      const auto numeric = numeric_gradient(model, x, p);
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double scale = std::max(std::abs(analytic[k]), 1e-300);
        EXPECT_LT(std::abs(analytic[k] - numeric[k]) / scale, 1e-6) << model.parameter_names[k];
      }
    }
  }
}

TEST(Minimize, NonFiniteModelIsCleanError) {
  FitModel bad = exponential_model();
  bad.value = [](double x, std::span<const double> p) { return x > 2e-3 ? std::nan("") : p[0]; };
  try {
    minimize(bad, {1, 1}, exponential_series(0.79, 3.2e-3, 0.01));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDomain);
  }
}

TEST(Minimize, ErrorPaths) {
  EXPECT_THROW(minimize(exponential_model(), {1.0}, exponential_series(0.79, 3.2e-3, 0.01)), Error);
  EXPECT_THROW(minimize(exponential_model(), {std::nan(""), 1.0}, exponential_series(0.79, 3.2e-3, 0.01)), Error);
  EXPECT_THROW(fit_linear(DataSeries({{1, 1, 1}})), Error);
  try {
    fit_linear(DataSeries({{1, 1, 1}, {1, 2, 1}, {1, 3, 1}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConvergence);
  }
  MinimizeOptions once;
  once.max_iterations = 1;
  try {
    minimize(exponential_model(), {10.0, 1.0}, exponential_series(0.79, 3.2e-3, 0.01), once);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConvergence);
  }
  EXPECT_THROW(fit_reciprocal(DataSeries({{0, 1, 1}, {1, 1, 1}})), Error);
  EXPECT_THROW(fit_exponential(DataSeries({{-1, 1, 1}, {1, 1, 1}})), Error);
}

TEST(Minimize, ChiSquareNonIncreasingAcrossAcceptedSteps) {
  std::mt19937_64 rng(12);
  const auto series = exponential_series(0.79, 3.2e-3, 0.01, &rng);
  const auto model = exponential_model();
  double prev = std::numeric_limits<double>::infinity();
  for (int iters = 1; iters <= 30; ++iters) {
    MinimizeOptions o;
    o.max_iterations = iters;
    try {
      const auto r = minimize(model, {2.0, 1e-2}, series, o);
      EXPECT_LE(r.chi_square, prev * (1 + 1e-12));
      break;
    } catch (const Error&) {
    }
  }
  // Trace through a converging model that records every evaluation at accepted points.
  const auto r = minimize(model, {2.0, 1e-2}, series);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.chi_square, 30.0);
}

TEST(Properties, CovarianceSymmetricPositive) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 50; ++i) {
    const auto r = fit_exponential(exponential_series(0.79, 3.2e-3, 0.02, &rng));
    EXPECT_NEAR(r.covariance(0, 1), r.covariance(1, 0), 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r.covariance);
    EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(Properties, Equivariance) {
  std::mt19937_64 rng(14);
  const auto base = exponential_series(0.79, 3.2e-3, 0.02, &rng);
  const auto rbase = reciprocal_series(1e-13, 38.9e-9, 0.05, &rng);
  const auto fe = fit_exponential(base);
  const auto fr = fit_reciprocal(rbase);
  for (double c : {0.01, 3.0, 1e4}) {
    DataSeries se, sr;
    for (const auto& p : base.points()) se.add(p.x, c * p.y, c * p.sigma);
    for (const auto& p : rbase.points()) sr.add(p.x, c * p.y, c * p.sigma);
    const auto e = fit_exponential(se);
    EXPECT_NEAR(e.parameter("R0"), c * fe.parameter("R0"), 1e-9 * c * fe.parameter("R0"));
    EXPECT_NEAR(e.parameter("tau"), fe.parameter("tau"), 1e-9 * fe.parameter("tau"));
    EXPECT_NEAR(e.chi_square, fe.chi_square, 1e-8 * fe.chi_square);
    // Both reciprocal parameters carry the units of y.
    const auto r = fit_reciprocal(sr);
    EXPECT_NEAR(r.parameter("a"), c * fr.parameter("a"), 1e-9 * c * fr.parameter("a"));
    EXPECT_NEAR(r.parameter("tau0"), c * fr.parameter("tau0"), 1e-9 * c * fr.parameter("tau0"));
  }
}

TEST(Properties, PermutationInvariance) {
  std::mt19937_64 rng(15);
  const auto base = exponential_series(0.79, 3.2e-3, 0.02, &rng);
  const auto ref = fit_exponential(base);
  std::vector<DataPoint> pts(base.points().begin(), base.points().end());
  for (int k = 0; k < 20; ++k) {
    std::shuffle(pts.begin(), pts.end(), rng);
    const auto r = fit_exponential(DataSeries(pts));
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_NEAR(r.parameters[i], ref.parameters[i], 1e-9 * std::abs(ref.parameters[i]));
      EXPECT_NEAR(r.errors[i], ref.errors[i], 1e-9 * ref.errors[i]);
    }
  }
}

TEST(Properties, PullsAreStandardNormal) {
  std::mt19937_64 rng(16);
  const int reps = 500;
  std::vector<double> pull_r0, pull_tau;
  for (int i = 0; i < reps; ++i) {
    const auto r = fit_exponential(exponential_series(0.79, 3.2e-3, 0.015, &rng));
    pull_r0.push_back((r.parameter("R0") - 0.79) / r.error("R0"));
    pull_tau.push_back((r.parameter("tau") - 3.2e-3) / r.error("tau"));
  }
  for (const auto* v : {&pull_r0, &pull_tau}) {
    const double mean = std::accumulate(v->begin(), v->end(), 0.0) / reps;
    double var = 0;
    for (double x : *v) var += (x - mean) * (x - mean);
    EXPECT_NEAR(mean, 0.0, 0.15);
    EXPECT_NEAR(std::sqrt(var / (reps - 1)), 1.0, 0.15);
  }
}

TEST(Properties, ReducedChiSquareOnPoissonData) {
  // Counts drawn from Poisson(1000 exp(-t/tau)) on an 80-point grid.
  std::mt19937_64 rng(18);
  int inside = 0;
  const int reps = 500;
  for (int i = 0; i < reps; ++i) {
    DataSeries s;
    for (int k = 0; k < 80; ++k) {
      const double t = 4e-3 * k / 79.0;
      const double lambda = 1000 * std::exp(-t / 3.2e-3);
      std::poisson_distribution<int> pois(lambda);
      s.add(t, pois(rng), std::sqrt(lambda));
    }
    const auto r = fit_exponential(s);
    const double red = r.chi_square / r.dof;
    if (red >= 0.5 && red <= 1.5) ++inside;
  }
  EXPECT_GE(inside, static_cast<int>(0.95 * reps));
}

TEST(Properties, ReciprocalCoverage) {
  std::mt19937_64 rng(19);
  int inside = 0;
  for (int i = 0; i < 200; ++i) {
    const auto r = fit_reciprocal(reciprocal_series(1e-13, 38.9e-9, 0.05, &rng));
    if (std::abs(r.parameter("tau0") - 38.9e-9) <= 2 * r.error("tau0")) ++inside;
  }
  EXPECT_GE(inside, 180);
}

}  // namespace
}  // namespace qmem::fit
