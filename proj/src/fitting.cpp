// SPDX-License-Identifier: Apache-2.0
#include "fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "error.hpp"

namespace qmem::fit {

DataSeries::DataSeries(std::vector<DataPoint> points) {
  for (const auto& p : points) add(p.x, p.y, p.sigma);
}

void DataSeries::add(double x, double y, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    fail(ErrorCode::kInvalidArgument, "data series: sigma must be positive and finite");
  if (!std::isfinite(x) || !std::isfinite(y))
    fail(ErrorCode::kInvalidArgument, "data series: x and y must be finite");
  points_.push_back({x, y, sigma});
}

double FitResult::parameter(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) fail(ErrorCode::kInvalidArgument, "fit result: no parameter " + name);
  return parameters[static_cast<std::size_t>(it - names.begin())];
}

double FitResult::error(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) fail(ErrorCode::kInvalidArgument, "fit result: no parameter " + name);
  return errors[static_cast<std::size_t>(it - names.begin())];
}

namespace {

struct Linearization {
  Eigen::MatrixXd jacobian;  // rows weighted by 1/sigma
  Eigen::VectorXd residual;  // (y - f) / sigma
  Eigen::VectorXd column_scale;
  double chi_square = 0;
};

double chi_square(const FitModel& model, std::span<const double> p, const DataSeries& series) {
  double sum = 0;
  for (const auto& pt : series.points()) {
    const double f = model.value(pt.x, p);
    if (!std::isfinite(f)) fail(ErrorCode::kDomain, "fit: model returned a non-finite value");
    const double r = (pt.y - f) / pt.sigma;
    sum += r * r;
  }
  return sum;
}

Linearization linearize(const FitModel& model, std::span<const double> p, const DataSeries& series) {
  const auto n = static_cast<Eigen::Index>(model.size());
  const auto m = static_cast<Eigen::Index>(series.size());
  Linearization lin{Eigen::MatrixXd(m, n), Eigen::VectorXd(m), Eigen::VectorXd(n), 0.0};
  std::vector<double> grad(model.size());
  Eigen::Index row = 0;
  for (const auto& pt : series.points()) {
    const double f = model.value(pt.x, p);
    model.gradient(pt.x, p, grad);
    if (!std::isfinite(f) || !std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); }))
      fail(ErrorCode::kDomain, "fit: model returned a non-finite value");
    for (Eigen::Index j = 0; j < n; ++j) lin.jacobian(row, j) = grad[static_cast<std::size_t>(j)] / pt.sigma;
    lin.residual(row) = (pt.y - f) / pt.sigma;
    ++row;
  }
  lin.chi_square = lin.residual.squaredNorm();
  for (Eigen::Index j = 0; j < n; ++j) {
    const double norm = lin.jacobian.col(j).norm();
    lin.column_scale(j) = norm > 0.0 ? norm : 1.0;
  }
  return lin;
}

// Solves min |J d - r|^2 + lambda |S d|^2 with S the column norms of J.
// Working on the column-scaled Jacobian keeps SI-unit parameters that span
// many decades well conditioned.
Eigen::VectorXd damped_step(const Linearization& lin, double lambda) {
  const Eigen::Index m = lin.jacobian.rows();
  const Eigen::Index n = lin.jacobian.cols();
  Eigen::MatrixXd a(m + n, n);
  a.topRows(m) = lin.jacobian * lin.column_scale.cwiseInverse().asDiagonal();
  a.bottomRows(n) = std::sqrt(lambda) * Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m + n);
  b.head(m) = lin.residual;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-13);
  if (qr.rank() < n) fail(ErrorCode::kConvergence, "fit: singular normal equations");
  return qr.solve(b).cwiseQuotient(lin.column_scale);
}

Eigen::MatrixXd covariance(const Linearization& lin) {
  const Eigen::Index n = lin.jacobian.cols();
  const Eigen::MatrixXd scaled = lin.jacobian * lin.column_scale.cwiseInverse().asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
  qr.setThreshold(1e-13);
  if (qr.rank() < n) fail(ErrorCode::kConvergence, "fit: singular normal equations at solution");
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(n, n).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(n, n));
  // (P R^-1)(P R^-1)^T with P the column permutation.
  const Eigen::MatrixXd pr = qr.colsPermutation() * r_inv;
  Eigen::MatrixXd cov = pr * pr.transpose();
  cov = lin.column_scale.cwiseInverse().asDiagonal() * cov * lin.column_scale.cwiseInverse().asDiagonal();
  return 0.5 * (cov + cov.transpose());
}

}  // namespace

FitResult minimize(const FitModel& model, std::vector<double> p, const DataSeries& series,
                   const MinimizeOptions& options) {
  const std::size_t n = model.size();
  if (p.size() != n) fail(ErrorCode::kInvalidArgument, "fit: initial guess has the wrong size");
  if (!std::all_of(p.begin(), p.end(), [](double v) { return std::isfinite(v); }))
    fail(ErrorCode::kInvalidArgument, "fit: initial guess must be finite");
  if (series.size() < n) fail(ErrorCode::kInvalidArgument, "fit: fewer points than parameters");

  Linearization lin = linearize(model, p, series);
  double lambda = model.linear_in_parameters ? 0.0 : options.initial_damping;
  bool converged = false;
  int iteration = 0;

  for (; iteration < options.max_iterations && !converged; ++iteration) {
    const Eigen::VectorXd step = damped_step(lin, lambda);

    const Eigen::Map<const Eigen::VectorXd> current(p.data(), static_cast<Eigen::Index>(n));
    if (step.norm() <= options.step_tolerance * (current.norm() + options.step_tolerance)) {
      converged = true;
      break;
    }

    std::vector<double> trial(n);
    for (std::size_t i = 0; i < n; ++i) trial[i] = p[i] + step(static_cast<Eigen::Index>(i));
    const double trial_chi = chi_square(model, trial, series);

    if (trial_chi <= lin.chi_square) {
      const double previous = lin.chi_square;
      p = std::move(trial);
      lin = linearize(model, p, series);
      lambda /= 10.0;
      if (model.linear_in_parameters || previous - lin.chi_square <= options.chi_square_tolerance * previous ||
          lin.chi_square <= std::numeric_limits<double>::min())
        converged = true;
    } else {
      if (model.linear_in_parameters) {
        // The exact step did not lower chi^2: already at the rounding floor.
        converged = true;
        break;
      }
      lambda = std::max(lambda, 1e-12) * 10.0;
      if (lambda > 1e16) {
        converged = true;  // no descent direction left at working precision
        break;
      }
    }
  }

  if (!converged) {
    std::ostringstream msg;
    msg << "fit: no convergence after " << options.max_iterations << " iterations";
    fail(ErrorCode::kConvergence, msg.str());
  }

  FitResult result;
  result.names = model.parameter_names;
  result.parameters = p;
  result.iterations = iteration;
  result.converged = true;
  result.chi_square = lin.chi_square;
  result.dof = static_cast<int>(series.size()) - static_cast<int>(n);

  result.covariance = covariance(lin);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    result.errors.push_back(std::sqrt(std::max(0.0, result.covariance(k, k))));
  }
  for (const auto& pt : series.points()) result.normalized_residuals.push_back((pt.y - model.value(pt.x, p)) / pt.sigma);
  return result;
}

FitModel exponential_model() {
  FitModel m;
  m.parameter_names = {"R0", "tau"};
  m.value = [](double x, std::span<const double> p) { return p[0] * std::exp(-x / p[1]); };
  m.gradient = [](double x, std::span<const double> p, std::span<double> g) {
    const double e = std::exp(-x / p[1]);
    g[0] = e;
    g[1] = p[0] * e * x / (p[1] * p[1]);
  };
  return m;
}

FitModel reciprocal_model() {
  FitModel m;
  m.parameter_names = {"a", "tau0"};
  m.value = [](double x, std::span<const double> p) { return p[0] / x + p[1]; };
  m.gradient = [](double x, std::span<const double>, std::span<double> g) {
    g[0] = 1.0 / x;
    g[1] = 1.0;
  };
  m.linear_in_parameters = true;
  return m;
}

FitModel linear_model() {
  FitModel m;
  m.parameter_names = {"slope", "intercept"};
  m.value = [](double x, std::span<const double> p) { return p[0] * x + p[1]; };
  m.gradient = [](double x, std::span<const double>, std::span<double> g) {
    g[0] = x;
    g[1] = 1.0;
  };
  m.linear_in_parameters = true;
  return m;
}

FitModel proportional_model() {
  FitModel m;
  m.parameter_names = {"slope"};
  m.value = [](double x, std::span<const double> p) { return p[0] * x; };
  m.gradient = [](double x, std::span<const double>, std::span<double> g) { g[0] = x; };
  m.linear_in_parameters = true;
  return m;
}

FitResult fit_exponential(const DataSeries& series) {
  if (series.size() < 2) fail(ErrorCode::kInvalidArgument, "exponential fit: need at least 2 points");
  for (const auto& pt : series.points())
    if (pt.x < 0.0) fail(ErrorCode::kInvalidArgument, "exponential fit: x must be non-negative");
  const auto pts = series.points();
  const auto [first, last] =
      std::minmax_element(pts.begin(), pts.end(), [](const DataPoint& a, const DataPoint& b) { return a.x < b.x; });
  const double r0 = first->y;
  double tau = last->x - first->x;
  if (first->y > 0 && last->y > 0 && last->y < first->y && last->x > first->x)
    tau = (last->x - first->x) / std::log(first->y / last->y);
  if (!(tau > 0.0)) tau = 1.0;
  // Carry the first-point offset into the amplitude guess.
  const double amplitude = r0 * std::exp(first->x / tau);
  return minimize(exponential_model(), {amplitude, tau}, series);
}

FitResult fit_reciprocal(const DataSeries& series) {
  for (const auto& pt : series.points())
    if (!(pt.x > 0.0)) fail(ErrorCode::kInvalidArgument, "reciprocal fit: x must be positive");
  if (series.size() < 2) fail(ErrorCode::kInvalidArgument, "reciprocal fit: need at least 2 points");
  const auto pts = series.points();
  const auto [lo, hi] =
      std::minmax_element(pts.begin(), pts.end(), [](const DataPoint& a, const DataPoint& b) { return a.x < b.x; });
  const double tau0 = hi->y;
  const double a = (lo->y - tau0) * lo->x;
  return minimize(reciprocal_model(), {a, tau0}, series);
}

FitResult fit_linear(const DataSeries& series, bool with_intercept) {
  if (with_intercept) return minimize(linear_model(), {0.0, 0.0}, series);
  return minimize(proportional_model(), {0.0}, series);
}

std::vector<double> numeric_gradient(const FitModel& model, double x, std::span<const double> p) {
  std::vector<double> grad(p.size());
  std::vector<double> shifted(p.begin(), p.end());
  const double scale = std::cbrt(std::numeric_limits<double>::epsilon());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double h = scale * std::max(std::abs(p[i]), 1e-300);
    shifted[i] = p[i] + h;
    const double up = model.value(x, shifted);
    shifted[i] = p[i] - h;
    const double down = model.value(x, shifted);
    shifted[i] = p[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace qmem::fit
