// SPDX-License-Identifier: Apache-2.0
//
// Weighted nonlinear least squares (Levenberg-Marquardt) and the fit
// models used for the memory's lifetime, read-out width and excitation
// curves.
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace qmem::fit {

struct DataPoint {
  double x = 0;
  double y = 0;
  double sigma = 1;
};

/// Data to fit. Every sigma must be strictly positive and finite.
class DataSeries {
 public:
  DataSeries() = default;
  explicit DataSeries(std::vector<DataPoint> points);

  void add(double x, double y, double sigma);
  std::span<const DataPoint> points() const { return points_; }
  std::size_t size() const { return points_.size(); }

 private:
  std::vector<DataPoint> points_;
};

struct FitModel {
  std::vector<std::string> parameter_names;
  std::function<double(double x, std::span<const double> p)> value;
  std::function<void(double x, std::span<const double> p, std::span<double> grad)> gradient;
  // Linear models are solved by a single undamped Gauss-Newton step.
  bool linear_in_parameters = false;

  std::size_t size() const { return parameter_names.size(); }
};

struct FitResult {
  std::vector<std::string> names;
  std::vector<double> parameters;
  std::vector<double> errors;
  Eigen::MatrixXd covariance;
  std::vector<double> normalized_residuals;  // (y - f) / sigma
  double chi_square = 0;
  int dof = 0;
  bool converged = false;
  int iterations = 0;

  double parameter(const std::string& name) const;
  double error(const std::string& name) const;
};

struct MinimizeOptions {
  int max_iterations = 200;
  double initial_damping = 1e-3;
  double chi_square_tolerance = 1e-10;  // relative change
  double step_tolerance = 1e-12;        // relative to the parameter norm
};

/// Throws qmem::Error (kConvergence) on non-convergence or singular normal
/// equations, (kDomain) on non-finite model output.
FitResult minimize(const FitModel& model, std::vector<double> initial_guess, const DataSeries& series,
                   const MinimizeOptions& options = {});

FitModel exponential_model();   // R0 exp(-x / tau)
FitModel reciprocal_model();    // a / x + tau0
FitModel linear_model();        // slope x + intercept
FitModel proportional_model();  // slope x

FitResult fit_exponential(const DataSeries& series);
FitResult fit_reciprocal(const DataSeries& series);
FitResult fit_linear(const DataSeries& series, bool with_intercept = true);

/// Central-difference gradient with a per-parameter step scaled to the
/// parameter magnitude.
std::vector<double> numeric_gradient(const FitModel& model, double x, std::span<const double> p);

}  // namespace qmem::fit
