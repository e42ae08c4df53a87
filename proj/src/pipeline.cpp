// SPDX-License-Identifier: Apache-2.0
#include "pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "error.hpp"

namespace qmem::pipeline {

using nlohmann::json;

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

json to_json(const std::optional<EstimateWithError>& e) {
  if (!e) return nullptr;
  return {{"value", e->value}, {"sigma", e->sigma}, {"sigma_syst", e->sigma_syst}};
}

json to_json(const fit::FitResult& f) {
  json params = json::object();
  for (std::size_t i = 0; i < f.names.size(); ++i)
    params[f.names[i]] = {{"value", f.parameters[i]}, {"sigma", f.errors[i]}};
  return {{"parameters", params},
          {"chi_square", f.chi_square},
          {"dof", f.dof},
          {"converged", f.converged},
          {"iterations", f.iterations}};
}

std::string fit_csv(const fit::FitResult& f) {
  std::string out = "parameter,value,sigma\n";
  for (std::size_t i = 0; i < f.names.size(); ++i)
    out += f.names[i] + "," + fmt(f.parameters[i]) + "," + fmt(f.errors[i]) + "\n";
  out += "chi_square," + fmt(f.chi_square) + ",\n";
  out += "dof," + std::to_string(f.dof) + ",\n";
  return out;
}

template <typename Fn>
std::optional<EstimateWithError> attempt(Fn&& fn) {
  try {
    return fn();
  } catch (const Error&) {
    return std::nullopt;
  }
}

// Column pair "name,name_sigma" for an optional estimate; empty cells when absent.
std::string cells(const std::optional<EstimateWithError>& e) {
  return e ? fmt(e->value) + "," + fmt(e->sigma) : std::string(",");
}

json summary_header(const char* command, std::uint64_t seed) {
  return {{"schema_version", kSummarySchemaVersion},
          {"command", command},
          {"code_version", QMEM_VERSION_STRING},
          {"seed", seed}};
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

EstimateWithError eta_tot(const phys::DetectionChain& d) {
  return est::eta_tot({d.escape_efficiency, d.escape_efficiency_sigma},
                      {d.path_transmission, d.path_transmission_sigma},
                      {d.detector_efficiency, d.detector_efficiency_sigma});
}

DelayEstimates estimate_delay(const sim::Counts& counts, const phys::DetectionChain& detection,
                              std::optional<double> write_power,
                              const std::optional<EstimateWithError>& external_p_r) {
  DelayEstimates e;
  e.storage_time = counts.storage_time;
  e.p_w = attempt([&] { return est::write_probability(counts); });
  e.p_r = counts.read_available ? attempt([&] { return est::read_probability(counts); }) : external_p_r;
  e.R = attempt([&] { return est::retrieval_conditional(counts); });
  e.alpha = attempt([&] { return est::anticorrelation(counts); });
  if (counts.n_cycles > 0) {
    const double n = static_cast<double>(counts.n_cycles);
    const double p = static_cast<double>(counts.n_write) / n;
    e.herald_probability = EstimateWithError{p, std::sqrt(p * (1.0 - p) / n), 0.0};
  }

  if (counts.read_available) {
    e.g2 = attempt([&] { return est::cross_correlation(counts); });
  } else if (e.R && e.p_r && e.p_r->value > 0.0) {
    const double g = e.R->value / e.p_r->value;
    const double rel = std::hypot(e.R->value > 0 ? e.R->sigma / e.R->value : 0.0, e.p_r->sigma / e.p_r->value);
    e.g2 = EstimateWithError{g, g * rel, 0.0};
  }
  if (e.g2) e.bell = est::visibility_and_s(e.g2->value);

  if (e.p_w && e.R) {
    const double pbg = est::background_model(e.p_w->value, write_power, detection.constant_background,
                                             detection.write_leak_fraction);
    const bool leak_applies = !(write_power && *write_power == 0.0);
    e.p_bg = EstimateWithError{pbg, leak_applies ? detection.write_leak_fraction * e.p_w->sigma : 0.0,
                               detection.constant_background_sigma};
    const EstimateWithError eta = eta_tot(detection);
    e.Rc = attempt([&] { return est::calibrated_retrieval(*e.R, eta, *e.p_bg, *e.p_w); });
    const auto rc_raw = attempt([&] { return est::calibrated_retrieval(*e.R, eta, {0.0, 0.0, 0.0}, *e.p_w); });
    if (e.g2) {
      if (e.Rc) e.chi = attempt([&] { return est::intrinsic_efficiency(*e.Rc, *e.g2); });
      if (rc_raw) e.chi_raw = attempt([&] { return est::intrinsic_efficiency(*rc_raw, *e.g2); });
    }
  }
  return e;
}

json to_json(const DelayEstimates& e) {
  json bell = nullptr;
  if (e.bell) bell = {{"V", e.bell->visibility}, {"S", e.bell->s}, {"violates_bell_bound", e.bell->violates}};
  return {{"storage_time_s", e.storage_time},
          {"p_w", to_json(e.p_w)},
          {"p_r", to_json(e.p_r)},
          {"p_bg", to_json(e.p_bg)},
          {"R", to_json(e.R)},
          {"g2", to_json(e.g2)},
          {"Rc", to_json(e.Rc)},
          {"chi", to_json(e.chi)},
          {"chi_raw", to_json(e.chi_raw)},
          {"alpha", to_json(e.alpha)},
          {"herald_probability", to_json(e.herald_probability)},
          {"bell", bell}};
}

std::string counts_csv(const sim::CountsTable& table) {
  std::string out = "storage_time_s,n_trials,n_cycles,n_write,n_read,n_coincidence,n_d1,n_d2,n_d12\n";
  for (const auto& c : table.delays) {
    out += fmt(c.storage_time) + "," + std::to_string(c.n_trials) + "," + std::to_string(c.n_cycles) + "," +
           std::to_string(c.n_write) + "," + (c.read_available ? std::to_string(c.n_read) : std::string()) + "," +
           std::to_string(c.n_coincidence) + "," + std::to_string(c.n_d1) + "," + std::to_string(c.n_d2) + "," +
           std::to_string(c.n_d12) + "\n";
  }
  return out;
}

SimulateResult simulate(const RunConfig& config, std::uint64_t trials, std::uint64_t seed, unsigned workers) {
  if (trials == 0) fail(ErrorCode::kInvalidArgument, "simulate: trials must be at least 1");
  const auto& ex = config.experiment;
  const sim::RunOptions options{workers};
  SimulateResult r;
  r.counts = sim::run(ex, trials, seed, options);
  if (ex.mode == sim::MeasurementMode::kFeedback)
    r.companion = sim::run_correlation(ex, trials, derive_seed(seed, 1), options);

  for (std::size_t i = 0; i < r.counts.delays.size(); ++i) {
    std::optional<EstimateWithError> p_r;
    if (r.companion) p_r = attempt([&] { return est::read_probability(r.companion->delays[i]); });
    r.estimates.push_back(estimate_delay(r.counts.delays[i], ex.detection, ex.write_power, p_r));
  }
  return r;
}

Bundle render_simulation(const RunConfig& config, const SimulateResult& r, std::uint64_t trials, std::uint64_t seed) {
  const auto& ex = config.experiment;
  json summary = summary_header("simulate", seed);
  summary["mode"] = ex.mode == sim::MeasurementMode::kFeedback ? "feedback" : "correlation";
  summary["trials"] = trials;
  summary["p_r_source"] = r.companion ? "companion_correlation_run" : "measured";
  summary["eta_tot"] = to_json(std::optional<EstimateWithError>(eta_tot(ex.detection)));
  json delays = json::array();
  for (const auto& e : r.estimates) delays.push_back(to_json(e));
  summary["delays"] = delays;
  // Shortest delay stands in for t -> 0.
  std::size_t first = 0;
  for (std::size_t i = 1; i < r.estimates.size(); ++i)
    if (r.estimates[i].storage_time < r.estimates[first].storage_time) first = i;
  summary["chi_t0"] = to_json(r.estimates.empty() ? std::nullopt : r.estimates[first].chi);

  Bundle bundle{{"counts.csv", counts_csv(r.counts)}};
  if (r.companion) bundle.push_back({"companion_counts.csv", counts_csv(*r.companion)});
  bundle.push_back({"summary.json", summary.dump(2) + "\n"});
  return bundle;
}

Fig2Result reproduce_fig2(const RunConfig& config, std::uint64_t trials, std::uint64_t seed, unsigned workers) {
  const auto& settings = config.reproduce.fig2;
  if (trials == 0) trials = settings.trials;
  Fig2Result out;
  fit::DataSeries excitation;
  for (std::size_t i = 0; i < settings.write_powers.size(); ++i) {
    sim::ExperimentConfig ex = config.experiment;
    ex.mode = sim::MeasurementMode::kCorrelation;
    ex.chi0 = settings.chi0;
    ex.write_power = settings.write_powers[i];
    ex.excitation_slope = settings.excitation_slope;
    ex.timing.storage_delays = {settings.delay};
    const auto table = sim::run_correlation(ex, trials, derive_seed(seed, 100 + i), {workers});

    Fig2Row row;
    row.write_power = settings.write_powers[i];
    row.mu = ex.mu();
    row.estimates = estimate_delay(table.delays[0], ex.detection, ex.write_power);
    const auto& e = row.estimates;
    if (!e.p_w || !e.p_bg || !e.g2 || !e.chi)
      fail(ErrorCode::kInsufficientCounts, "fig2: too few counts at write power " + fmt(row.write_power));
    row.mu_estimate = est::excitation_probability(*e.p_w, e.p_bg->value, ex.detection.total_efficiency());
    excitation.add(row.write_power, row.mu_estimate.value, std::max(row.mu_estimate.sigma, 1e-12));
    out.rows.push_back(row);
  }

  out.excitation_fit = fit::fit_linear(excitation, true);
  double sum = 0;
  for (const auto& r : out.rows) sum += r.estimates.chi->value;
  out.chi_mean = sum / static_cast<double>(out.rows.size());
  out.g2_min = out.rows.front().estimates.g2->value;
  out.g2_strictly_decreasing = true;
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    const auto& r = out.rows[i];
    out.chi_max_relative_deviation =
        std::max(out.chi_max_relative_deviation, std::abs(r.estimates.chi->value - out.chi_mean) / out.chi_mean);
    out.g2_min = std::min(out.g2_min, r.estimates.g2->value);
    if (i > 0 && !(r.estimates.g2->value < out.rows[i - 1].estimates.g2->value)) out.g2_strictly_decreasing = false;
  }
  return out;
}

Fig3Result reproduce_fig3(const RunConfig& config, std::uint64_t seed) {
  const auto& settings = config.reproduce.fig3;
  const auto& model = config.experiment.readout;
  RngStream rng(derive_seed(seed, 3));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Fig3Result out;
  for (double power : settings.read_powers) {
    const double width = phys::readout_pulse_width(power, model);
    const double sigma = settings.relative_noise * width;
    out.widths.add(power, width + sigma * gauss(rng), sigma);
  }
  out.fit = fit::fit_reciprocal(out.widths);
  return out;
}

Fig4Result reproduce_fig4(const RunConfig& config, std::uint64_t trials, std::uint64_t seed, unsigned workers) {
  if (trials == 0) trials = config.reproduce.trials;
  sim::ExperimentConfig ex = config.experiment;
  ex.mode = sim::MeasurementMode::kFeedback;
  const auto feedback = sim::run_feedback(ex, trials, seed, {workers});
  const auto companion = sim::run_correlation(ex, trials, derive_seed(seed, 1), {workers});

  Fig4Result out;
  fit::DataSeries decay;
  for (std::size_t i = 0; i < feedback.delays.size(); ++i) {
    const auto p_r = attempt([&] { return est::read_probability(companion.delays[i]); });
    auto e = estimate_delay(feedback.delays[i], ex.detection, ex.write_power, p_r);
    if (!e.Rc) fail(ErrorCode::kInsufficientCounts, "fig4: no heralds at delay " + fmt(e.storage_time));
    decay.add(e.storage_time, e.Rc->value, e.Rc->sigma);
    out.rows.push_back(std::move(e));
  }
  out.lifetime_fit = fit::fit_exponential(decay);

  // chi at t -> 0 from the fitted amplitude and the shortest delay's g2.
  std::size_t first = 0;
  for (std::size_t i = 1; i < out.rows.size(); ++i)
    if (out.rows[i].storage_time < out.rows[first].storage_time) first = i;
  if (out.rows[first].g2) {
    const EstimateWithError r0{out.lifetime_fit.parameters[0], out.lifetime_fit.errors[0],
                               out.rows[first].Rc->sigma_syst};
    out.chi_t0 = attempt([&] { return est::intrinsic_efficiency(r0, *out.rows[first].g2); });
  }
  return out;
}

Bundle render_fig2(const Fig2Result& r, std::uint64_t seed) {
  std::string table =
      "write_power_W,mu_set,mu_est,mu_est_sigma,p_w,p_w_sigma,g2,g2_sigma,R,R_sigma,Rc,Rc_sigma,chi,chi_sigma,"
      "chi_raw,chi_raw_sigma\n";
  for (const auto& row : r.rows) {
    const auto& e = row.estimates;
    table += fmt(row.write_power) + "," + fmt(row.mu) + "," + fmt(row.mu_estimate.value) + "," +
             fmt(row.mu_estimate.sigma) + "," + cells(e.p_w) + "," + cells(e.g2) + "," + cells(e.R) + "," +
             cells(e.Rc) + "," + cells(e.chi) + "," + cells(e.chi_raw) + "\n";
  }
  json summary = summary_header("reproduce", seed);
  summary["figure"] = "fig2";
  summary["chi_mean"] = r.chi_mean;
  summary["chi_max_relative_deviation"] = r.chi_max_relative_deviation;
  summary["g2_min"] = r.g2_min;
  summary["g2_strictly_decreasing"] = r.g2_strictly_decreasing;
  summary["excitation_fit"] = to_json(r.excitation_fit);
  return {{"fig2_curve.csv", table}, {"fig2_fit.csv", fit_csv(r.excitation_fit)}, {"summary.json", summary.dump(2) + "\n"}};
}

Bundle render_fig3(const Fig3Result& r, std::uint64_t seed) {
  std::string table = "read_power_W,fwhm_s,fwhm_sigma_s,fit_s,normalized_residual\n";
  const auto model = fit::reciprocal_model();
  std::size_t i = 0;
  for (const auto& pt : r.widths.points()) {
    table += fmt(pt.x) + "," + fmt(pt.y) + "," + fmt(pt.sigma) + "," + fmt(model.value(pt.x, r.fit.parameters)) + "," +
             fmt(r.fit.normalized_residuals[i++]) + "\n";
  }
  json summary = summary_header("reproduce", seed);
  summary["figure"] = "fig3";
  summary["reciprocal_fit"] = to_json(r.fit);
  return {{"fig3_curve.csv", table}, {"fig3_fit.csv", fit_csv(r.fit)}, {"summary.json", summary.dump(2) + "\n"}};
}

Bundle render_fig4(const Fig4Result& r, std::uint64_t seed) {
  std::string table = "storage_time_s,herald_probability,herald_probability_sigma,R,R_sigma,Rc,Rc_sigma,alpha,alpha_sigma\n";
  for (const auto& e : r.rows)
    table += fmt(e.storage_time) + "," + cells(e.herald_probability) + "," + cells(e.R) + "," + cells(e.Rc) + "," +
             cells(e.alpha) + "\n";
  json summary = summary_header("reproduce", seed);
  summary["figure"] = "fig4";
  summary["lifetime_fit"] = to_json(r.lifetime_fit);
  summary["chi_t0"] = to_json(r.chi_t0);
  return {{"fig4_curve.csv", table}, {"fig4_fit.csv", fit_csv(r.lifetime_fit)}, {"summary.json", summary.dump(2) + "\n"}};
}

Bundle reproduce(const RunConfig& config, const std::string& figure, std::uint64_t trials, std::uint64_t seed,
                 unsigned workers) {
  if (figure == "fig2") return render_fig2(reproduce_fig2(config, trials, seed, workers), seed);
  if (figure == "fig3") return render_fig3(reproduce_fig3(config, seed), seed);
  if (figure == "fig4") return render_fig4(reproduce_fig4(config, trials, seed, workers), seed);
  fail(ErrorCode::kInvalidArgument, "reproduce: unknown figure '" + figure + "' (expected fig2, fig3 or fig4)");
}

Bundle analyze(std::span<const ingest::EventRecord> events, const AnalyzeParams& params) {
  if (params.window_ns == 0) fail(ErrorCode::kInvalidArgument, "analyze: window must be positive");
  auto result = ingest::coincidences(events, params.window_ns, params.delay_ns);
  if (params.trials) result.counts.n_trials = *params.trials;
  result.counts.read_available = result.counts.n_trials > 0;
  result.counts.check_invariants();

  const auto e = estimate_delay(result.counts, params.detection, std::nullopt);
  json summary = summary_header("analyze", 0);
  summary.erase("seed");
  summary["window_ns"] = params.window_ns;
  summary["delay_ns"] = params.delay_ns;
  summary["events"] = events.size();
  summary["piled_up_writes"] = result.piled_up;
  const auto& c = result.counts;
  summary["counts"] = {{"n_trials", c.n_trials}, {"n_write", c.n_write},   {"n_read", c.n_read},
                       {"n_coincidence", c.n_coincidence}, {"n_d1", c.n_d1}, {"n_d2", c.n_d2},
                       {"n_d12", c.n_d12}};
  summary["estimates"] = to_json(e);
  sim::CountsTable table{sim::MeasurementMode::kCorrelation, {c}};
  return {{"counts.csv", counts_csv(table)}, {"estimates.json", summary.dump(2) + "\n"}};
}

}  // namespace qmem::pipeline
