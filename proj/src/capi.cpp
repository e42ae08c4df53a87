// SPDX-License-Identifier: Apache-2.0
#include "qmem/qmem.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "config.hpp"
#include "error.hpp"
#include "estimators.hpp"
#include "fitting.hpp"
#include "ingest.hpp"
#include "physmodel.hpp"
#include "pipeline.hpp"
#include "simkernel.hpp"

struct qmem_config {
  qmem::RunConfig value;
};
struct qmem_counts {
  qmem::sim::CountsTable value;
};
struct qmem_events {
  std::vector<qmem::ingest::EventRecord> value;
};
struct qmem_bundle {
  qmem::pipeline::Bundle value;
};

namespace {

thread_local std::string last_error;

qmem_status to_status(qmem::ErrorCode code) {
  using qmem::ErrorCode;
  switch (code) {
    case ErrorCode::kInvalidArgument: return QMEM_E_INVALID_ARGUMENT;
    case ErrorCode::kDomain: return QMEM_E_DOMAIN;
    case ErrorCode::kInsufficientCounts: return QMEM_E_INSUFFICIENT_COUNTS;
    case ErrorCode::kParse: return QMEM_E_PARSE;
    case ErrorCode::kConfig: return QMEM_E_CONFIG;
    case ErrorCode::kConvergence: return QMEM_E_CONVERGENCE;
    case ErrorCode::kIo: return QMEM_E_IO;
  }
  return QMEM_E_INTERNAL;
}

qmem_status set_error(qmem_status status, std::string message) {
  last_error = std::move(message);
  return status;
}

template <typename Fn>
qmem_status guard(Fn&& fn) {
  try {
    fn();
    return QMEM_OK;
  } catch (const qmem::Error& e) {
    return set_error(to_status(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return set_error(QMEM_E_CONFIG, e.what());
  } catch (const std::bad_alloc&) {
    return set_error(QMEM_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(QMEM_E_INTERNAL, e.what());
  } catch (...) {
    return set_error(QMEM_E_INTERNAL, "unknown error");
  }
}

void require_ptr(const void* p, const char* name) {
  if (p == nullptr) qmem::fail(qmem::ErrorCode::kInvalidArgument, std::string(name) + " must not be NULL");
}

qmem_status copy_string(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = s.size();
  if (cap < s.size() + 1) return set_error(QMEM_E_BUFFER_TOO_SMALL, "buffer too small");
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return QMEM_OK;
}

qmem_counts_row to_row(const qmem::sim::Counts& c) {
  return {c.storage_time, c.n_trials, c.n_cycles, c.n_write, c.n_read, c.n_coincidence,
          c.n_d1,         c.n_d2,     c.n_d12,    c.read_available ? 1 : 0};
}

qmem::sim::Counts from_row(const qmem_counts_row& r) {
  qmem::sim::Counts c;
  c.storage_time = r.storage_time;
  c.n_trials = r.n_trials;
  c.n_cycles = r.n_cycles;
  c.n_write = r.n_write;
  c.n_read = r.n_read;
  c.n_coincidence = r.n_coincidence;
  c.n_d1 = r.n_d1;
  c.n_d2 = r.n_d2;
  c.n_d12 = r.n_d12;
  c.read_available = r.read_available != 0;
  return c;
}

qmem::EstimateWithError from_c(const qmem_estimate* e) { return {e->value, e->sigma, e->sigma_syst}; }
qmem_estimate to_c(const qmem::EstimateWithError& e) { return {e.value, e.sigma, e.sigma_syst}; }

qmem::phys::CavityParams cavity(double transmission, double loss) {
  qmem::phys::CavityParams c;
  c.coupler_transmission = transmission;
  c.loss_per_round_trip = loss;
  return c;
}

template <typename Fn>
qmem_status scalar(double* out, Fn&& fn) {
  return guard([&] {
    require_ptr(out, "out");
    *out = fn();
  });
}

template <typename Fn>
qmem_status estimate(qmem_estimate* out, Fn&& fn) {
  return guard([&] {
    require_ptr(out, "out");
    *out = to_c(fn());
  });
}

}  // namespace

extern "C" {

const char* qmem_version(void) { return QMEM_VERSION_STRING; }
const char* qmem_last_error(void) { return last_error.c_str(); }

const char* qmem_status_name(qmem_status status) {
  switch (status) {
    case QMEM_OK: return "ok";
    case QMEM_E_INVALID_ARGUMENT: return "invalid argument";
    case QMEM_E_DOMAIN: return "domain error";
    case QMEM_E_INSUFFICIENT_COUNTS: return "insufficient counts";
    case QMEM_E_PARSE: return "parse error";
    case QMEM_E_CONFIG: return "config error";
    case QMEM_E_CONVERGENCE: return "convergence failure";
    case QMEM_E_IO: return "i/o error";
    case QMEM_E_BUFFER_TOO_SMALL: return "buffer too small";
    case QMEM_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

unsigned qmem_default_workers(void) { return qmem::sim::default_workers(); }

qmem_status qmem_finesse(double t, double l, double* out) {
  return scalar(out, [&] { return qmem::phys::finesse(cavity(t, l)); });
}
qmem_status qmem_free_spectral_range(double length, double* out) {
  return scalar(out, [&] {
    qmem::phys::CavityParams c;
    c.round_trip_length = length;
    return qmem::phys::free_spectral_range(c);
  });
}
qmem_status qmem_escape_efficiency(double t, double l, double* out) {
  return scalar(out, [&] { return qmem::phys::escape_efficiency(cavity(t, l)); });
}
qmem_status qmem_intensity_buildup(double f, double eta, double* out) {
  return scalar(out, [&] { return qmem::phys::intensity_buildup(f, eta); });
}
qmem_status qmem_emission_enhancement(double f, double* out) {
  return scalar(out, [&] { return qmem::phys::emission_enhancement(f); });
}
qmem_status qmem_purcell_retrieval(double c, double* out) {
  return scalar(out, [&] { return qmem::phys::purcell_retrieval(c); });
}
qmem_status qmem_transit_lifetime(double waist, double temperature, double mass, double* out) {
  return scalar(out, [&] { return qmem::phys::transit_lifetime(waist, temperature, mass); });
}
qmem_status qmem_free_fall_time(double d, double* out) {
  return scalar(out, [&] { return qmem::phys::free_fall_time(d); });
}
qmem_status qmem_readout_pulse_width(double power, double coefficient, double floor, double* out) {
  return scalar(out, [&] {
    qmem::phys::ReadoutModel m;
    m.width_coefficient = coefficient;
    m.width_floor = floor;
    m.validate();
    return qmem::phys::readout_pulse_width(power, m);
  });
}
qmem_status qmem_repeater_overhead(double r, double n, double t0, double* out) {
  return scalar(out, [&] { return qmem::phys::repeater_overhead(r, n, t0); });
}
qmem_status qmem_light_time(double d, double* out) {
  return scalar(out, [&] { return qmem::phys::light_time(d); });
}

qmem_status qmem_config_default(qmem_config** out) {
  return guard([&] {
    require_ptr(out, "out");
    *out = new qmem_config{};
  });
}
qmem_status qmem_config_load(const char* path, qmem_config** out) {
  return guard([&] {
    require_ptr(path, "path");
    require_ptr(out, "out");
    *out = new qmem_config{qmem::load_config(path)};
  });
}
qmem_status qmem_config_parse(const char* text, qmem_config** out) {
  return guard([&] {
    require_ptr(text, "json_text");
    require_ptr(out, "out");
    *out = new qmem_config{qmem::parse_config(text)};
  });
}
qmem_status qmem_config_set(qmem_config* config, const char* key, const char* value_json) {
  return guard([&] {
    require_ptr(config, "config");
    require_ptr(key, "key_path");
    require_ptr(value_json, "value_json");
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(value_json);
    } catch (const nlohmann::json::parse_error&) {
      qmem::fail(qmem::ErrorCode::kConfig, std::string(key) + ": value is not valid JSON");
    }
    qmem::set_config_value(config->value, key, value);
  });
}
qmem_status qmem_config_to_json(const qmem_config* config, char* buf, size_t cap, size_t* needed) {
  std::string text;
  const auto s = guard([&] {
    require_ptr(config, "config");
    text = qmem::config_to_json(config->value).dump(2);
  });
  return s != QMEM_OK ? s : copy_string(text, buf, cap, needed);
}
void qmem_config_free(qmem_config* config) { delete config; }

qmem_status qmem_simulate(const qmem_config* config, uint64_t trials, uint64_t seed, unsigned workers,
                          qmem_counts** out) {
  return guard([&] {
    require_ptr(config, "config");
    require_ptr(out, "out");
    if (trials == 0) qmem::fail(qmem::ErrorCode::kInvalidArgument, "trials must be at least 1");
    *out = new qmem_counts{qmem::sim::run(config->value.experiment, trials, seed, {workers})};
  });
}
size_t qmem_counts_size(const qmem_counts* counts) { return counts ? counts->value.delays.size() : 0; }
qmem_status qmem_counts_row_at(const qmem_counts* counts, size_t index, qmem_counts_row* out) {
  return guard([&] {
    require_ptr(counts, "counts");
    require_ptr(out, "out");
    if (index >= counts->value.delays.size()) qmem::fail(qmem::ErrorCode::kInvalidArgument, "row index out of range");
    *out = to_row(counts->value.delays[index]);
  });
}
void qmem_counts_free(qmem_counts* counts) { delete counts; }

qmem_status qmem_analytic_expectations(const qmem_config* config, double t, qmem_expectations* out) {
  return guard([&] {
    require_ptr(config, "config");
    require_ptr(out, "out");
    const auto e = qmem::sim::analytic_expectations(config->value.experiment, t);
    *out = {e.p_w, e.p_r, e.p_wr, e.g2, e.R, e.p1, e.p2, e.p12, e.alpha, e.herald_probability};
  });
}

qmem_status qmem_cross_correlation(const qmem_counts_row* c, qmem_estimate* out) {
  return estimate(out, [&] {
    require_ptr(c, "counts");
    return qmem::est::cross_correlation(from_row(*c));
  });
}
qmem_status qmem_retrieval_conditional(const qmem_counts_row* c, qmem_estimate* out) {
  return estimate(out, [&] {
    require_ptr(c, "counts");
    return qmem::est::retrieval_conditional(from_row(*c));
  });
}
qmem_status qmem_anticorrelation(const qmem_counts_row* c, qmem_estimate* out) {
  return estimate(out, [&] {
    require_ptr(c, "counts");
    return qmem::est::anticorrelation(from_row(*c));
  });
}
qmem_status qmem_calibrated_retrieval(const qmem_estimate* r, const qmem_estimate* eta, const qmem_estimate* p_bg,
                                      const qmem_estimate* p_w, qmem_estimate* out) {
  return estimate(out, [&] {
    require_ptr(r, "retrieval");
    require_ptr(eta, "eta_tot");
    require_ptr(p_bg, "p_bg");
    require_ptr(p_w, "p_w");
    return qmem::est::calibrated_retrieval(from_c(r), from_c(eta), from_c(p_bg), from_c(p_w));
  });
}
qmem_status qmem_eta_tot(const qmem_estimate* a, const qmem_estimate* b, const qmem_estimate* c, qmem_estimate* out) {
  return estimate(out, [&] {
    require_ptr(a, "escape");
    require_ptr(b, "transmission");
    require_ptr(c, "detector");
    return qmem::est::eta_tot(from_c(a), from_c(b), from_c(c));
  });
}
qmem_status qmem_intrinsic_efficiency(const qmem_estimate* rc, const qmem_estimate* g2, qmem_estimate* out) {
  return estimate(out, [&] {
    require_ptr(rc, "calibrated");
    require_ptr(g2, "g2");
    return qmem::est::intrinsic_efficiency(from_c(rc), from_c(g2));
  });
}
qmem_status qmem_visibility_and_s(double g2, double* visibility, double* s, int* violates) {
  return guard([&] {
    const auto b = qmem::est::visibility_and_s(g2);
    if (visibility) *visibility = b.visibility;
    if (s) *s = b.s;
    if (violates) *violates = b.violates ? 1 : 0;
  });
}

qmem_status qmem_fit(qmem_fit_model model, const double* x, const double* y, const double* sigma, size_t n,
                     qmem_fit_result* out) {
  return guard([&] {
    require_ptr(out, "out");
    if (n > 0) {
      require_ptr(x, "x");
      require_ptr(y, "y");
      require_ptr(sigma, "sigma");
    }
    qmem::fit::DataSeries series;
    for (size_t i = 0; i < n; ++i) series.add(x[i], y[i], sigma[i]);
    qmem::fit::FitResult r;
    switch (model) {
      case QMEM_FIT_EXPONENTIAL: r = qmem::fit::fit_exponential(series); break;
      case QMEM_FIT_RECIPROCAL: r = qmem::fit::fit_reciprocal(series); break;
      case QMEM_FIT_LINEAR: r = qmem::fit::fit_linear(series, true); break;
      case QMEM_FIT_PROPORTIONAL: r = qmem::fit::fit_linear(series, false); break;
      default: qmem::fail(qmem::ErrorCode::kInvalidArgument, "unknown fit model");
    }
    qmem_fit_result res{};
    res.n_params = static_cast<int>(r.parameters.size());
    for (int i = 0; i < res.n_params; ++i) {
      res.params[i] = r.parameters[i];
      res.errors[i] = r.errors[i];
      for (int j = 0; j < res.n_params; ++j) res.covariance[i * res.n_params + j] = r.covariance(i, j);
    }
    res.chi_square = r.chi_square;
    res.dof = r.dof;
    res.converged = r.converged ? 1 : 0;
    res.iterations = r.iterations;
    *out = res;
  });
}

qmem_status qmem_events_read(const char* path, qmem_events** out) {
  return guard([&] {
    require_ptr(path, "path");
    require_ptr(out, "out");
    *out = new qmem_events{qmem::ingest::read_events(path)};
  });
}
qmem_status qmem_events_parse(const char* data, size_t len, qmem_events** out) {
  return guard([&] {
    require_ptr(out, "out");
    if (len > 0) require_ptr(data, "data");
    *out = new qmem_events{qmem::ingest::parse_events(std::string_view(data ? data : "", len))};
  });
}
size_t qmem_events_size(const qmem_events* events) { return events ? events->value.size() : 0; }
qmem_status qmem_events_at(const qmem_events* events, size_t index, qmem_event* out) {
  return guard([&] {
    require_ptr(events, "events");
    require_ptr(out, "out");
    if (index >= events->value.size()) qmem::fail(qmem::ErrorCode::kInvalidArgument, "event index out of range");
    const auto& e = events->value[index];
    *out = {static_cast<qmem_channel>(e.channel), e.timestamp_ns};
  });
}
qmem_status qmem_events_write(const qmem_events* events, const char* path, qmem_event_format format) {
  return guard([&] {
    require_ptr(events, "events");
    require_ptr(path, "path");
    qmem::ingest::write_events(path, events->value,
                               format == QMEM_FORMAT_BINARY ? qmem::ingest::Format::kBinary
                                                            : qmem::ingest::Format::kCsv);
  });
}
void qmem_events_free(qmem_events* events) { delete events; }

qmem_status qmem_simulate_events(const qmem_config* config, uint64_t n, uint64_t seed, double t, uint64_t slot_ns,
                                 qmem_events** out, qmem_counts_row* direct) {
  return guard([&] {
    require_ptr(config, "config");
    require_ptr(out, "out");
    auto s = qmem::ingest::simulate_events(config->value.experiment, n, seed, t, slot_ns);
    if (direct) *direct = to_row(s.counts);
    *out = new qmem_events{std::move(s.events)};
  });
}
qmem_status qmem_coincidences(const qmem_events* events, uint64_t window_ns, uint64_t delay_ns, qmem_counts_row* out,
                              uint64_t* piled_up) {
  return guard([&] {
    require_ptr(events, "events");
    require_ptr(out, "out");
    const auto r = qmem::ingest::coincidences(events->value, window_ns, delay_ns);
    *out = to_row(r.counts);
    if (piled_up) *piled_up = r.piled_up;
  });
}

qmem_status qmem_run_simulate(const qmem_config* config, uint64_t trials, uint64_t seed, unsigned workers,
                              qmem_bundle** out) {
  return guard([&] {
    require_ptr(config, "config");
    require_ptr(out, "out");
    const auto r = qmem::pipeline::simulate(config->value, trials, seed, workers);
    *out = new qmem_bundle{qmem::pipeline::render_simulation(config->value, r, trials, seed)};
  });
}
qmem_status qmem_run_reproduce(const qmem_config* config, const char* figure, uint64_t trials, uint64_t seed,
                               unsigned workers, qmem_bundle** out) {
  return guard([&] {
    require_ptr(config, "config");
    require_ptr(figure, "figure");
    require_ptr(out, "out");
    *out = new qmem_bundle{qmem::pipeline::reproduce(config->value, figure, trials, seed, workers)};
  });
}
qmem_status qmem_run_analyze(const qmem_events* events, const qmem_config* config, uint64_t window_ns,
                             uint64_t delay_ns, uint64_t trials, qmem_bundle** out) {
  return guard([&] {
    require_ptr(events, "events");
    require_ptr(out, "out");
    qmem::pipeline::AnalyzeParams params;
    params.window_ns = window_ns;
    params.delay_ns = delay_ns;
    if (trials > 0) params.trials = trials;
    if (config) params.detection = config->value.experiment.detection;
    *out = new qmem_bundle{qmem::pipeline::analyze(events->value, params)};
  });
}
size_t qmem_bundle_size(const qmem_bundle* bundle) { return bundle ? bundle->value.size() : 0; }
const char* qmem_bundle_name(const qmem_bundle* bundle, size_t index) {
  if (!bundle || index >= bundle->value.size()) return nullptr;
  return bundle->value[index].name.c_str();
}
const char* qmem_bundle_content(const qmem_bundle* bundle, size_t index, size_t* length) {
  if (!bundle || index >= bundle->value.size()) return nullptr;
  if (length) *length = bundle->value[index].content.size();
  return bundle->value[index].content.c_str();
}
void qmem_bundle_free(qmem_bundle* bundle) { delete bundle; }

}  // extern "C"
