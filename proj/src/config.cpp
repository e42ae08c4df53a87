// SPDX-License-Identifier: Apache-2.0
#include "config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "error.hpp"

namespace qmem {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
  fail(ErrorCode::kConfig, "config error at " + path + ": " + what);
}

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

// Walks one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) config_error(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const std::string& key) const { return node_.contains(key) && !node_.at(key).is_null(); }

  double number(const std::string& key, double fallback, const std::function<bool(double)>& ok = {},
                const char* range = nullptr) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_number()) config_error(join(path_, key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) config_error(join(path_, key), "must be finite");
    if (ok && !ok(x)) config_error(join(path_, key), std::string("must be ") + (range ? range : "in range"));
    return x;
  }

  std::optional<double> optional_number(const std::string& key, const std::function<bool(double)>& ok,
                                        const char* range) {
    if (!has(key)) {
      seen_.insert(key);
      return std::nullopt;
    }
    return number(key, 0.0, ok, range);
  }

  std::uint64_t count(const std::string& key, std::uint64_t fallback) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 1) config_error(join(path_, key), "expected a positive integer");
    return v.get<std::uint64_t>();
  }

  std::string text(const std::string& key, const std::string& fallback, std::initializer_list<const char*> allowed) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_string()) config_error(join(path_, key), "expected a string");
    const std::string s = v.get<std::string>();
    std::string options;
    for (const char* a : allowed) {
      if (s == a) return s;
      options += options.empty() ? a : std::string(", ") + a;
    }
    config_error(join(path_, key), "must be one of: " + options);
  }

  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback,
                              const std::function<bool(double)>& ok, const char* range) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_array()) config_error(join(path_, key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string p = join(path_, key) + "[" + std::to_string(i) + "]";
      if (!v[i].is_number()) config_error(p, "expected a number");
      const double x = v[i].get<double>();
      if (!std::isfinite(x) || (ok && !ok(x))) config_error(p, std::string("must be ") + range);
      out.push_back(x);
    }
    return out;
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(has(key) ? node_.at(key) : empty, join(path_, key));
  }

  void finish() const {
    for (const auto& [key, value] : node_.items())
      if (!seen_.contains(key)) config_error(join(path_, key), "unknown key");
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

const auto fraction_open = [](double x) { return x > 0.0 && x < 1.0; };
const auto fraction_closed_above = [](double x) { return x > 0.0 && x <= 1.0; };
const auto unit_interval = [](double x) { return x >= 0.0 && x <= 1.0; };
const auto probability = [](double x) { return x >= 0.0 && x < 1.0; };
const auto positive = [](double x) { return x > 0.0; };
const auto non_negative = [](double x) { return x >= 0.0; };

}  // namespace

RunConfig config_from_json(const json& tree) {
  RunConfig cfg;
  auto& ex = cfg.experiment;
  Section root(tree, "");

  const double version = root.number("schema_version", kConfigSchemaVersion);
  if (version != kConfigSchemaVersion) config_error("schema_version", "unsupported version");

  ex.mode = root.text("mode", "correlation", {"correlation", "feedback"}) == "feedback"
                ? sim::MeasurementMode::kFeedback
                : sim::MeasurementMode::kCorrelation;
  ex.source = root.text("source", "two_mode_squeezed", {"two_mode_squeezed", "coherent_readout"}) == "coherent_readout"
                  ? sim::PhotonSource::kCoherentReadout
                  : sim::PhotonSource::kTwoModeSqueezed;
  ex.chi0 = root.number("chi0", ex.chi0, fraction_closed_above, "in (0,1]");
  ex.detuning = root.number("detuning_Hz", ex.detuning);

  {
    Section s = root.child("excitation");
    ex.excitation_probability = s.number("probability", ex.excitation_probability, probability, "in [0,1)");
    ex.write_power = s.optional_number("write_power_W", non_negative, ">= 0");
    ex.excitation_slope = s.optional_number("slope_per_W", non_negative, ">= 0");
    if (ex.write_power.has_value() != ex.excitation_slope.has_value())
      config_error("excitation", "write_power_W and slope_per_W must be given together");
    if (!(ex.mu() < 1.0)) config_error("excitation", "slope_per_W * write_power_W must be below 1");
    s.finish();
  }
  {
    Section s = root.child("cavity");
    auto& c = ex.cavity;
    c.coupler_transmission = s.number("coupler_transmission", c.coupler_transmission, fraction_open, "in (0,1)");
    c.loss_per_round_trip = s.number("loss_per_round_trip", c.loss_per_round_trip, probability, "in [0,1)");
    c.round_trip_length = s.number("round_trip_length_m", c.round_trip_length, positive, "> 0");
    c.decay_time = s.number("decay_time_s", c.decay_time, positive, "> 0");
    ex.optical_depth = s.number("optical_depth", ex.optical_depth, non_negative, ">= 0");
    ex.cooperativity_constant = s.number("cooperativity_constant", ex.cooperativity_constant, non_negative, ">= 0");
    if (c.coupler_transmission + c.loss_per_round_trip > 1.0)
      config_error("cavity", "coupler_transmission + loss_per_round_trip must not exceed 1");
    s.finish();
  }
  {
    Section s = root.child("detection");
    auto& d = ex.detection;
    d.escape_efficiency = s.number("escape_efficiency", d.escape_efficiency, fraction_closed_above, "in (0,1]");
    d.escape_efficiency_sigma = s.number("escape_efficiency_sigma", d.escape_efficiency_sigma, non_negative, ">= 0");
    d.path_transmission = s.number("path_transmission", d.path_transmission, fraction_closed_above, "in (0,1]");
    d.path_transmission_sigma = s.number("path_transmission_sigma", d.path_transmission_sigma, non_negative, ">= 0");
    d.detector_efficiency = s.number("detector_efficiency", d.detector_efficiency, fraction_closed_above, "in (0,1]");
    d.detector_efficiency_sigma =
        s.number("detector_efficiency_sigma", d.detector_efficiency_sigma, non_negative, ">= 0");
    d.constant_background = s.number("constant_background", d.constant_background, probability, "in [0,1)");
    d.constant_background_sigma =
        s.number("constant_background_sigma", d.constant_background_sigma, non_negative, ">= 0");
    d.write_leak_fraction = s.number("write_leak_fraction", d.write_leak_fraction, probability, "in [0,1)");
    // Without a separate figure the read side reuses the write constant.
    d.read_background = s.number("read_background", d.constant_background, probability, "in [0,1)");
    d.coincidence_window = s.number("coincidence_window_s", d.coincidence_window, positive, "> 0");
    s.finish();
  }
  {
    Section s = root.child("decoherence");
    auto& d = ex.decoherence;
    d.pumping_efficiency = s.number("pumping_efficiency", d.pumping_efficiency, unit_interval, "in [0,1]");
    d.larmor_angular_frequency = s.number("larmor_angular_frequency_rad_per_s", d.larmor_angular_frequency);
    d.temperature = s.number("temperature_K", d.temperature, positive, "> 0");
    d.atomic_mass = s.number("atomic_mass_kg", d.atomic_mass, positive, "> 0");
    d.beam_waist = s.number("beam_waist_m", d.beam_waist, positive, "> 0");
    d.spin_wave_delta_k = s.number("spin_wave_delta_k_rad_per_m", d.spin_wave_delta_k, non_negative, ">= 0");
    d.fall_distance = s.number("fall_distance_m", d.fall_distance, positive, "> 0");
    d.decay_model = s.text("decay_model", "exponential", {"exponential", "ballistic_gaussian"}) == "ballistic_gaussian"
                        ? phys::DecayModel::kBallisticGaussian
                        : phys::DecayModel::kExponential;
    s.finish();
  }
  {
    Section s = root.child("readout");
    auto& r = ex.readout;
    r.width_coefficient = s.number("width_coefficient_s_W", r.width_coefficient, non_negative, ">= 0");
    r.width_floor = s.number("width_floor_s", r.width_floor, positive, "> 0");
    r.read_rise_time = s.number("read_rise_time_s", r.read_rise_time, non_negative, ">= 0");
    s.finish();
  }
  {
    Section s = root.child("timing");
    auto& t = ex.timing;
    t.cycle_rate = s.number("cycle_rate_Hz", t.cycle_rate, positive, "> 0");
    t.mot_duration = s.number("mot_duration_s", t.mot_duration, non_negative, ">= 0");
    t.experimental_window = s.number("experimental_window_s", t.experimental_window, non_negative, ">= 0");
    t.write_window = s.number("write_window_s", t.write_window, non_negative, ">= 0");
    t.write_attempt_rate = s.number("write_attempt_rate_Hz", t.write_attempt_rate, positive, "> 0");
    t.storage_delays = s.numbers("storage_delays_s", t.storage_delays, non_negative, ">= 0");
    if (t.storage_delays.empty()) config_error("timing.storage_delays_s", "must not be empty");
    s.finish();
  }
  {
    Section s = root.child("reproduce");
    auto& r = cfg.reproduce;
    r.trials = s.count("trials", r.trials);
    {
      Section f = s.child("fig2");
      r.fig2.delay = f.number("delay_s", r.fig2.delay, non_negative, ">= 0");
      r.fig2.chi0 = f.number("chi0", r.fig2.chi0, fraction_closed_above, "in (0,1]");
      r.fig2.excitation_slope = f.number("slope_per_W", r.fig2.excitation_slope, positive, "> 0");
      r.fig2.write_powers = f.numbers("write_powers_W", r.fig2.write_powers, positive, "> 0");
      r.fig2.trials = f.count("trials", r.fig2.trials);
      for (double p : r.fig2.write_powers)
        if (!(p * r.fig2.excitation_slope < 1.0)) config_error("reproduce.fig2", "slope * power must stay below 1");
      f.finish();
    }
    {
      Section f = s.child("fig3");
      r.fig3.read_powers = f.numbers("read_powers_W", r.fig3.read_powers, positive, "> 0");
      r.fig3.relative_noise = f.number("relative_noise", r.fig3.relative_noise, positive, "> 0");
      if (r.fig3.read_powers.size() < 3) config_error("reproduce.fig3.read_powers_W", "need at least 3 powers");
      f.finish();
    }
    s.finish();
  }
  root.finish();

  ex.validate();
  return cfg;
}

RunConfig parse_config(std::string_view text) {
  json tree;
  try {
    tree = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(tree);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

json config_to_json(const RunConfig& cfg) {
  const auto& ex = cfg.experiment;
  const auto& c = ex.cavity;
  const auto& d = ex.detection;
  const auto& k = ex.decoherence;
  const auto& r = ex.readout;
  const auto& t = ex.timing;
  json excitation = {{"probability", ex.excitation_probability}};
  if (ex.write_power) excitation["write_power_W"] = *ex.write_power;
  if (ex.excitation_slope) excitation["slope_per_W"] = *ex.excitation_slope;
  return {
      {"schema_version", kConfigSchemaVersion},
      {"mode", ex.mode == sim::MeasurementMode::kFeedback ? "feedback" : "correlation"},
      {"source", ex.source == sim::PhotonSource::kCoherentReadout ? "coherent_readout" : "two_mode_squeezed"},
      {"chi0", ex.chi0},
      {"detuning_Hz", ex.detuning},
      {"excitation", excitation},
      {"cavity",
       {{"coupler_transmission", c.coupler_transmission},
        {"loss_per_round_trip", c.loss_per_round_trip},
        {"round_trip_length_m", c.round_trip_length},
        {"decay_time_s", c.decay_time},
        {"optical_depth", ex.optical_depth},
        {"cooperativity_constant", ex.cooperativity_constant}}},
      {"detection",
       {{"escape_efficiency", d.escape_efficiency},
        {"escape_efficiency_sigma", d.escape_efficiency_sigma},
        {"path_transmission", d.path_transmission},
        {"path_transmission_sigma", d.path_transmission_sigma},
        {"detector_efficiency", d.detector_efficiency},
        {"detector_efficiency_sigma", d.detector_efficiency_sigma},
        {"constant_background", d.constant_background},
        {"constant_background_sigma", d.constant_background_sigma},
        {"write_leak_fraction", d.write_leak_fraction},
        {"read_background", d.read_background},
        {"coincidence_window_s", d.coincidence_window}}},
      {"decoherence",
       {{"pumping_efficiency", k.pumping_efficiency},
        {"larmor_angular_frequency_rad_per_s", k.larmor_angular_frequency},
        {"temperature_K", k.temperature},
        {"atomic_mass_kg", k.atomic_mass},
        {"beam_waist_m", k.beam_waist},
        {"spin_wave_delta_k_rad_per_m", k.spin_wave_delta_k},
        {"fall_distance_m", k.fall_distance},
        {"decay_model", k.decay_model == phys::DecayModel::kBallisticGaussian ? "ballistic_gaussian" : "exponential"}}},
      {"readout",
       {{"width_coefficient_s_W", r.width_coefficient},
        {"width_floor_s", r.width_floor},
        {"read_rise_time_s", r.read_rise_time}}},
      {"timing",
       {{"cycle_rate_Hz", t.cycle_rate},
        {"mot_duration_s", t.mot_duration},
        {"experimental_window_s", t.experimental_window},
        {"write_window_s", t.write_window},
        {"write_attempt_rate_Hz", t.write_attempt_rate},
        {"storage_delays_s", t.storage_delays}}},
      {"reproduce",
       {{"trials", cfg.reproduce.trials},
        {"fig2",
         {{"delay_s", cfg.reproduce.fig2.delay},
          {"chi0", cfg.reproduce.fig2.chi0},
          {"slope_per_W", cfg.reproduce.fig2.excitation_slope},
          {"write_powers_W", cfg.reproduce.fig2.write_powers},
          {"trials", cfg.reproduce.fig2.trials}}},
        {"fig3",
         {{"read_powers_W", cfg.reproduce.fig3.read_powers}, {"relative_noise", cfg.reproduce.fig3.relative_noise}}}}},
  };
}

void set_config_value(RunConfig& cfg, std::string_view key_path, const json& value) {
  if (key_path.empty()) fail(ErrorCode::kConfig, "config: empty key path");
  json tree = config_to_json(cfg);
  std::string pointer = "/";
  for (char ch : key_path) pointer += ch == '.' ? '/' : ch;
  try {
    const json::json_pointer ptr(pointer);
    if (!tree.contains(ptr.parent_pointer()) || !tree.at(ptr.parent_pointer()).is_object())
      fail(ErrorCode::kConfig, "config error at " + std::string(key_path) + ": unknown key");
    tree[ptr] = value;
  } catch (const json::exception&) {
    fail(ErrorCode::kConfig, "config error at " + std::string(key_path) + ": invalid key path");
  }
  cfg = config_from_json(tree);
}

}  // namespace qmem
