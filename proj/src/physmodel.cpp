// SPDX-License-Identifier: Apache-2.0
#include "physmodel.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "error.hpp"

namespace qmem::phys {

namespace {

void require(bool ok, const char* what) {
  if (!ok) fail(ErrorCode::kDomain, what);
}

bool is_fraction(double x) { return x > 0.0 && x <= 1.0; }

}  // namespace

void CavityParams::validate() const {
  require(coupler_transmission > 0.0 && coupler_transmission < 1.0,
          "cavity: coupler transmission must be in (0,1)");
  require(loss_per_round_trip >= 0.0 && loss_per_round_trip < 1.0,
          "cavity: round-trip loss must be in [0,1)");
  require(coupler_transmission + loss_per_round_trip <= 1.0,
          "cavity: total round-trip loss exceeds 1");
  require(round_trip_length > 0.0, "cavity: round-trip length must be positive");
  require(decay_time > 0.0, "cavity: decay time must be positive");
}

void DetectionChain::validate() const {
  require(is_fraction(escape_efficiency), "detection: escape efficiency must be in (0,1]");
  require(is_fraction(path_transmission), "detection: path transmission must be in (0,1]");
  require(is_fraction(detector_efficiency), "detection: detector efficiency must be in (0,1]");
  require(escape_efficiency_sigma >= 0 && path_transmission_sigma >= 0 &&
              detector_efficiency_sigma >= 0 && constant_background_sigma >= 0,
          "detection: uncertainties must be non-negative");
  require(constant_background >= 0.0 && constant_background < 1.0,
          "detection: constant background must be in [0,1)");
  require(write_leak_fraction >= 0.0 && write_leak_fraction < 1.0,
          "detection: write leak fraction must be in [0,1)");
  require(read_background >= 0.0 && read_background < 1.0,
          "detection: read background must be in [0,1)");
  require(coincidence_window > 0.0, "detection: coincidence window must be positive");
}

void DecoherenceParams::validate() const {
  require(pumping_efficiency >= 0.0 && pumping_efficiency <= 1.0,
          "decoherence: pumping efficiency must be in [0,1]");
  require(temperature > 0.0, "decoherence: temperature must be positive");
  require(atomic_mass > 0.0, "decoherence: atomic mass must be positive");
  require(beam_waist > 0.0, "decoherence: beam waist must be positive");
  require(fall_distance > 0.0, "decoherence: fall distance must be positive");
  require(spin_wave_delta_k >= 0.0, "decoherence: spin-wave delta k must be non-negative");
  require(std::isfinite(larmor_angular_frequency), "decoherence: Larmor frequency must be finite");
}

void ReadoutModel::validate() const {
  require(width_coefficient >= 0.0, "readout: width coefficient must be non-negative");
  require(width_floor > 0.0, "readout: width floor must be positive");
  require(read_rise_time >= 0.0, "readout: rise time must be non-negative");
}

double finesse(const CavityParams& cavity) {
  const double total = cavity.coupler_transmission + cavity.loss_per_round_trip;
  require(total > 0.0 && total <= 1.0, "finesse: total round-trip loss must be in (0,1]");
  return 2.0 * std::numbers::pi / total;
}

double free_spectral_range(const CavityParams& cavity) {
  require(cavity.round_trip_length > 0.0, "free spectral range: length must be positive");
  return kSpeedOfLight / cavity.round_trip_length;
}

double round_trip_time(const CavityParams& cavity) {
  return 1.0 / free_spectral_range(cavity);
}

double escape_efficiency(const CavityParams& cavity) {
  const double total = cavity.coupler_transmission + cavity.loss_per_round_trip;
  require(total > 0.0 && total <= 1.0, "escape efficiency: total round-trip loss must be in (0,1]");
  return cavity.coupler_transmission / total;
}

double intensity_buildup(double finesse, double escape_efficiency) {
  return 2.0 * finesse * escape_efficiency / std::numbers::pi;
}

double emission_enhancement(double finesse) { return 2.0 * finesse / std::numbers::pi; }

EstimateWithError emission_enhancement(const EstimateWithError& finesse) {
  const double k = 2.0 / std::numbers::pi;
  return {k * finesse.value, k * finesse.sigma, k * finesse.sigma_syst};
}

double purcell_retrieval(double cooperativity) {
  require(cooperativity >= 0.0, "purcell retrieval: cooperativity must be non-negative");
  if (std::isinf(cooperativity)) return 1.0;
  return cooperativity / (cooperativity + 1.0);
}

double cooperativity_for_retrieval(double retrieval) {
  require(retrieval >= 0.0 && retrieval < 1.0, "cooperativity: retrieval must be in [0,1)");
  return retrieval / (1.0 - retrieval);
}

double cooperativity(double finesse, double optical_depth, double proportionality) {
  require(finesse >= 0.0 && optical_depth >= 0.0 && proportionality >= 0.0,
          "cooperativity: inputs must be non-negative");
  return proportionality * finesse * optical_depth;
}

double thermal_velocity(double temperature, double mass) {
  require(temperature > 0.0 && mass > 0.0, "thermal velocity: temperature and mass must be positive");
  return std::sqrt(kBoltzmann * temperature / mass);
}

double transit_lifetime(double waist, double temperature, double mass) {
  require(waist > 0.0, "transit lifetime: waist must be positive");
  const double v = thermal_velocity(temperature, mass);
  return std::sqrt(std::sqrt(std::numbers::e) - 1.0) * waist / v;
}

double transit_lifetime(const DecoherenceParams& decoherence) {
  return transit_lifetime(decoherence.beam_waist, decoherence.temperature, decoherence.atomic_mass);
}

double ballistic_overlap(double t, const DecoherenceParams& decoherence) {
  const double v = thermal_velocity(decoherence.temperature, decoherence.atomic_mass);
  const double x = v * t / decoherence.beam_waist;
  const double s = 1.0 + x * x;
  return 1.0 / (s * s);
}

double dephasing_lifetime(double delta_k, double v_rms) {
  require(v_rms > 0.0, "dephasing lifetime: v_rms must be positive");
  require(delta_k >= 0.0, "dephasing lifetime: delta k must be non-negative");
  if (delta_k == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / (delta_k * v_rms);
}

double dephasing_factor(double t, double delta_k, double v_rms) {
  const double tau = dephasing_lifetime(delta_k, v_rms);
  if (std::isinf(tau)) return 1.0;
  const double x = t / tau;
  return std::exp(-x * x);
}

double free_fall_time(double distance) {
  require(distance >= 0.0, "free fall: distance must be non-negative");
  return std::sqrt(2.0 * distance / kGravity);
}

double default_modulation_amplitude(double pumping_efficiency) {
  require(pumping_efficiency > 0.0 && pumping_efficiency <= 1.0,
          "modulation amplitude: pumping efficiency must be in (0,1]");
  return kModulationConstant * (1.0 - pumping_efficiency) / pumping_efficiency;
}

double pumping_efficiency_for_amplitude(double amplitude) {
  require(amplitude >= 0.0, "pumping efficiency: amplitude must be non-negative");
  return kModulationConstant / (kModulationConstant + amplitude);
}

double magnetic_modulation(double t, double pumping_efficiency, double larmor_angular_frequency,
                           const ModulationAmplitudeMap& amplitude_map) {
  require(pumping_efficiency >= 0.0 && pumping_efficiency <= 1.0,
          "magnetic modulation: pumping efficiency must be in [0,1]");
  if (pumping_efficiency == 1.0 && !amplitude_map) return 1.0;
  const double amplitude = amplitude_map ? amplitude_map(pumping_efficiency)
                                         : default_modulation_amplitude(pumping_efficiency);
  const double factor = 1.0 + amplitude * std::cos(larmor_angular_frequency * t);
  if (!(factor >= 0.0)) {
    std::ostringstream msg;
    msg << "magnetic modulation: factor " << factor << " is negative (amplitude " << amplitude << ")";
    fail(ErrorCode::kDomain, msg.str());
  }
  return factor;
}

double retrieval_decay(double t, const DecoherenceParams& decoherence) {
  require(t >= 0.0, "retrieval decay: storage time must be non-negative");
  if (t >= free_fall_time(decoherence.fall_distance)) return 0.0;

  double transit = 1.0;
  switch (decoherence.decay_model) {
    case DecayModel::kExponential:
      transit = std::exp(-t / transit_lifetime(decoherence));
      break;
    case DecayModel::kBallisticGaussian:
      transit = ballistic_overlap(t, decoherence);
      break;
  }
  const double v = thermal_velocity(decoherence.temperature, decoherence.atomic_mass);
  return transit * dephasing_factor(t, decoherence.spin_wave_delta_k, v) *
         magnetic_modulation(t, decoherence.pumping_efficiency, decoherence.larmor_angular_frequency);
}

double normalized_retrieval_decay(double t, const DecoherenceParams& decoherence) {
  return retrieval_decay(t, decoherence) / retrieval_decay(0.0, decoherence);
}

double readout_pulse_width(double read_power, const ReadoutModel& model) {
  require(read_power > 0.0, "readout pulse width: read power must be positive");
  return model.width_coefficient / read_power + model.width_floor;
}

double repeater_overhead(double retrieval, double exponent, double base_time) {
  require(retrieval > 0.0 && retrieval <= 1.0, "repeater overhead: retrieval must be in (0,1]");
  require(exponent >= 0.0, "repeater overhead: exponent must be non-negative");
  return base_time * std::pow(retrieval, -exponent);
}

double light_time(double distance) {
  require(distance >= 0.0, "light time: distance must be non-negative");
  return distance / kSpeedOfLight;
}

}  // namespace qmem::phys
