// SPDX-License-Identifier: Apache-2.0
//
// Deterministic physics of the cavity-enhanced ensemble memory: cavity
// figures of merit, Purcell-limited retrieval, decoherence time scales and
// the time-dependent retrieval factor, read-out pulse width and repeater
// timing arithmetic. Everything here is a pure function of its arguments.
#pragma once

#include <functional>

#include "estimate.hpp"

namespace qmem::phys {

inline constexpr double kSpeedOfLight = 299'792'458.0;  // m/s
inline constexpr double kGravity = 9.81;                // m/s^2
inline constexpr double kBoltzmann = 1.380649e-23;      // J/K
inline constexpr double kRb87Mass = 1.443e-25;          // kg

struct CavityParams {
  double coupler_transmission = 0.0881;
  double loss_per_round_trip = 0.0428;
  double round_trip_length = 0.503;  // m
  // Stored rather than derived from finesse and round-trip time; the
  // measured value is what shapes the read-out pulse.
  double decay_time = 8.9e-9;  // s

  void validate() const;
};

struct DetectionChain {
  double escape_efficiency = 0.71;
  double escape_efficiency_sigma = 0.02;
  double path_transmission = 0.395;
  double path_transmission_sigma = 0.004;
  double detector_efficiency = 0.627;
  double detector_efficiency_sigma = 0.0;
  double constant_background = 0.0006;  // per write gate
  double constant_background_sigma = 0.0001;
  double write_leak_fraction = 0.023;   // of p_w
  double read_background = 0.0006;      // per detector per read gate
  double coincidence_window = 20e-9;    // s

  double total_efficiency() const {
    return escape_efficiency * path_transmission * detector_efficiency;
  }
  void validate() const;
};

enum class DecayModel { kExponential, kBallisticGaussian };

struct DecoherenceParams {
  double pumping_efficiency = 0.95;
  double larmor_angular_frequency = 2.0 * 3.14159265358979323846 * 1e5;  // rad/s
  double temperature = 10e-6;  // K
  double atomic_mass = kRb87Mass;
  double beam_waist = 200e-6;       // m
  double spin_wave_delta_k = 0.0;   // rad/m
  double fall_distance = 0.015;     // m
  DecayModel decay_model = DecayModel::kExponential;

  void validate() const;
};

struct ReadoutModel {
  double width_coefficient = 1e-13;  // s*W
  double width_floor = 38.9e-9;      // s
  double read_rise_time = 21e-9;     // s

  void validate() const;
};

// Cavity ---------------------------------------------------------------------

double finesse(const CavityParams& cavity);
double free_spectral_range(const CavityParams& cavity);
double round_trip_time(const CavityParams& cavity);
double escape_efficiency(const CavityParams& cavity);

/// Intracavity intensity build-up of the classical write/read beams, 2 F eta / pi.
double intensity_buildup(double finesse, double escape_efficiency);
/// Enhancement of emission into the cavity mode, 2 F / pi.
double emission_enhancement(double finesse);
EstimateWithError emission_enhancement(const EstimateWithError& finesse);

double purcell_retrieval(double cooperativity);
/// Inverse of purcell_retrieval on [0, 1).
double cooperativity_for_retrieval(double retrieval);
double cooperativity(double finesse, double optical_depth, double proportionality);

// Decoherence ----------------------------------------------------------------

/// One-axis rms velocity sqrt(kB T / m).
double thermal_velocity(double temperature, double mass);

/// 1/e time of the write/read mode overlap for atoms moving ballistically
/// through a Gaussian mode of waist w. With mode amplitude exp(-r^2/w^2) and
/// a uniform ensemble, the retrieval factor is [1 + (v t / w)^2]^-2 where v
/// is the one-axis rms velocity, so the 1/e point is sqrt(sqrt(e) - 1) w / v.
double transit_lifetime(const DecoherenceParams& decoherence);
double transit_lifetime(double waist, double temperature, double mass);

/// Ballistic overlap factor [1 + (v t / w)^2]^-2.
double ballistic_overlap(double t, const DecoherenceParams& decoherence);

/// 1/(dk v_rms); +infinity when dk == 0.
double dephasing_lifetime(double delta_k, double v_rms);
/// exp(-(t / tau_d)^2), the squared thermal average of exp(i dk v t).
double dephasing_factor(double t, double delta_k, double v_rms);

double free_fall_time(double distance);

/// Maps the pumping efficiency onto the relative oscillation amplitude A of
/// the retrieval efficiency. Pluggable; see default_modulation_amplitude.
using ModulationAmplitudeMap = std::function<double(double pumping_efficiency)>;

inline constexpr double kModulationConstant = 0.14 * 0.95 / 0.05;

/// A = kappa (1 - p0) / p0 with kappa fixed so that p0 = 0.95 gives A = 0.14.
double default_modulation_amplitude(double pumping_efficiency);
/// Inverse of default_modulation_amplitude.
double pumping_efficiency_for_amplitude(double amplitude);

/// 1 + A cos(omega_L t). Its mean over whole Larmor periods is 1 and its
/// maximum sits at t = 0.
double magnetic_modulation(double t, double pumping_efficiency, double larmor_angular_frequency,
                           const ModulationAmplitudeMap& amplitude_map = {});

/// Multiplicative retrieval factor at storage time t: transit loss (per
/// decay_model) x dephasing x magnetic modulation, and zero once the atoms
/// have fallen out of the cell. Equals 1 + A at t = 0.
double retrieval_decay(double t, const DecoherenceParams& decoherence);
/// retrieval_decay(t) / retrieval_decay(0).
double normalized_retrieval_decay(double t, const DecoherenceParams& decoherence);

// Read-out and repeater timing -------------------------------------------------

double readout_pulse_width(double read_power, const ReadoutModel& model);

double repeater_overhead(double retrieval, double exponent, double base_time);
double light_time(double distance);

}  // namespace qmem::phys
