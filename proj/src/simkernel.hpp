// SPDX-License-Identifier: Apache-2.0
//
// Monte Carlo engine for the write/read sequence of a DLCZ-type memory.
// One trial = one write pulse (pair number drawn from the two-mode-squeezed
// law), non-number-resolving detection of the write-out photons, storage,
// and read-out routed onto two detectors by a 50/50 splitter.
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "physmodel.hpp"
#include "rng.hpp"

namespace qmem::sim {

enum class MeasurementMode { kCorrelation, kFeedback };

// Coherent read-out replaces the retrieved photons by a Poisson stream that
// is independent of the heralding event; it is the classical reference for
// the anti-correlation parameter.
enum class PhotonSource { kTwoModeSqueezed, kCoherentReadout };

struct TimingConfig {
  double cycle_rate = 29.0;             // Hz
  double mot_duration = 31.5e-3;        // s
  double experimental_window = 4.8e-3;  // s
  double write_window = 1e-3;           // s, start of the experimental phase
  double write_attempt_rate = 154e3;    // Hz
  std::vector<double> storage_delays{500e-9};

  /// Write attempts per cycle in feedback mode.
  std::uint64_t attempts_per_cycle() const;
  void validate() const;
};

struct ExperimentConfig {
  // Mean pair number per write pulse. When both write_power and
  // excitation_slope are set, mu = slope * power instead.
  double excitation_probability = 0.05;
  std::optional<double> write_power;       // W
  std::optional<double> excitation_slope;  // 1/W

  double chi0 = 0.73;  // intrinsic retrieval at t = 0
  phys::DetectionChain detection;
  phys::DecoherenceParams decoherence;
  phys::CavityParams cavity;
  phys::ReadoutModel readout;
  TimingConfig timing;
  double detuning = -40e6;  // Hz, metadata only
  double optical_depth = 1.0;
  double cooperativity_constant = 0.05625;
  MeasurementMode mode = MeasurementMode::kCorrelation;
  PhotonSource source = PhotonSource::kTwoModeSqueezed;

  double mu() const;
  void validate() const;
};

struct TrialOutcome {
  bool write_click = false;
  bool write_click_is_background = false;
  bool readout_click_d1 = false;
  bool readout_click_d2 = false;
  double storage_time = 0.0;
};

/// Tallies for one storage delay. In correlation mode n_trials counts write
/// pulses; in feedback mode it counts write attempts and n_cycles counts
/// experimental cycles. The d1/d2/d12 counts are conditional on a write
/// click. Unconditional reads are not measured in feedback mode.
struct Counts {
  double storage_time = 0.0;
  std::uint64_t n_trials = 0;
  std::uint64_t n_cycles = 0;
  std::uint64_t n_write = 0;
  std::uint64_t n_read = 0;
  std::uint64_t n_coincidence = 0;
  std::uint64_t n_d1 = 0;
  std::uint64_t n_d2 = 0;
  std::uint64_t n_d12 = 0;
  bool read_available = true;

  void add(const TrialOutcome& outcome);
  Counts& operator+=(const Counts& other);
  /// Throws if a structural invariant is violated.
  void check_invariants() const;
  friend bool operator==(const Counts&, const Counts&) = default;
};

struct CountsTable {
  MeasurementMode mode = MeasurementMode::kCorrelation;
  std::vector<Counts> delays;
  friend bool operator==(const CountsTable&, const CountsTable&) = default;
};

std::uint64_t sample_pair_number(double mu, RngStream& rng);
bool detect(std::uint64_t photons, double efficiency, double background, RngStream& rng);

/// Per-delay constants of one trial, precomputed from the configuration.
class TrialKernel {
 public:
  TrialKernel(const ExperimentConfig& config, double storage_time);

  struct WriteSample {
    std::uint64_t pairs = 0;
    bool click = false;
    bool background_only = false;
  };

  WriteSample sample_write(RngStream& rng) const;
  /// Read-out clicks given the number of stored excitations.
  void sample_read(std::uint64_t pairs, RngStream& rng, bool& d1, bool& d2) const;
  TrialOutcome run(RngStream& rng) const;

  double retrieval_probability() const { return retrieval_; }
  double write_background() const { return write_background_; }
  double storage_time() const { return storage_time_; }

 private:
  double storage_time_;
  double mu_;
  double mu_ratio_;      // mu / (1 + mu)
  double log_mu_ratio_;
  double efficiency_;
  double write_background_;
  double read_background_;
  double retrieval_;
  PhotonSource source_;
};

TrialOutcome run_trial(const ExperimentConfig& config, double storage_time, RngStream& rng);

struct RunOptions {
  unsigned workers = 1;
  std::uint64_t chunk_size = 1u << 16;
};

/// Reads QMEM_WORKERS; falls back to the hardware concurrency.
unsigned default_workers();

CountsTable run_correlation(const ExperimentConfig& config, std::uint64_t n_trials, std::uint64_t seed,
                            const RunOptions& options = {});
CountsTable run_feedback(const ExperimentConfig& config, std::uint64_t n_cycles, std::uint64_t seed,
                         const RunOptions& options = {});
/// Dispatches on config.mode.
CountsTable run(const ExperimentConfig& config, std::uint64_t n, std::uint64_t seed,
                const RunOptions& options = {});

/// Exact expected rates from enumeration over the pair-number law.
struct Expectations {
  double p_w = 0, p_r = 0, p_wr = 0;
  double g2 = 0, R = 0;
  double p1 = 0, p2 = 0, p12 = 0;  // conditional on a write click
  double alpha = 0;
  double herald_probability = 0;   // per feedback cycle
  std::uint64_t n_max = 0;
};

Expectations analytic_expectations(const ExperimentConfig& config, double storage_time);

/// Click probability from write-out photons alone, mu eta / (1 + mu eta).
double signal_click_probability(double mu, double efficiency);

}  // namespace qmem::sim
