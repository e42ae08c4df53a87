// SPDX-License-Identifier: Apache-2.0
#include "simkernel.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <random>
#include <string>
#include <thread>

#include "error.hpp"

namespace qmem::sim {

namespace {

void require(bool ok, ErrorCode code, const char* what) {
  if (!ok) fail(code, what);
}

constexpr std::uint64_t kCorrelationStream = 0;
constexpr std::uint64_t kFeedbackStream = 1ull << 32;

}  // namespace

std::uint64_t TimingConfig::attempts_per_cycle() const {
  // The small slack absorbs representation error in window * rate.
  return static_cast<std::uint64_t>(std::floor(write_window * write_attempt_rate + 1e-9));
}

void TimingConfig::validate() const {
  require(cycle_rate > 0.0, ErrorCode::kConfig, "timing: cycle rate must be positive");
  require(mot_duration >= 0.0 && experimental_window >= 0.0, ErrorCode::kConfig,
          "timing: durations must be non-negative");
  const double period = 1.0 / cycle_rate;
  require(std::abs(mot_duration + experimental_window - period) <= 0.15 * period, ErrorCode::kConfig,
          "timing: MOT duration + experimental window must match the cycle period within 15%");
  require(write_attempt_rate > 0.0, ErrorCode::kConfig, "timing: write attempt rate must be positive");
  require(write_window >= 0.0 && write_window <= experimental_window, ErrorCode::kConfig,
          "timing: write window must lie inside the experimental window");
  for (double d : storage_delays)
    require(d >= 0.0 && std::isfinite(d), ErrorCode::kConfig, "timing: storage delays must be non-negative");
}

double ExperimentConfig::mu() const {
  if (write_power && excitation_slope) return *write_power * *excitation_slope;
  return excitation_probability;
}

void ExperimentConfig::validate() const {
  try {
    const double m = mu();
    require(m >= 0.0 && m < 1.0, ErrorCode::kConfig, "excitation probability must be in [0,1)");
    if (write_power) require(*write_power >= 0.0, ErrorCode::kConfig, "write power must be non-negative");
    require(chi0 > 0.0 && chi0 <= 1.0, ErrorCode::kConfig, "chi0 must be in (0,1]");
    require(optical_depth >= 0.0 && cooperativity_constant >= 0.0, ErrorCode::kConfig,
            "optical depth and cooperativity constant must be non-negative");
    detection.validate();
    decoherence.validate();
    cavity.validate();
    readout.validate();
    timing.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, e.what());
  }
}

void Counts::add(const TrialOutcome& o) {
  ++n_trials;
  const bool read = o.readout_click_d1 || o.readout_click_d2;
  if (read) ++n_read;
  if (!o.write_click) return;
  ++n_write;
  if (read) ++n_coincidence;
  if (o.readout_click_d1) ++n_d1;
  if (o.readout_click_d2) ++n_d2;
  if (o.readout_click_d1 && o.readout_click_d2) ++n_d12;
}

Counts& Counts::operator+=(const Counts& o) {
  n_trials += o.n_trials;
  n_cycles += o.n_cycles;
  n_write += o.n_write;
  n_read += o.n_read;
  n_coincidence += o.n_coincidence;
  n_d1 += o.n_d1;
  n_d2 += o.n_d2;
  n_d12 += o.n_d12;
  return *this;
}

void Counts::check_invariants() const {
  const auto bad = [](const char* what) { fail(ErrorCode::kInvalidArgument, std::string("counts: ") + what); };
  if (n_write > n_trials || n_read > n_trials || n_coincidence > n_trials || n_d1 > n_trials ||
      n_d2 > n_trials || n_d12 > n_trials)
    bad("a count exceeds n_trials");
  if (n_d12 > std::min(n_d1, n_d2)) bad("n_d12 exceeds min(n_d1, n_d2)");
  if (n_coincidence > n_write) bad("n_coincidence exceeds n_write");
  if (n_d1 > n_coincidence || n_d2 > n_coincidence) bad("a detector count exceeds n_coincidence");
  if (read_available && n_coincidence > n_read) bad("n_coincidence exceeds n_read");
}

std::uint64_t sample_pair_number(double mu, RngStream& rng) {
  require(mu >= 0.0 && mu < 1.0, ErrorCode::kDomain, "pair number: mu must be in [0,1)");
  if (mu == 0.0) return 0;
  const double ratio = mu / (1.0 + mu);
  // P(n >= k) = ratio^k, so invert the survival function.
  const double u = 1.0 - rng.uniform();
  return static_cast<std::uint64_t>(std::floor(std::log(u) / std::log(ratio)));
}

bool detect(std::uint64_t photons, double efficiency, double background, RngStream& rng) {
  require(efficiency >= 0.0 && efficiency <= 1.0 && background >= 0.0 && background <= 1.0, ErrorCode::kDomain,
          "detect: efficiency and background must be in [0,1]");
  bool click = rng.uniform() < background;
  for (std::uint64_t i = 0; i < photons; ++i)
    if (rng.uniform() < efficiency) click = true;
  return click;
}

TrialKernel::TrialKernel(const ExperimentConfig& config, double storage_time)
    : storage_time_(storage_time), source_(config.source) {
  require(storage_time >= 0.0, ErrorCode::kDomain, "trial: storage time must be non-negative");
  mu_ = config.mu();
  require(mu_ >= 0.0 && mu_ < 1.0, ErrorCode::kDomain, "trial: mu must be in [0,1)");
  mu_ratio_ = mu_ / (1.0 + mu_);
  log_mu_ratio_ = mu_ > 0.0 ? std::log(mu_ratio_) : 0.0;
  efficiency_ = config.detection.total_efficiency();
  write_background_ = config.detection.constant_background +
                      config.detection.write_leak_fraction * signal_click_probability(mu_, efficiency_);
  read_background_ = config.detection.read_background;
  retrieval_ = config.chi0 * phys::normalized_retrieval_decay(storage_time, config.decoherence);
}

TrialKernel::WriteSample TrialKernel::sample_write(RngStream& rng) const {
  WriteSample s;
  const double u = rng.uniform();
  // P(n >= 1) = ratio; rescaling u reuses it for the geometric tail draw.
  if (u < mu_ratio_) {
    const double tail = u / mu_ratio_;  // uniform on [0,1) given n >= 1
    s.pairs = 1 + static_cast<std::uint64_t>(std::floor(std::log1p(-tail) / log_mu_ratio_));
  }
  bool signal = false;
  if (s.pairs > 0) signal = rng.uniform() < 1.0 - std::pow(1.0 - efficiency_, static_cast<double>(s.pairs));
  const bool background = write_background_ > 0.0 && rng.uniform() < write_background_;
  s.click = signal || background;
  s.background_only = background && !signal;
  return s;
}

void TrialKernel::sample_read(std::uint64_t pairs, RngStream& rng, bool& d1, bool& d2) const {
  d1 = false;
  d2 = false;
  std::uint64_t photons = pairs;
  double per_photon = retrieval_ * efficiency_;
  if (source_ == PhotonSource::kCoherentReadout) {
    const double mean = mu_ * retrieval_;
    photons = mean > 0.0 ? std::poisson_distribution<std::uint64_t>(mean)(rng) : 0;
    per_photon = efficiency_;
  }
  const double half = 0.5 * per_photon;
  for (std::uint64_t i = 0; i < photons; ++i) {
    const double u = rng.uniform();
    if (u < half)
      d1 = true;
    else if (u < per_photon)
      d2 = true;
  }
  if (read_background_ > 0.0) {
    if (rng.uniform() < read_background_) d1 = true;
    if (rng.uniform() < read_background_) d2 = true;
  }
}

TrialOutcome TrialKernel::run(RngStream& rng) const {
  TrialOutcome o;
  o.storage_time = storage_time_;
  const WriteSample w = sample_write(rng);
  o.write_click = w.click;
  o.write_click_is_background = w.background_only;
  sample_read(w.pairs, rng, o.readout_click_d1, o.readout_click_d2);
  return o;
}

TrialOutcome run_trial(const ExperimentConfig& config, double storage_time, RngStream& rng) {
  config.validate();
  return TrialKernel(config, storage_time).run(rng);
}

unsigned default_workers() {
  if (const char* env = std::getenv("QMEM_WORKERS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

// Splits `total` units into fixed-size chunks, each with its own substream,
// and sums the per-chunk tallies. The result does not depend on the number
// of workers because chunk boundaries and seeds do not.
template <typename ChunkFn>
Counts run_chunked(std::uint64_t total, std::uint64_t seed, std::uint64_t stream, const RunOptions& options,
                   ChunkFn&& chunk_fn) {
  const std::uint64_t chunk = std::max<std::uint64_t>(1, options.chunk_size);
  const std::uint64_t n_chunks = (total + chunk - 1) / chunk;
  std::vector<Counts> partial(n_chunks);
  std::atomic<std::uint64_t> next{0};

  auto worker = [&] {
    for (std::uint64_t c = next++; c < n_chunks; c = next++) {
      RngStream rng = RngStream::substream(seed, stream, c);
      const std::uint64_t begin = c * chunk;
      const std::uint64_t count = std::min(chunk, total - begin);
      partial[c] = chunk_fn(count, rng);
    }
  };

  const unsigned workers = static_cast<unsigned>(
      std::min<std::uint64_t>(std::max(1u, options.workers), std::max<std::uint64_t>(1, n_chunks)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned i = 0; i < workers; ++i) pool.emplace_back(worker);
  }

  Counts sum;
  for (const Counts& p : partial) sum += p;
  return sum;
}

}  // namespace

CountsTable run_correlation(const ExperimentConfig& config, std::uint64_t n_trials, std::uint64_t seed,
                            const RunOptions& options) {
  config.validate();
  require(n_trials >= 1, ErrorCode::kInvalidArgument, "correlation run: n_trials must be at least 1");
  CountsTable table{MeasurementMode::kCorrelation, {}};
  const auto& delays = config.timing.storage_delays;
  for (std::size_t i = 0; i < delays.size(); ++i) {
    const TrialKernel kernel(config, delays[i]);
    Counts c = run_chunked(n_trials, seed, kCorrelationStream + i, options,
                           [&](std::uint64_t count, RngStream& rng) {
                             Counts part;
                             for (std::uint64_t k = 0; k < count; ++k) part.add(kernel.run(rng));
                             return part;
                           });
    c.storage_time = delays[i];
    c.n_cycles = 0;
    c.read_available = true;
    table.delays.push_back(c);
  }
  return table;
}

CountsTable run_feedback(const ExperimentConfig& config, std::uint64_t n_cycles, std::uint64_t seed,
                         const RunOptions& options) {
  config.validate();
  require(n_cycles >= 1, ErrorCode::kInvalidArgument, "feedback run: n_cycles must be at least 1");
  CountsTable table{MeasurementMode::kFeedback, {}};
  const std::uint64_t attempts = config.timing.attempts_per_cycle();
  const auto& delays = config.timing.storage_delays;
  for (std::size_t i = 0; i < delays.size(); ++i) {
    const TrialKernel kernel(config, delays[i]);
    Counts c = run_chunked(n_cycles, seed, kFeedbackStream + i, options,
                           [&](std::uint64_t count, RngStream& rng) {
                             Counts part;
                             part.read_available = false;
                             for (std::uint64_t k = 0; k < count; ++k) {
                               ++part.n_cycles;
                               for (std::uint64_t a = 0; a < attempts; ++a) {
                                 ++part.n_trials;
                                 const auto w = kernel.sample_write(rng);
                                 if (!w.click) continue;
                                 // Storage time runs from the heralding click.
                                 ++part.n_write;
                                 bool d1 = false, d2 = false;
                                 kernel.sample_read(w.pairs, rng, d1, d2);
                                 if (d1 || d2) ++part.n_coincidence;
                                 if (d1) ++part.n_d1;
                                 if (d2) ++part.n_d2;
                                 if (d1 && d2) ++part.n_d12;
                                 break;
                               }
                             }
                             return part;
                           });
    c.storage_time = delays[i];
    c.read_available = false;
    table.delays.push_back(c);
  }
  return table;
}

CountsTable run(const ExperimentConfig& config, std::uint64_t n, std::uint64_t seed, const RunOptions& options) {
  return config.mode == MeasurementMode::kFeedback ? run_feedback(config, n, seed, options)
                                                   : run_correlation(config, n, seed, options);
}

double signal_click_probability(double mu, double efficiency) {
  return mu * efficiency / (1.0 + mu * efficiency);
}

}  // namespace qmem::sim
