// SPDX-License-Identifier: Apache-2.0
//
// Detector event streams and their reduction to coincidence tallies.
//
// Text format: CSV with header `channel,timestamp_ns`, channel one of W, D1,
// D2, S, LF line endings. Binary format: the 8-byte magic `QMEMEVT1`, then
// packed little-endian records of (u8 channel code, u64 timestamp_ns) with
// codes 0=W, 1=D1, 2=D2, 3=S.
#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "simkernel.hpp"

namespace qmem::ingest {

enum class Channel : std::uint8_t { kWriteOut = 0, kReadOutD1 = 1, kReadOutD2 = 2, kSync = 3 };

struct EventRecord {
  Channel channel = Channel::kSync;
  std::uint64_t timestamp_ns = 0;
  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

enum class Format { kCsv, kBinary };

inline constexpr std::string_view kBinaryMagic = "QMEMEVT1";

/// Format is detected from the magic prefix. Errors name the line (CSV) or
/// byte offset (binary) of the offending record.
std::vector<EventRecord> parse_events(std::string_view data);
std::vector<EventRecord> read_events(const std::filesystem::path& path);

std::string serialize_events(std::span<const EventRecord> events, Format format);
void write_events(const std::filesystem::path& path, std::span<const EventRecord> events, Format format);

struct CoincidenceCounts {
  sim::Counts counts;
  std::uint64_t piled_up = 0;  // write clicks dropped because their gate overlapped an open one
};

/// Single-pass reduction. A write-out click opens a gate
/// [t_w + delay - window, t_w + delay + window]; D1/D2 clicks inside it are
/// its conditional read-outs. Gates never overlap: a write whose gate would
/// start before the open one ends is dropped. Each Sync marks one trial.
/// Unconditional reads are clusters of D clicks no wider than `window`.
class CoincidenceCounter {
 public:
  CoincidenceCounter(std::uint64_t window_ns, std::uint64_t delay_ns);

  void feed(std::span<const EventRecord> events);
  /// Closes pending gates; further feeding is an error.
  CoincidenceCounts finish();

 private:
  struct Gate {
    std::uint64_t begin;
    std::uint64_t end;
    bool d1 = false;
    bool d2 = false;
  };

  void close_gates_before(std::uint64_t t);
  void close(const Gate& gate);

  std::uint64_t window_;
  std::uint64_t delay_;
  std::deque<Gate> gates_;
  std::deque<EventRecord> recent_reads_;  // only kept while delay < window
  std::uint64_t last_gate_end_ = 0;
  bool have_gate_ = false;
  std::uint64_t cluster_start_ = 0;
  bool have_cluster_ = false;
  std::uint64_t last_timestamp_ = 0;
  bool finished_ = false;
  CoincidenceCounts result_;
};

CoincidenceCounts coincidences(std::span<const EventRecord> events, std::uint64_t window_ns, std::uint64_t delay_ns);

/// Simulates correlation-mode trials and renders them as an event stream:
/// trial i occupies [i * slot, (i + 1) * slot) with a Sync and the write
/// click at its start and read clicks at start + delay. Also returns the
/// directly tallied counts for the same trials.
struct SimulatedStream {
  std::vector<EventRecord> events;
  sim::Counts counts;
};

SimulatedStream simulate_events(const sim::ExperimentConfig& config, std::uint64_t n_trials, std::uint64_t seed,
                                double storage_time, std::uint64_t slot_ns);

}  // namespace qmem::ingest
