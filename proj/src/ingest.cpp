// SPDX-License-Identifier: Apache-2.0
#include "ingest.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "error.hpp"

namespace qmem::ingest {

namespace {

constexpr std::size_t kRecordSize = 9;

[[noreturn]] void parse_error(const std::string& where, const std::string& what) {
  fail(ErrorCode::kParse, where + ": " + what);
}

std::string line_ref(std::size_t line) { return "line " + std::to_string(line); }
std::string byte_ref(std::size_t offset) { return "byte offset " + std::to_string(offset); }

std::string_view channel_name(Channel c) {
  switch (c) {
    case Channel::kWriteOut: return "W";
    case Channel::kReadOutD1: return "D1";
    case Channel::kReadOutD2: return "D2";
    case Channel::kSync: return "S";
  }
  return "?";
}

std::vector<EventRecord> parse_csv(std::string_view data) {
  std::vector<EventRecord> events;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::uint64_t last = 0;

  while (pos < data.size()) {
    std::size_t eol = data.find('\n', pos);
    if (eol == std::string_view::npos) eol = data.size();
    std::string_view line = data.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (!header_seen) {
      if (line != "channel,timestamp_ns") parse_error(line_ref(line_no), "expected header 'channel,timestamp_ns'");
      header_seen = true;
      continue;
    }
    if (line.empty()) {
      if (pos >= data.size()) break;
      parse_error(line_ref(line_no), "empty record");
    }
    const std::size_t comma = line.find(',');
    if (comma == std::string_view::npos) parse_error(line_ref(line_no), "expected 'channel,timestamp_ns'");
    const std::string_view name = line.substr(0, comma);
    const std::string_view stamp = line.substr(comma + 1);

    EventRecord rec;
    if (name == "W")
      rec.channel = Channel::kWriteOut;
    else if (name == "D1")
      rec.channel = Channel::kReadOutD1;
    else if (name == "D2")
      rec.channel = Channel::kReadOutD2;
    else if (name == "S")
      rec.channel = Channel::kSync;
    else
      parse_error(line_ref(line_no), "unknown channel '" + std::string(name) + "'");

    const auto [ptr, ec] = std::from_chars(stamp.data(), stamp.data() + stamp.size(), rec.timestamp_ns);
    if (ec != std::errc() || ptr != stamp.data() + stamp.size() || stamp.empty())
      parse_error(line_ref(line_no), "invalid timestamp '" + std::string(stamp) + "'");
    if (!events.empty() && rec.timestamp_ns < last)
      parse_error(line_ref(line_no), "timestamp " + std::to_string(rec.timestamp_ns) + " precedes " +
                                         std::to_string(last));
    last = rec.timestamp_ns;
    events.push_back(rec);
  }
  return events;
}

std::vector<EventRecord> parse_binary(std::string_view data) {
  std::vector<EventRecord> events;
  std::size_t offset = kBinaryMagic.size();
  const std::size_t payload = data.size() - offset;
  events.reserve(payload / kRecordSize);
  std::uint64_t last = 0;
  while (offset < data.size()) {
    if (data.size() - offset < kRecordSize) parse_error(byte_ref(offset), "truncated record");
    const auto code = static_cast<std::uint8_t>(data[offset]);
    if (code > 3) parse_error(byte_ref(offset), "unknown channel code " + std::to_string(code));
    std::uint64_t t = 0;
    for (int b = 7; b >= 0; --b) t = (t << 8) | static_cast<std::uint8_t>(data[offset + 1 + static_cast<std::size_t>(b)]);
    if (!events.empty() && t < last)
      parse_error(byte_ref(offset), "timestamp " + std::to_string(t) + " precedes " + std::to_string(last));
    last = t;
    events.push_back({static_cast<Channel>(code), t});
    offset += kRecordSize;
  }
  return events;
}

}  // namespace

std::vector<EventRecord> parse_events(std::string_view data) {
  if (data.empty()) return {};
  if (data.starts_with(kBinaryMagic)) return parse_binary(data);
  return parse_csv(data);
}

std::vector<EventRecord> read_events(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_events(buf.str());
}

std::string serialize_events(std::span<const EventRecord> events, Format format) {
  std::string out;
  if (format == Format::kCsv) {
    out = "channel,timestamp_ns\n";
    for (const auto& e : events) {
      out += channel_name(e.channel);
      out += ',';
      out += std::to_string(e.timestamp_ns);
      out += '\n';
    }
    return out;
  }
  out.reserve(kBinaryMagic.size() + events.size() * kRecordSize);
  out.append(kBinaryMagic);
  for (const auto& e : events) {
    out.push_back(static_cast<char>(e.channel));
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((e.timestamp_ns >> (8 * b)) & 0xff));
  }
  return out;
}

void write_events(const std::filesystem::path& path, std::span<const EventRecord> events, Format format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  const std::string data = serialize_events(events, format);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

CoincidenceCounter::CoincidenceCounter(std::uint64_t window_ns, std::uint64_t delay_ns)
    : window_(window_ns), delay_(delay_ns) {
  if (window_ns == 0) fail(ErrorCode::kInvalidArgument, "coincidences: window must be positive");
  result_.counts.storage_time = static_cast<double>(delay_ns) / 1e9;
}

void CoincidenceCounter::close(const Gate& g) {
  auto& c = result_.counts;
  if (g.d1 || g.d2) ++c.n_coincidence;
  if (g.d1) ++c.n_d1;
  if (g.d2) ++c.n_d2;
  if (g.d1 && g.d2) ++c.n_d12;
}

void CoincidenceCounter::close_gates_before(std::uint64_t t) {
  while (!gates_.empty() && gates_.front().end < t) {
    close(gates_.front());
    gates_.pop_front();
  }
}

void CoincidenceCounter::feed(std::span<const EventRecord> events) {
  if (finished_) fail(ErrorCode::kInvalidArgument, "coincidences: counter already finished");
  auto& c = result_.counts;
  for (const auto& e : events) {
    const std::uint64_t t = e.timestamp_ns;
    if (t < last_timestamp_) fail(ErrorCode::kParse, "coincidences: timestamps must be non-decreasing");
    last_timestamp_ = t;
    close_gates_before(t);
    switch (e.channel) {
      case Channel::kSync:
        ++c.n_trials;
        break;
      case Channel::kWriteOut: {
        const std::uint64_t centre = t + delay_;
        const std::uint64_t begin = centre >= window_ ? centre - window_ : 0;
        const std::uint64_t end = centre + window_;
        if (have_gate_ && begin <= last_gate_end_) {
          ++result_.piled_up;
          break;
        }
        Gate gate{begin, end};
        // Clicks already seen that fall inside a gate opening before t.
        for (const auto& r : recent_reads_) {
          if (r.timestamp_ns >= begin) (r.channel == Channel::kReadOutD1 ? gate.d1 : gate.d2) = true;
        }
        gates_.push_back(gate);
        last_gate_end_ = end;
        have_gate_ = true;
        ++c.n_write;
        break;
      }
      case Channel::kReadOutD1:
      case Channel::kReadOutD2: {
        if (!gates_.empty() && gates_.front().begin <= t) {
          (e.channel == Channel::kReadOutD1 ? gates_.front().d1 : gates_.front().d2) = true;
        }
        if (delay_ < window_) {
          while (!recent_reads_.empty() && recent_reads_.front().timestamp_ns + window_ - delay_ < t)
            recent_reads_.pop_front();
          recent_reads_.push_back(e);
        }
        if (!have_cluster_ || t > cluster_start_ + window_) {
          cluster_start_ = t;
          have_cluster_ = true;
          ++c.n_read;
        }
        break;
      }
    }
  }
}

CoincidenceCounts CoincidenceCounter::finish() {
  if (!finished_) {
    for (const auto& g : gates_) close(g);
    gates_.clear();
    finished_ = true;
  }
  return result_;
}

CoincidenceCounts coincidences(std::span<const EventRecord> events, std::uint64_t window_ns, std::uint64_t delay_ns) {
  CoincidenceCounter counter(window_ns, delay_ns);
  counter.feed(events);
  return counter.finish();
}

SimulatedStream simulate_events(const sim::ExperimentConfig& config, std::uint64_t n_trials, std::uint64_t seed,
                                double storage_time, std::uint64_t slot_ns) {
  config.validate();
  const auto delay_ns = static_cast<std::uint64_t>(std::llround(storage_time * 1e9));
  if (n_trials == 0) fail(ErrorCode::kInvalidArgument, "event export: n_trials must be at least 1");
  if (delay_ns >= slot_ns) fail(ErrorCode::kInvalidArgument, "event export: delay must be shorter than the slot");

  SimulatedStream out;
  out.counts.storage_time = storage_time;
  const sim::TrialKernel kernel(config, storage_time);
  const sim::RunOptions defaults;
  const std::uint64_t chunk = defaults.chunk_size;
  // Same substreams as sim::run_correlation uses for its first delay.
  std::uint64_t index = 0;
  for (std::uint64_t c = 0; index < n_trials; ++c) {
    RngStream rng = RngStream::substream(seed, 0, c);
    const std::uint64_t count = std::min(chunk, n_trials - index);
    for (std::uint64_t k = 0; k < count; ++k, ++index) {
      const sim::TrialOutcome o = kernel.run(rng);
      out.counts.add(o);
      const std::uint64_t start = index * slot_ns;
      out.events.push_back({Channel::kSync, start});
      if (o.write_click) out.events.push_back({Channel::kWriteOut, start});
      if (o.readout_click_d1) out.events.push_back({Channel::kReadOutD1, start + delay_ns});
      if (o.readout_click_d2) out.events.push_back({Channel::kReadOutD2, start + delay_ns});
    }
  }
  return out;
}

}  // namespace qmem::ingest
